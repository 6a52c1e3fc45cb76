#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "tesan/common.hpp"
#include "tesan/journeys.hpp"

using namespace tesan;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = "tesan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) +
               ".tmp";
        std::ofstream os(path);
        os << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("rng is deterministic and bounded", "[journeys][rng]") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c(42);
    for (int i = 0; i < 1000; ++i) {
        const double d = c.next_double();
        REQUIRE(d >= 0.0);
        REQUIRE(d < 1.0);
        const auto v = c.next_int(-3, 7);
        REQUIRE(v >= -3);
        REQUIRE(v <= 7);
    }

    SECTION("derived lanes differ from each other and the base") {
        Rng base(7);
        Rng lane0 = Rng::derive(7, 0);
        Rng lane1 = Rng::derive(7, 1);
        REQUIRE(lane0.next_u64() != lane1.next_u64());
        REQUIRE(Rng::derive(7, 0).next_u64() == Rng::derive(7, 0).next_u64());
        REQUIRE(base.next_u64() != Rng::derive(7, 0).next_u64());
    }

    SECTION("state round-trips") {
        Rng r(9);
        r.next_u64();
        const std::string s = r.state();
        const auto expect = r.next_u64();
        Rng r2(0);
        r2.set_state(s);
        REQUIRE(r2.next_u64() == expect);
        REQUIRE_THROWS_AS(r2.set_state("not a state"), Error);
    }

    SECTION("shuffle is a seeded permutation") {
        std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
        std::vector<int> w = v;
        Rng r1(3), r2(3);
        r1.shuffle(v);
        r2.shuffle(w);
        REQUIRE(v == w);
        std::sort(v.begin(), v.end());
        REQUIRE(v == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
    }
}

TEST_CASE("date parsing follows the civil calendar", "[journeys][dates]") {
    REQUIRE(parse_date("1970-01-01") == 0);
    REQUIRE(parse_date("1970-01-02") == 1);
    REQUIRE(parse_date("1969-12-31") == -1);
    REQUIRE(parse_date("2000-03-01") - parse_date("2000-02-28") == 2);  // leap year
    REQUIRE(parse_date("2001-03-01") - parse_date("2001-02-28") == 1);
    REQUIRE_THROWS_AS(parse_date("2001-02-29"), Error);
    REQUIRE_THROWS_AS(parse_date("2001-13-01"), Error);
    REQUIRE_THROWS_AS(parse_date("2001-00-10"), Error);
    REQUIRE_THROWS_AS(parse_date("01-01-2001"), Error);
    REQUIRE_THROWS_AS(parse_date("2001/01/01"), Error);
    REQUIRE_THROWS_AS(parse_date("20010101"), Error);
}

TEST_CASE("journeys parse from day-stamped JSONL", "[journeys]") {
    TempFile f(R"({"patient_id":"p1","visits":[{"day":10,"codes":["b","a"]},{"day":3,"codes":["c"]}]}
{"patient_id":"p2","visits":[{"day":0,"codes":["a","a","b"]}]}
)");
    ParseStats stats;
    auto js = parse_journeys(f.path, 1, &stats);
    REQUIRE(js.size() == 2);
    REQUIRE(stats.journeys == 2);
    REQUIRE(stats.duplicate_codes_removed == 1);

    SECTION("visits are sorted by day and codes are deduped") {
        REQUIRE(js[0].patient_id == "p1");
        REQUIRE(js[0].visits[0].day == 3);
        REQUIRE(js[0].visits[1].day == 10);
        REQUIRE(js[0].visits[1].codes == std::vector<std::string>{"a", "b"});
        REQUIRE(js[1].visits[0].codes == std::vector<std::string>{"a", "b"});
    }

    SECTION("min_visits filters journeys and counts them") {
        ParseStats s2;
        auto filtered = parse_journeys(f.path, 2, &s2);
        REQUIRE(filtered.size() == 1);
        REQUIRE(s2.dropped_min_visits == 1);
    }
}

TEST_CASE("journeys parse from date-stamped JSONL", "[journeys]") {
    TempFile f(R"({"patient_id":"p1","visits":[{"date":"2020-01-10","codes":["a"]},{"date":"2020-01-03","codes":["b"]}]}
{"patient_id":"p2","visits":[{"date":"2020-02-01","codes":["c"]}]}
)");
    auto js = parse_journeys(f.path, 1);
    // earliest date across the file becomes day 0
    REQUIRE(js[0].visits[0].day == 0);
    REQUIRE(js[0].visits[1].day == 7);
    REQUIRE(js[1].visits[0].day == 29);
}

TEST_CASE("journey parse errors carry line numbers", "[journeys]") {
    SECTION("bad json") {
        TempFile f("{\"patient_id\":\"p1\",\"visits\":[{\"day\":1,\"codes\":[\"a\"]}]}\nnot json\n");
        REQUIRE_THROWS_WITH(parse_journeys(f.path, 1),
                            Catch::Matchers::ContainsSubstring("line 2"));
    }
    SECTION("negative day") {
        TempFile f(R"({"patient_id":"p1","visits":[{"day":-1,"codes":["a"]}]})");
        REQUIRE_THROWS_AS(parse_journeys(f.path, 1), Error);
    }
    SECTION("both day and date") {
        TempFile f(R"({"patient_id":"p1","visits":[{"day":1,"date":"2020-01-01","codes":["a"]}]})");
        REQUIRE_THROWS_AS(parse_journeys(f.path, 1), Error);
    }
    SECTION("neither day nor date") {
        TempFile f(R"({"patient_id":"p1","visits":[{"codes":["a"]}]})");
        REQUIRE_THROWS_AS(parse_journeys(f.path, 1), Error);
    }
    SECTION("mixed day and date across visits") {
        TempFile f(
            R"({"patient_id":"p1","visits":[{"day":1,"codes":["a"]},{"date":"2020-01-01","codes":["b"]}]})");
        REQUIRE_THROWS_AS(parse_journeys(f.path, 1), Error);
    }
    SECTION("mixed day and date across journeys") {
        TempFile f(R"({"patient_id":"p1","visits":[{"day":1,"codes":["a"]}]}
{"patient_id":"p2","visits":[{"date":"2020-01-01","codes":["b"]}]}
)");
        REQUIRE_THROWS_AS(parse_journeys(f.path, 1), Error);
    }
    SECTION("missing file") { REQUIRE_THROWS_AS(parse_journeys("no_such_file.jsonl", 1), Error); }
}

TEST_CASE("vocabulary orders by count then code", "[journeys][vocab]") {
    std::vector<PatientJourney> js(1);
    js[0].patient_id = "p";
    js[0].visits = {{0, {"b", "c"}}, {1, {"b", "a"}}, {2, {"b", "c"}}};
    auto vocab = build_vocabulary(js, 1);
    REQUIRE(vocab.size() == 3);
    REQUIRE(vocab.codes == std::vector<std::string>{"b", "c", "a"});
    REQUIRE(vocab.counts == std::vector<std::int64_t>{3, 2, 1});
    REQUIRE(vocab.id_of("b") == 0);
    REQUIRE(vocab.id_of("zzz") == -1);

    SECTION("min_count filters and can empty the vocabulary") {
        auto v2 = build_vocabulary(js, 2);
        REQUIRE(v2.size() == 2);
        REQUIRE_THROWS_WITH(build_vocabulary(js, 10),
                            Catch::Matchers::ContainsSubstring("empty vocabulary"));
    }

    SECTION("noise distribution is count^0.75 normalized") {
        double z = std::pow(3.0, 0.75) + std::pow(2.0, 0.75) + 1.0;
        REQUIRE(vocab.noise_probs[0] == Catch::Approx(std::pow(3.0, 0.75) / z));
        REQUIRE(vocab.noise_probs[2] == Catch::Approx(1.0 / z));
        REQUIRE(vocab.noise_cdf.back() == 1.0);
        for (std::size_t i = 1; i < vocab.noise_cdf.size(); ++i)
            REQUIRE(vocab.noise_cdf[i] >= vocab.noise_cdf[i - 1]);
    }

    SECTION("save/load round trip") {
        TempFile f("");
        save_vocabulary(vocab, f.path);
        auto loaded = load_vocabulary(f.path);
        REQUIRE(loaded.codes == vocab.codes);
        REQUIRE(loaded.counts == vocab.counts);
        REQUIRE(vocabulary_hash(loaded) == vocabulary_hash(vocab));
    }

    SECTION("load rejects malformed tables") {
        TempFile dup("a\t0\t5\na\t1\t3\n");
        REQUIRE_THROWS_AS(load_vocabulary(dup.path), Error);
        TempFile gap("a\t0\t5\nb\t2\t3\n");
        REQUIRE_THROWS_AS(load_vocabulary(gap.path), Error);
    }
}

TEST_CASE("flattening orders codes by id within a visit", "[journeys]") {
    std::vector<PatientJourney> js(1);
    js[0].visits = {{0, {"x", "b", "c"}}, {5, {"a"}}};
    // counts: all 1 -> alphabetical ids: a=0,b=1,c=2,x=3
    auto vocab = build_vocabulary(js, 1);
    auto seq = flatten_journey(js[0], vocab);
    REQUIRE(seq.ids == std::vector<std::int32_t>{1, 2, 3, 0});
    REQUIRE(seq.days == std::vector<std::int64_t>{0, 0, 0, 5});

    SECTION("out-of-vocabulary codes are dropped and counted") {
        Vocabulary small;
        small.codes = {"a", "b"};
        small.counts = {1, 1};
        small.code_to_id = {{"a", 0}, {"b", 1}};
        std::size_t dropped = 0;
        auto s2 = flatten_journey(js[0], small, &dropped);
        REQUIRE(dropped == 2);
        REQUIRE(s2.ids == std::vector<std::int32_t>{1, 0});
    }

    SECTION("a journey with nothing in vocabulary throws") {
        Vocabulary none;
        none.codes = {"zzz"};
        none.counts = {1};
        none.code_to_id = {{"zzz", 0}};
        REQUIRE_THROWS_AS(flatten_journey(js[0], none), Error);
    }
}

TEST_CASE("context windows clip at the edges and skip the target", "[journeys]") {
    FlatSequence seq;
    seq.ids = {0, 1, 2, 3, 4};
    seq.days = {0, 2, 4, 6, 8};
    auto samples = make_context_samples(seq, 2);
    REQUIRE(samples.size() == 5);
    REQUIRE(samples[0].target == 0);
    REQUIRE(samples[0].ctx_ids == std::vector<std::int32_t>{1, 2});
    REQUIRE(samples[2].ctx_ids == std::vector<std::int32_t>{0, 1, 3, 4});
    REQUIRE(samples[2].ctx_days == std::vector<std::int64_t>{0, 2, 6, 8});
    REQUIRE(samples[4].ctx_ids == std::vector<std::int32_t>{2, 3});

    SECTION("window must be positive") {
        REQUIRE_THROWS_AS(make_context_samples(seq, 0), Error);
    }
    SECTION("singleton sequences yield no samples") {
        FlatSequence one;
        one.ids = {0};
        one.days = {0};
        REQUIRE(make_context_samples(one, 2).empty());
    }
}

TEST_CASE("negative sampling avoids the target", "[journeys]") {
    Vocabulary vocab;
    vocab.codes = {"a", "b", "c", "d"};
    vocab.counts = {40, 30, 20, 10};
    for (int i = 0; i < 4; ++i) vocab.code_to_id[vocab.codes[i]] = i;
    vocab.noise_probs = {0.4, 0.3, 0.2, 0.1};
    vocab.noise_cdf = {0.4, 0.7, 0.9, 1.0};

    Rng rng(11);
    std::vector<std::size_t> counts(4, 0);
    for (int trial = 0; trial < 4000; ++trial) {
        auto negs = sample_negatives(vocab, 0, 2, rng);
        REQUIRE(negs.size() == 2);
        for (auto id : negs) {
            REQUIRE(id != 0);
            ++counts[static_cast<std::size_t>(id)];
        }
    }
    // conditional on excluding the target, expect roughly 0.5 : 0.33 : 0.17
    const double total = 8000.0;
    REQUIRE(counts[1] / total == Catch::Approx(0.5).margin(0.05));
    REQUIRE(counts[3] / total == Catch::Approx(1.0 / 6).margin(0.04));

    SECTION("r = 0 draws nothing") {
        Rng r2(1);
        REQUIRE(sample_negatives(vocab, 0, 0, r2).empty());
    }
    SECTION("a single-code vocabulary cannot provide negatives") {
        Vocabulary one;
        one.codes = {"a"};
        one.counts = {1};
        one.code_to_id = {{"a", 0}};
        one.noise_probs = {1.0};
        one.noise_cdf = {1.0};
        Rng r2(1);
        REQUIRE_THROWS_AS(sample_negatives(one, 0, 1, r2), Error);
    }
}

TEST_CASE("corpus assembly tracks the maximum interval", "[journeys]") {
    TempFile f(R"({"patient_id":"p1","visits":[{"day":0,"codes":["a","b"]},{"day":9,"codes":["c"]},{"day":100,"codes":["a"]}]}
{"patient_id":"p2","visits":[{"day":0,"codes":["zzz"]},{"day":1,"codes":["zzz"]}]}
)");
    auto js = parse_journeys(f.path, 1);
    std::vector<PatientJourney> vocab_js(js.begin(), js.begin() + 1);
    auto vocab = build_vocabulary(vocab_js, 1);  // p2's code is out of vocabulary

    auto corpus = build_corpus(js, vocab, 2);
    REQUIRE(corpus.samples.size() == 4);
    REQUIRE(corpus.max_interval == 100);  // window of 2 around 4 positions spans all days
    REQUIRE(corpus.oov_dropped == 2);
    REQUIRE(corpus.skipped_journeys == 1);
    for (const auto& s : corpus.samples) REQUIRE_FALSE(s.ctx_ids.empty());
}
