// Journey data model: JSONL ingestion, vocabulary construction, journey
// flattening, context-window sample generation and the negative-sampling
// noise distribution.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tesan/common.hpp"

namespace tesan {

/// One admission: a day stamp plus a set of unique concept codes.
struct Visit {
    std::int64_t day = 0;
    std::vector<std::string> codes;  // sorted, duplicates removed
};

/// Chronologically ordered visit sequence of one patient.
struct PatientJourney {
    std::string patient_id;
    std::vector<Visit> visits;  // non-decreasing by day
};

struct ParseStats {
    std::size_t journeys = 0;
    std::size_t duplicate_codes_removed = 0;
    std::size_t dropped_min_visits = 0;
};

namespace detail {

inline Visit parse_visit(const nlohmann::json& jv, std::size_t line_no, int& day_kind) {
    auto fail = [&](const std::string& what) {
        throw Error("parse error at line " + std::to_string(line_no) + ": " + what);
    };
    if (!jv.is_object()) fail("visit is not an object");
    const bool has_day = jv.contains("day");
    const bool has_date = jv.contains("date");
    if (has_day == has_date) fail("visit must carry exactly one of \"day\" or \"date\"");
    // day_kind: 0 unknown, 1 integer days, 2 calendar dates. One kind per file.
    const int kind = has_day ? 1 : 2;
    if (day_kind == 0) day_kind = kind;
    if (day_kind != kind) fail("file mixes \"day\" and \"date\" visit stamps");

    Visit v;
    if (has_day) {
        if (!jv["day"].is_number_integer()) fail("\"day\" is not an integer");
        v.day = jv["day"].get<std::int64_t>();
        if (v.day < 0) fail("\"day\" must be >= 0");
    } else {
        if (!jv["date"].is_string()) fail("\"date\" is not a string");
        try {
            v.day = parse_date(jv["date"].get<std::string>());
        } catch (const Error& e) {
            fail(e.what());
        }
    }
    if (!jv.contains("codes") || !jv["codes"].is_array()) fail("visit lacks a \"codes\" array");
    for (const auto& c : jv["codes"]) {
        if (!c.is_string()) fail("code is not a string");
        v.codes.push_back(c.get<std::string>());
    }
    return v;
}

}  // namespace detail

/// Reads one journey per JSONL line. Visits are sorted by day and duplicate
/// codes within a visit are removed (counted in stats). Journeys with fewer
/// than min_visits visits are dropped. Files mixing "day" and "date" stamps
/// are rejected; "date" stamps are converted to days since the earliest date
/// in the file.
inline std::vector<PatientJourney> parse_journeys(const std::string& path, int min_visits = 1,
                                                  ParseStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open journey file '" + path + "'");
    if (min_visits < 1) throw Error("min_visits must be >= 1");

    std::vector<PatientJourney> journeys;
    ParseStats local;
    int day_kind = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        auto fail = [&](const std::string& what) {
            throw Error("parse error at line " + std::to_string(line_no) + ": " + what);
        };
        if (!j.is_object()) fail("record is not an object");
        if (!j.contains("patient_id") || !j["patient_id"].is_string()) fail("missing \"patient_id\" string");
        if (!j.contains("visits") || !j["visits"].is_array()) fail("missing \"visits\" array");

        PatientJourney pj;
        pj.patient_id = j["patient_id"].get<std::string>();
        for (const auto& jv : j["visits"]) {
            Visit v = detail::parse_visit(jv, line_no, day_kind);
            const std::size_t before = v.codes.size();
            std::sort(v.codes.begin(), v.codes.end());
            v.codes.erase(std::unique(v.codes.begin(), v.codes.end()), v.codes.end());
            local.duplicate_codes_removed += before - v.codes.size();
            pj.visits.push_back(std::move(v));
        }
        if (pj.visits.empty()) fail("journey has no visits");
        std::stable_sort(pj.visits.begin(), pj.visits.end(),
                         [](const Visit& a, const Visit& b) { return a.day < b.day; });
        journeys.push_back(std::move(pj));
    }

    if (day_kind == 2) {
        std::int64_t earliest = std::numeric_limits<std::int64_t>::max();
        for (const auto& pj : journeys)
            for (const auto& v : pj.visits) earliest = std::min(earliest, v.day);
        for (auto& pj : journeys)
            for (auto& v : pj.visits) v.day -= earliest;
    }

    if (min_visits > 1) {
        auto it = std::remove_if(journeys.begin(), journeys.end(), [&](const PatientJourney& pj) {
            return pj.visits.size() < static_cast<std::size_t>(min_visits);
        });
        local.dropped_min_visits = static_cast<std::size_t>(journeys.end() - it);
        journeys.erase(it, journeys.end());
    }

    local.journeys = journeys.size();
    if (stats) *stats = local;
    return journeys;
}

/// Code <-> id bijection plus counts and the negative-sampling noise
/// distribution P(c) proportional to count^power.
struct Vocabulary {
    std::vector<std::string> codes;       // index == id
    std::vector<std::int64_t> counts;     // per id
    std::vector<double> noise_probs;      // P(c), sums to 1
    std::vector<double> noise_cdf;        // inclusive prefix sums of noise_probs
    std::unordered_map<std::string, std::int32_t> code_to_id;

    std::int32_t size() const { return static_cast<std::int32_t>(codes.size()); }

    std::int32_t id_of(const std::string& code) const {
        auto it = code_to_id.find(code);
        return it == code_to_id.end() ? -1 : it->second;
    }
};

namespace detail {

inline void build_noise_distribution(Vocabulary& vocab, double noise_power) {
    double total = 0.0;
    vocab.noise_probs.resize(vocab.codes.size());
    for (std::size_t i = 0; i < vocab.counts.size(); ++i) {
        vocab.noise_probs[i] = std::pow(static_cast<double>(vocab.counts[i]), noise_power);
        total += vocab.noise_probs[i];
    }
    vocab.noise_cdf.resize(vocab.noise_probs.size());
    double run = 0.0;
    for (std::size_t i = 0; i < vocab.noise_probs.size(); ++i) {
        vocab.noise_probs[i] /= total;
        run += vocab.noise_probs[i];
        vocab.noise_cdf[i] = run;
    }
    vocab.noise_cdf.back() = 1.0;
}

}  // namespace detail

/// Counts codes over all visits, drops those seen fewer than min_count times,
/// assigns ids by descending frequency (ties by code), and builds
/// P(c) proportional to count^noise_power.
inline Vocabulary build_vocabulary(const std::vector<PatientJourney>& journeys, std::int64_t min_count,
                                   double noise_power = 0.75) {
    if (min_count < 1) throw Error("min_count must be >= 1");
    std::map<std::string, std::int64_t> freq;  // ordered: deterministic tie-break
    for (const auto& pj : journeys)
        for (const auto& v : pj.visits)
            for (const auto& c : v.codes) ++freq[c];

    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [code, n] : freq)
        if (n >= min_count) kept.emplace_back(code, n);
    if (kept.empty()) throw Error("empty vocabulary: no code occurs at least " + std::to_string(min_count) + " times");

    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary vocab;
    for (auto& [code, n] : kept) {
        vocab.code_to_id.emplace(code, vocab.size());
        vocab.codes.push_back(code);
        vocab.counts.push_back(n);
    }
    detail::build_noise_distribution(vocab, noise_power);
    return vocab;
}

/// TSV "code<TAB>id<TAB>count", sorted by id.
inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write vocabulary file '" + path + "'");
    for (std::int32_t id = 0; id < vocab.size(); ++id)
        out << vocab.codes[id] << '\t' << id << '\t' << vocab.counts[id] << '\n';
}

inline Vocabulary load_vocabulary(const std::string& path, double noise_power = 0.75) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open vocabulary file '" + path + "'");
    std::vector<std::pair<std::string, std::int64_t>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw Error("vocabulary file '" + path + "' line " + std::to_string(line_no) + ": expected code<TAB>id<TAB>count");
        const std::string code = line.substr(0, t1);
        const std::int64_t id = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
        const std::int64_t count = std::stoll(line.substr(t2 + 1));
        if (id != static_cast<std::int64_t>(rows.size()))
            throw Error("vocabulary file '" + path + "' line " + std::to_string(line_no) + ": ids must be dense and sorted");
        rows.emplace_back(code, count);
    }
    if (rows.empty()) throw Error("empty vocabulary file '" + path + "'");

    Vocabulary vocab;
    for (auto& [code, n] : rows) {
        if (vocab.code_to_id.count(code)) throw Error("vocabulary file '" + path + "': duplicate code '" + code + "'");
        vocab.code_to_id.emplace(code, vocab.size());
        vocab.codes.push_back(code);
        vocab.counts.push_back(n);
    }
    detail::build_noise_distribution(vocab, noise_power);
    return vocab;
}

/// Canonical fingerprint of a vocabulary (codes, ids and counts).
inline std::uint64_t vocabulary_hash(const Vocabulary& vocab) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int32_t id = 0; id < vocab.size(); ++id) {
        h = fnv1a(vocab.codes[id], h);
        h = fnv1a("\t" + std::to_string(id) + "\t" + std::to_string(vocab.counts[id]) + "\n", h);
    }
    return h;
}

/// A journey with visits concatenated in day order; parallel id/day arrays.
struct FlatSequence {
    std::vector<std::int32_t> ids;
    std::vector<std::int64_t> days;
};

/// Concatenates visits chronologically; codes within a visit are ordered by
/// id and codes absent from the vocabulary are dropped (counted if requested).
inline FlatSequence flatten_journey(const PatientJourney& journey, const Vocabulary& vocab,
                                    std::size_t* oov_dropped = nullptr) {
    if (journey.visits.empty()) throw Error("journey has no visits");
    FlatSequence seq;
    for (const auto& v : journey.visits) {
        std::vector<std::int32_t> ids;
        for (const auto& code : v.codes) {
            const std::int32_t id = vocab.id_of(code);
            if (id < 0) {
                if (oov_dropped) ++*oov_dropped;
                continue;
            }
            ids.push_back(id);
        }
        std::sort(ids.begin(), ids.end());
        for (std::int32_t id : ids) {
            seq.ids.push_back(id);
            seq.days.push_back(v.day);
        }
    }
    if (seq.ids.empty()) throw Error("empty sequence");
    return seq;
}

/// One skip-gram style training example: a target concept and the ids and
/// day stamps of the surrounding window (target position excluded).
struct ContextSample {
    std::int32_t target = 0;
    std::vector<std::int32_t> ctx_ids;
    std::vector<std::int64_t> ctx_days;
};

/// Windows of +-window positions around each position of the flattened
/// sequence, clipped at the ends. Positions without context yield no sample.
inline std::vector<ContextSample> make_context_samples(const FlatSequence& seq, int window) {
    if (window < 1) throw Error("window must be >= 1");
    const std::size_t n = seq.ids.size();
    std::vector<ContextSample> samples;
    if (n < 2) return samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ContextSample s;
        s.target = seq.ids[i];
        const std::size_t lo = i >= static_cast<std::size_t>(window) ? i - window : 0;
        const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(window));
        for (std::size_t p = lo; p <= hi; ++p) {
            if (p == i) continue;
            s.ctx_ids.push_back(seq.ids[p]);
            s.ctx_days.push_back(seq.days[p]);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

/// r i.i.d. draws from the noise distribution; draws equal to the target are
/// rejected and redrawn.
inline std::vector<std::int32_t> sample_negatives(const Vocabulary& vocab, std::int32_t target, int r, Rng& rng) {
    if (r < 0) throw Error("negative sample count must be >= 0");
    std::vector<std::int32_t> out;
    if (r == 0) return out;
    if (vocab.size() < 2) throw Error("no negatives available: vocabulary has fewer than 2 entries");
    out.reserve(static_cast<std::size_t>(r));
    while (out.size() < static_cast<std::size_t>(r)) {
        const double u = rng.next_double();
        const auto it = std::upper_bound(vocab.noise_cdf.begin(), vocab.noise_cdf.end(), u);
        const auto id = static_cast<std::int32_t>(std::min<std::ptrdiff_t>(
            it - vocab.noise_cdf.begin(), vocab.size() - 1));
        if (id == target) continue;
        out.push_back(id);
    }
    return out;
}

/// All context samples of a corpus plus bookkeeping needed downstream.
struct Corpus {
    std::vector<ContextSample> samples;
    std::int64_t max_interval = 0;   // largest day span inside any window
    std::size_t oov_dropped = 0;
    std::size_t skipped_journeys = 0;  // empty after vocabulary filtering
};

inline Corpus build_corpus(const std::vector<PatientJourney>& journeys, const Vocabulary& vocab, int window) {
    Corpus corpus;
    for (const auto& pj : journeys) {
        FlatSequence seq;
        try {
            seq = flatten_journey(pj, vocab, &corpus.oov_dropped);
        } catch (const Error&) {
            ++corpus.skipped_journeys;
            continue;
        }
        auto samples = make_context_samples(seq, window);
        for (auto& s : samples) {
            if (!s.ctx_days.empty())
                corpus.max_interval = std::max(corpus.max_interval, s.ctx_days.back() - s.ctx_days.front());
            corpus.samples.push_back(std::move(s));
        }
    }
    return corpus;
}

}  // namespace tesan
