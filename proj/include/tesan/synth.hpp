// Synthetic journey generator: planted cluster co-occurrence (home groups
// plus cross-group noise) and planted temporal motifs (a code occurrence
// schedules a follow-up visit at a characteristic gap).
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tesan/common.hpp"
#include "tesan/journeys.hpp"

namespace tesan {

struct Range {
    int lo = 1, hi = 1;
    bool contains(int v) const { return lo <= v && v <= hi; }
};

/// Every occurrence of code_a in a base visit schedules a new visit holding
/// just code_b at gap_days +/- 1 later. code_b may equal code_a.
struct MotifPair {
    std::string code_a, code_b;
    int gap_days = 1;
};

struct SynthConfig {
    int n_groups = 2;
    int concepts_per_group = 10;
    int n_patients = 100;
    Range visits_per_patient{5, 10};
    Range codes_per_visit{1, 3};
    Range inter_visit_gap{15, 45};
    std::vector<MotifPair> motif_pairs;
    double cross_group_noise = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_groups < 1) throw Error("n_groups must be >= 1");
        if (concepts_per_group < 1) throw Error("concepts_per_group must be >= 1");
        if (n_patients < 1) throw Error("n_patients must be >= 1");
        if (visits_per_patient.lo < 1 || visits_per_patient.lo > visits_per_patient.hi)
            throw Error("visits_per_patient range is empty");
        if (codes_per_visit.lo < 1 || codes_per_visit.lo > codes_per_visit.hi)
            throw Error("codes_per_visit range is empty");
        if (inter_visit_gap.lo < 0 || inter_visit_gap.lo > inter_visit_gap.hi)
            throw Error("inter_visit_gap range is empty");
        if (cross_group_noise < 0.0 || cross_group_noise > 1.0)
            throw Error("cross_group_noise must be in [0,1]");
        if (codes_per_visit.hi > concepts_per_group)
            throw Error("group too small for codes_per_visit: " +
                        std::to_string(concepts_per_group) + " concepts < " +
                        std::to_string(codes_per_visit.hi));
        if (cross_group_noise > 0.0 && n_groups < 2)
            throw Error("cross_group_noise requires >= 2 groups");
        for (const auto& m : motif_pairs)
            if (m.gap_days < 1) throw Error("motif gap_days must be >= 1");
    }
};

inline std::string synth_group(int group) { return "g" + std::to_string(group); }

inline std::string synth_code(int group, int idx) {
    std::string k = std::to_string(idx);
    if (k.size() < 2) k.insert(0, 2 - k.size(), '0');
    return synth_group(group) + "c" + k;
}

struct SynthOutput {
    std::vector<PatientJourney> journeys;
    std::map<std::string, std::string> truth;  // code -> group label
};

namespace detail {

inline std::string synth_patient_id(int i) {
    std::string k = std::to_string(i);
    if (k.size() < 6) k.insert(0, 6 - k.size(), '0');
    return "p" + k;
}

}  // namespace detail

/// Deterministic per seed: each patient draws from its own derived stream and
/// patients are emitted in id order. Visit-count ranges are pre-motif counts;
/// motif follow-ups add visits.
inline SynthOutput generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<std::vector<std::string>> group_codes(static_cast<std::size_t>(cfg.n_groups));
    SynthOutput out;
    for (int g = 0; g < cfg.n_groups; ++g)
        for (int k = 0; k < cfg.concepts_per_group; ++k) {
            group_codes[static_cast<std::size_t>(g)].push_back(synth_code(g, k));
            out.truth[synth_code(g, k)] = synth_group(g);
        }
    for (const auto& m : cfg.motif_pairs) {
        if (!out.truth.count(m.code_a)) throw Error("unknown motif code '" + m.code_a + "'");
        if (!out.truth.count(m.code_b)) throw Error("unknown motif code '" + m.code_b + "'");
    }

    out.journeys.reserve(static_cast<std::size_t>(cfg.n_patients));
    for (int pi = 0; pi < cfg.n_patients; ++pi) {
        Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(pi));
        const int home = pi % cfg.n_groups;

        PatientJourney pj;
        pj.patient_id = detail::synth_patient_id(pi);
        const int n_visits =
            static_cast<int>(rng.next_int(cfg.visits_per_patient.lo, cfg.visits_per_patient.hi));
        std::int64_t day = 0;
        for (int v = 0; v < n_visits; ++v) {
            if (v > 0) day += rng.next_int(cfg.inter_visit_gap.lo, cfg.inter_visit_gap.hi);
            Visit visit;
            visit.day = day;
            const int size =
                static_cast<int>(rng.next_int(cfg.codes_per_visit.lo, cfg.codes_per_visit.hi));
            while (static_cast<int>(visit.codes.size()) < size) {
                int g = home;
                if (cfg.cross_group_noise > 0.0 && rng.next_double() < cfg.cross_group_noise) {
                    // uniform over the other groups' codes
                    const auto pick = rng.next_below(static_cast<std::uint64_t>(
                        (cfg.n_groups - 1) * cfg.concepts_per_group));
                    g = static_cast<int>(pick) / cfg.concepts_per_group;
                    if (g >= home) ++g;
                    const int k = static_cast<int>(pick) % cfg.concepts_per_group;
                    const std::string& code = group_codes[static_cast<std::size_t>(g)]
                                                         [static_cast<std::size_t>(k)];
                    if (std::find(visit.codes.begin(), visit.codes.end(), code) ==
                        visit.codes.end())
                        visit.codes.push_back(code);
                    continue;
                }
                const auto k = rng.next_below(static_cast<std::uint64_t>(cfg.concepts_per_group));
                const std::string& code =
                    group_codes[static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
                if (std::find(visit.codes.begin(), visit.codes.end(), code) == visit.codes.end())
                    visit.codes.push_back(code);
            }
            std::sort(visit.codes.begin(), visit.codes.end());
            pj.visits.push_back(std::move(visit));
        }

        // motif pass over the base visits only (a follow-up never chains)
        const std::size_t base_count = pj.visits.size();
        for (const auto& m : cfg.motif_pairs) {
            for (std::size_t v = 0; v < base_count; ++v) {
                const auto& codes = pj.visits[v].codes;
                if (std::find(codes.begin(), codes.end(), m.code_a) == codes.end()) continue;
                const std::int64_t jitter = rng.next_int(-1, 1);
                Visit follow;
                follow.day = pj.visits[v].day + std::max<std::int64_t>(1, m.gap_days + jitter);
                follow.codes.push_back(m.code_b);
                pj.visits.push_back(std::move(follow));
            }
        }
        std::stable_sort(pj.visits.begin(), pj.visits.end(),
                         [](const Visit& a, const Visit& b) { return a.day < b.day; });
        out.journeys.push_back(std::move(pj));
    }
    return out;
}

/// Writes the journey JSONL and ground-truth TSV; byte-identical per seed.
inline void generate_files(const SynthConfig& cfg, const std::string& journeys_path,
                           const std::string& truth_path) {
    SynthOutput out = generate(cfg);
    std::ofstream js(journeys_path, std::ios::trunc);
    if (!js) throw Error("cannot write '" + journeys_path + "'");
    for (const auto& pj : out.journeys) {
        nlohmann::json j;
        j["patient_id"] = pj.patient_id;
        nlohmann::json visits = nlohmann::json::array();
        for (const auto& v : pj.visits) {
            nlohmann::json jv;
            jv["day"] = v.day;
            jv["codes"] = v.codes;
            visits.push_back(std::move(jv));
        }
        j["visits"] = std::move(visits);
        js << j.dump() << '\n';
    }
    if (!js) throw Error("failed writing '" + journeys_path + "'");

    std::ofstream ts(truth_path, std::ios::trunc);
    if (!ts) throw Error("cannot write '" + truth_path + "'");
    for (const auto& kv : out.truth) ts << kv.first << '\t' << kv.second << '\n';
    if (!ts) throw Error("failed writing '" + truth_path + "'");
}

}  // namespace tesan
