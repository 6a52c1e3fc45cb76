// Acceptance harness: prints one [PASS]/[FAIL] line per criterion and exits
// nonzero if any failed. Progress goes to stderr, verdicts to stdout.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../oracle.hpp"
#include "tesan/attention.hpp"
#include "tesan/eval.hpp"
#include "tesan/gradcheck.hpp"
#include "tesan/journeys.hpp"
#include "tesan/loss.hpp"
#include "tesan/synth.hpp"
#include "tesan/training.hpp"

using namespace tesan;

namespace {

bool g_all_pass = true;

void report(bool pass, const std::string& name, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << std::endl;
    if (!pass) g_all_pass = false;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelParams<double> random_params(int d, int vocab, std::int64_t d_max, Mode mode, Rng& rng) {
    ModelParams<double> p = init_params<double>(d, vocab, d_max, mode, false, rng);
    for_each_tensor(p, [&](const char*, Mat<double>& t) {
        for (Eigen::Index c = 0; c < t.cols(); ++c)
            for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = rng.next_real(-0.6, 0.6);
    });
    return p;
}

ContextSample random_sample(int m, int vocab, std::int64_t day_hi, Rng& rng) {
    ContextSample s;
    s.target = static_cast<std::int32_t>(rng.next_int(0, vocab - 1));
    for (int i = 0; i < m; ++i) {
        s.ctx_ids.push_back(static_cast<std::int32_t>(rng.next_int(0, vocab - 1)));
        s.ctx_days.push_back(rng.next_int(0, day_hi));
    }
    return s;
}

constexpr Mode kModes[] = {Mode::TeSA, Mode::MultiSA, Mode::Interval, Mode::NormalSA};

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients vs central finite differences
void check_gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = gradcheck_suite(200, 424242u, 1e-4);
    const double secs = seconds_since(t0);
    const bool pass = rep.configs_run == 200 && rep.max_rel_err < 1e-4 && secs < 60.0;
    report(pass, "gradient-suite",
           "max rel err " + fmt(rep.max_rel_err, 3) + " over " + std::to_string(rep.configs_run) +
               " configs (threshold 1e-4) in " + fmt(secs, 3) + "s (budget 60s)");
}

// ---------------------------------------------------------------------------
// criterion 2: softmax normalization/shift-invariance, gate boundedness
void check_softmax_gate() {
    Rng rng(9001);
    double worst_norm = 0.0, worst_shift = 0.0;
    int trials = 0;
    for (; trials < 1000; ++trials) {
        const int d = rng.next_int(1, 4);
        const int n = rng.next_int(1, 6);
        Mat<double> s(d, n);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < n; ++c) s(r, c) = rng.next_real(-40, 40);
        const Mat<double> p = multidim_softmax(s);
        for (int r = 0; r < d; ++r)
            worst_norm = std::max(worst_norm, std::abs(p.row(r).sum() - 1.0));
        Mat<double> shifted = s;
        shifted.array() += rng.next_real(-50, 50);
        worst_shift =
            std::max(worst_shift, (multidim_softmax(shifted) - p).cwiseAbs().maxCoeff());
    }

    bool gate_ok = true;
    int gate_trials = 0;
    for (; gate_trials < 1000; ++gate_trials) {
        const Mode mode = kModes[gate_trials % 4];
        auto p = random_params(3, 8, 6, mode, rng);
        TesaTrace<double> tr;
        auto sample = random_sample(rng.next_int(2, 5), 8, 12, rng);
        tesan_forward_traced(sample.ctx_ids, sample.ctx_days, p, tr);
        gate_ok = gate_ok && (tr.gate.array() > 0.0).all() && (tr.gate.array() < 1.0).all();
        const Mat<double> lo = tr.s.cwiseMin(tr.c);
        const Mat<double> hi = tr.s.cwiseMax(tr.c);
        gate_ok = gate_ok && (tr.u.array() >= lo.array() - 1e-12).all() &&
                  (tr.u.array() <= hi.array() + 1e-12).all();
        if (!gate_ok) break;
    }

    const bool pass = worst_norm < 1e-10 && worst_shift < 1e-12 && gate_ok;
    report(pass, "softmax-gate-invariants",
           "norm err " + fmt(worst_norm, 3) + " (<1e-10), shift err " + fmt(worst_shift, 3) +
               " (<1e-12), gate in (0,1) with convex outputs over " +
               std::to_string(gate_trials) + "+" + std::to_string(trials) + " trials: " +
               (gate_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// criterion 3: forward pass vs the independent loop oracle
void check_oracle_equivalence() {
    Rng rng(9002);
    double worst = 0.0;
    int trials = 0;
    for (; trials < 120; ++trials) {
        const Mode mode = kModes[trials % 4];
        auto p = random_params(2, 8, 6, mode, rng);
        auto sample = random_sample(3, 8, 12, rng);
        Vec<double> h = tesan_forward(sample, p);
        Mat<double> c = embed_lookup(sample.ctx_ids, p);
        oracle::DMat rows;
        for (Eigen::Index i = 0; i < c.cols(); ++i)
            rows.push_back(oracle::copy_col(c, static_cast<int>(i)));
        oracle::DVec oh = oracle::tesan_h(rows, sample.ctx_days, oracle::from_params(p));
        for (int k = 0; k < 2; ++k)
            worst = std::max(worst, std::abs(h(k) - oh[static_cast<std::size_t>(k)]));
    }
    report(worst < 1e-12, "oracle-equivalence",
           "max |h - h_ref| " + fmt(worst, 3) + " (<1e-12) over " + std::to_string(trials) +
               " d=2 m=3 trials, all modes");
}

// ---------------------------------------------------------------------------
// criterion 4: ablation identities
void check_ablation_identity() {
    Rng rng(9003);
    double worst_eq = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto p = random_params(3, 8, 6, Mode::TeSA, rng);
        auto sample = random_sample(rng.next_int(2, 5), 8, 12, rng);
        ModelParams<double> stripped = p;
        stripped.W3.setZero();
        stripped.interval_table.setZero();
        ModelParams<double> multi = p;
        multi.mode = Mode::MultiSA;
        worst_eq = std::max(
            worst_eq,
            (tesan_forward(sample, stripped) - tesan_forward(sample, multi)).cwiseAbs().maxCoeff());
    }

    double worst_multi = 0.0;
    int tesa_sensitive = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto p = random_params(3, 8, 10, Mode::MultiSA, rng);
        auto sample = random_sample(rng.next_int(2, 5), 8, 20, rng);
        ModelParams<double> perturbed = p;
        for (Eigen::Index r = 0; r < perturbed.interval_table.rows(); ++r)
            for (Eigen::Index c = 0; c < perturbed.interval_table.cols(); ++c)
                perturbed.interval_table(r, c) += rng.next_real(-0.5, 0.5);
        worst_multi = std::max(
            worst_multi,
            (tesan_forward(sample, p) - tesan_forward(sample, perturbed)).cwiseAbs().maxCoeff());

        ModelParams<double> tesa = p;
        tesa.mode = Mode::TeSA;
        ModelParams<double> tesa_perturbed = perturbed;
        tesa_perturbed.mode = Mode::TeSA;
        if ((tesan_forward(sample, tesa) - tesan_forward(sample, tesa_perturbed))
                .cwiseAbs()
                .maxCoeff() > 1e-8)
            ++tesa_sensitive;
    }

    const bool pass = worst_eq < 1e-12 && worst_multi == 0.0 && tesa_sensitive >= 95;
    report(pass, "ablation-identity",
           "stripped-full vs content-only err " + fmt(worst_eq, 3) +
               " (<1e-12); content-only interval sensitivity " + fmt(worst_multi, 3) +
               " (exact 0); full model moved by interval perturbation in " +
               std::to_string(tesa_sensitive) + "/100 (>=95)");
}

// ---------------------------------------------------------------------------
// criterion 5: permutation invariance
void check_permutation_invariance() {
    Rng rng(9004);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Mode mode = kModes[trial % 4];
        const int d = rng.next_int(2, 4);
        auto p = random_params(d, 9, 7, mode, rng);
        auto sample = random_sample(rng.next_int(2, 6), 9, 15, rng);
        Vec<double> ha = tesan_forward(sample, p);

        std::vector<std::size_t> perm(sample.ctx_ids.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        ContextSample b;
        b.target = sample.target;
        for (auto i : perm) {
            b.ctx_ids.push_back(sample.ctx_ids[i]);
            b.ctx_days.push_back(sample.ctx_days[i]);
        }
        worst = std::max(worst, (ha - tesan_forward(b, p)).cwiseAbs().maxCoeff());
    }
    report(worst < 1e-12, "permutation-invariance",
           "max |h - h_permuted| " + fmt(worst, 3) + " (<1e-12) over 100 trials");
}

// ---------------------------------------------------------------------------
// criterion 9: metric implementations vs brute-force references
double nmi_ref(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<int, double> ma, mb;
    std::map<std::pair<int, int>, double> j;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1;
        mb[b[i]] += 1;
        j[{a[i], b[i]}] += 1;
    }
    double ha = 0, hb = 0, mi = 0;
    for (auto& kv : ma) ha -= kv.second / n * std::log(kv.second / n);
    for (auto& kv : mb) hb -= kv.second / n * std::log(kv.second / n);
    for (auto& kv : j)
        mi += kv.second / n *
              std::log(kv.second * n / (ma[kv.first.first] * mb[kv.first.second]));
    if (ha == 0 && hb == 0) return 1.0;
    if (ha == 0 || hb == 0) return 0.0;
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

void check_metric_oracles() {
    bool pass = true;
    std::string why;

    // hand instance: contingency [[2,0],[1,1]]
    const double hand = nmi({0, 0, 1, 1}, {0, 0, 0, 1});
    if (std::abs(hand - 0.3455920299442113) > 1e-12) {
        pass = false;
        why = "hand NMI " + fmt(hand, 16);
    }
    if (nmi({0, 1, 0, 1}, {1, 0, 1, 0}) != 1.0 || nmi({0, 0, 1, 1}, {0, 1, 0, 1}) != 0.0) {
        pass = false;
        why += " degenerate NMI wrong;";
    }

    // hand P@1 instances: identical points tie-break, and a worked euclidean case
    {
        Eigen::MatrixXd x(2, 3);
        x << 1, 1, 1, 0, 0, 0;
        if (nns_p_at_1(x, {0, 0, 1}).p_at_1 != 2.0 / 3.0) {
            pass = false;
            why += " tie-break P@1 wrong;";
        }
        Eigen::MatrixXd y(1, 4);
        y << 1, 2, 10, 11;  // neighbours: 1<->2, 10<->11
        if (nns_p_at_1(y, {0, 0, 1, 1}, NnsMetric::Euclidean).p_at_1 != 1.0 ||
            nns_p_at_1(y, {0, 1, 0, 1}, NnsMetric::Euclidean).p_at_1 != 0.0) {
            pass = false;
            why += " euclidean P@1 wrong;";
        }
    }

    // random contingency tables: reference equality, symmetry, relabeling
    Rng rng(9005);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.next_int(2, 30);
        std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            a[static_cast<std::size_t>(i)] = rng.next_int(0, 4);
            b[static_cast<std::size_t>(i)] = rng.next_int(0, 4);
        }
        worst = std::max(worst, std::abs(nmi(a, b) - nmi_ref(a, b)));
        worst = std::max(worst, std::abs(nmi(a, b) - nmi(b, a)));
        std::vector<int> a2 = a;
        for (auto& v : a2) v = 77 - 13 * v;
        worst = std::max(worst, std::abs(nmi(a, b) - nmi(a2, b)));
    }
    if (worst > 1e-12) {
        pass = false;
        why += " contingency err " + fmt(worst, 3);
    }
    report(pass, "metric-oracles",
           pass ? "hand NMI/P@1 instances exact; 100 random tables match reference "
                  "(symmetry + relabeling) within 1e-12"
                : why);
}

// ---------------------------------------------------------------------------
// criterion 8: loss decreases; bit-identical across worker counts
void check_training_sanity() {
    SynthConfig scfg;
    scfg.n_groups = 2;
    scfg.concepts_per_group = 10;
    scfg.n_patients = 300;
    scfg.cross_group_noise = 0.1;
    scfg.seed = 7;
    auto data = generate(scfg);
    auto vocab = build_vocabulary(data.journeys, 5);
    auto corpus = build_corpus(data.journeys, vocab, 4);

    TrainConfig cfg;
    cfg.dim = 16;
    cfg.window = 4;
    cfg.negatives = 5;
    cfg.epochs = 10;
    cfg.batch_size = 64;
    cfg.learning_rate = 1e-3;
    cfg.seed = 11;

    auto run = [&](int workers) {
        TrainConfig c = cfg;
        c.workers = workers;
        auto st = init_train_state<float>(c, static_cast<int>(vocab.size()),
                                          corpus.max_interval);
        auto rep = train(st, corpus.samples, vocab, c, [&](int e, double l) {
            std::cerr << "  sanity w" << workers << " epoch " << e << " loss " << l << "\n";
        });
        return std::make_pair(std::move(st), std::move(rep));
    };

    auto [st1a, rep1a] = run(1);
    auto [st1b, rep1b] = run(1);
    auto [st4a, rep4a] = run(4);
    auto [st4b, rep4b] = run(4);

    const bool decreased = !rep1a.diverged && rep1a.epoch_mean_loss.size() == 10 &&
                           rep1a.epoch_mean_loss.back() < rep1a.epoch_mean_loss.front();
    double d11 = 0, d44 = 0, d14 = 0;
    for_each_tensor_pair(st1a.params, st1b.params,
                         [&](const char*, const Mat<float>& x, const Mat<float>& y) {
                             d11 = std::max(d11, static_cast<double>((x - y).cwiseAbs().maxCoeff()));
                         });
    for_each_tensor_pair(st4a.params, st4b.params,
                         [&](const char*, const Mat<float>& x, const Mat<float>& y) {
                             d44 = std::max(d44, static_cast<double>((x - y).cwiseAbs().maxCoeff()));
                         });
    for_each_tensor_pair(st1a.params, st4a.params,
                         [&](const char*, const Mat<float>& x, const Mat<float>& y) {
                             d14 = std::max(d14, static_cast<double>((x - y).cwiseAbs().maxCoeff()));
                         });

    const bool pass = decreased && d11 == 0.0 && d44 == 0.0 && d14 == 0.0;
    report(pass, "training-sanity",
           "epoch-10 loss " + fmt(rep1a.epoch_mean_loss.back()) + " < epoch-1 loss " +
               fmt(rep1a.epoch_mean_loss.front()) + ": " + (decreased ? "yes" : "no") +
               "; repeat diffs w1 " + fmt(d11, 2) + ", w4 " + fmt(d44, 2) + ", w1-vs-w4 " +
               fmt(d14, 2) + " (all exact 0)");
}

// ---------------------------------------------------------------------------
// shared: train on a generated corpus, return embeddings + truth
struct TrainedEmbedding {
    Embeddings emb;
    std::map<std::string, std::string> truth;
    bool diverged = false;
};

TrainedEmbedding train_on(const SynthConfig& scfg, const TrainConfig& cfg, int min_count,
                          const char* tag) {
    auto data = generate(scfg);
    auto vocab = build_vocabulary(data.journeys, min_count);
    auto corpus = build_corpus(data.journeys, vocab, cfg.window);
    auto st = init_train_state<float>(cfg, static_cast<int>(vocab.size()), corpus.max_interval);
    auto rep = train(st, corpus.samples, vocab, cfg, [&](int e, double l) {
        std::cerr << "  " << tag << " epoch " << e << "/" << cfg.epochs << " loss " << l << "\n";
    });

    TrainedEmbedding out;
    out.diverged = rep.diverged;
    out.truth = std::move(data.truth);
    out.emb.codes = vocab.codes;
    out.emb.values = st.params.concept_table.cast<double>();
    for (std::size_t i = 0; i < vocab.codes.size(); ++i)
        out.emb.code_to_col[vocab.codes[i]] = static_cast<int>(i);
    return out;
}

// ---------------------------------------------------------------------------
// criterion 6: planted clusters are recovered
void check_cluster_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig scfg;
    scfg.n_groups = 4;
    scfg.concepts_per_group = 25;
    scfg.n_patients = 2000;
    scfg.cross_group_noise = 0.1;
    scfg.seed = 1;

    // mimic-like preset with d=32 and 10 epochs; the unpinned knobs are set to
    // lr 3e-3 with separate output embeddings (the shared-table equilibrium
    // organizes directions but never forms compact blobs, so k-means on raw
    // vectors needs the split).
    TrainConfig cfg;
    cfg.dim = 32;
    cfg.window = 6;
    cfg.negatives = 10;
    cfg.epochs = 10;
    cfg.batch_size = 64;
    cfg.learning_rate = 3e-3;
    cfg.seed = 1;
    cfg.mode = Mode::TeSA;
    cfg.dual_tables = true;

    auto trained = train_on(scfg, cfg, 5, "recovery");
    if (trained.diverged) {
        report(false, "cluster-recovery", "training diverged");
        return;
    }
    auto cres = eval_cluster(trained.emb, trained.truth, 4, 1, 10);
    auto nres = eval_nns(trained.emb, trained.truth);
    const double secs = seconds_since(t0);
    const bool pass = cres.nmi >= 0.80 && nres.p_at_1 >= 0.85 && secs < 300.0;
    report(pass, "cluster-recovery",
           "NMI " + fmt(cres.nmi) + " (>=0.80), P@1 " + fmt(nres.p_at_1) + " (>=0.85) over " +
               std::to_string(cres.n_codes) + " codes in " + fmt(secs, 3) + "s (budget 300s)");
}

// ---------------------------------------------------------------------------
// criterion 7: the interval term is worth real accuracy when only timing
// separates the groups (every code echoes itself at a group-characteristic
// gap; co-occurrence is group-blind by construction)
void check_temporal_advantage() {
    double mean_tesa = 0.0, mean_multi = 0.0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        SynthConfig scfg;
        scfg.n_groups = 2;
        scfg.concepts_per_group = 10;
        scfg.n_patients = 600;
        scfg.visits_per_patient = {6, 9};
        scfg.codes_per_visit = {1, 1};
        scfg.inter_visit_gap = {55, 65};
        scfg.cross_group_noise = 0.5;
        scfg.seed = seed;
        for (int k = 0; k < scfg.concepts_per_group; ++k) {
            scfg.motif_pairs.push_back({synth_code(0, k), synth_code(0, k), 2});
            scfg.motif_pairs.push_back({synth_code(1, k), synth_code(1, k), 40});
        }

        TrainConfig cfg;
        cfg.dim = 16;
        cfg.window = 3;
        cfg.negatives = 5;
        cfg.epochs = 12;
        cfg.batch_size = 64;
        cfg.learning_rate = 1e-2;
        cfg.seed = seed;
        cfg.dual_tables = true;

        cfg.mode = Mode::TeSA;
        auto full = train_on(scfg, cfg, 5, "advantage-full");
        cfg.mode = Mode::MultiSA;
        auto content = train_on(scfg, cfg, 5, "advantage-content");
        if (full.diverged || content.diverged) {
            report(false, "temporal-advantage", "training diverged");
            return;
        }
        const double p_full = eval_nns(full.emb, full.truth).p_at_1;
        const double p_content = eval_nns(content.emb, content.truth).p_at_1;
        mean_tesa += p_full / 3.0;
        mean_multi += p_content / 3.0;
        detail += " seed" + std::to_string(seed) + " " + fmt(p_full, 3) + "/" + fmt(p_content, 3);
        std::cerr << "  advantage seed " << seed << ": full " << p_full << " content-only "
                  << p_content << "\n";
    }
    const double gap = mean_tesa - mean_multi;
    report(gap >= 0.05, "temporal-advantage",
           "mean P@1 full " + fmt(mean_tesa) + " vs content-only " + fmt(mean_multi) +
               ", advantage " + fmt(gap) + " (>=0.05);" + detail);
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    check_gradient_suite();
    check_softmax_gate();
    check_oracle_equivalence();
    check_ablation_identity();
    check_permutation_invariance();
    check_metric_oracles();
    check_training_sanity();
    check_cluster_recovery();
    check_temporal_advantage();
    std::cerr << "acceptance total " << fmt(seconds_since(t0), 3) << "s\n";
    std::cout << (g_all_pass ? "ALL ACCEPTANCE CRITERIA PASSED" : "ACCEPTANCE FAILURES PRESENT")
              << std::endl;
    return g_all_pass ? 0 : 1;
}
