// tesan: synth | vocab | train | gradcheck | eval-cluster | eval-nns | export
//
// Machine-readable results go to stdout as single-line JSON; diagnostics go
// to stderr. Exit codes: 0 success, 1 usage/validation error, 2 runtime
// error.
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tesan/checkpoint.hpp"
#include "tesan/embedding_io.hpp"
#include "tesan/eval.hpp"
#include "tesan/gradcheck.hpp"
#include "tesan/journeys.hpp"
#include "tesan/synth.hpp"
#include "tesan/training.hpp"

namespace {

using nlohmann::json;

struct SynthArgs {
    tesan::SynthConfig cfg;
    std::string out_journeys, out_truth;
    std::vector<std::string> motifs;
};

struct TrainArgs {
    tesan::TrainConfig cfg;
    std::string input, vocab_path, out_embeddings, checkpoint_out, resume_from;
    std::string mode = "tesa", optimizer = "adam", precision = "f32", preset;
    int min_count = 5;
    int min_visits = 1;
};

struct Corpus {
    tesan::Vocabulary vocab;
    std::vector<tesan::ContextSample> samples;
    std::int64_t max_interval = 0;
};

Corpus load_corpus(const std::string& input, const std::string& vocab_path, int min_count,
                   int min_visits, int window) {
    tesan::ParseStats stats;
    auto journeys = tesan::parse_journeys(input, min_visits, &stats);
    Corpus c;
    if (!vocab_path.empty())
        c.vocab = tesan::load_vocabulary(vocab_path);
    else
        c.vocab = tesan::build_vocabulary(journeys, min_count);
    auto corpus = tesan::build_corpus(journeys, c.vocab, window);
    c.samples = std::move(corpus.samples);
    c.max_interval = corpus.max_interval;
    std::cerr << "parsed " << stats.journeys << " journeys (" << stats.dropped_min_visits
              << " below min-visits), vocabulary " << c.vocab.size() << " codes, "
              << c.samples.size() << " samples, " << corpus.oov_dropped
              << " out-of-vocabulary codes dropped, max interval " << c.max_interval << " days\n";
    return c;
}

template <typename T>
int run_train(TrainArgs& a) {
    tesan::TrainConfig& cfg = a.cfg;

    // The stored config wins on resume (only the epoch target may be raised),
    // and the corpus must be windowed with it, so load the checkpoint first.
    tesan::TrainState<T> state;
    std::uint64_t resume_vhash = 0;
    if (!a.resume_from.empty()) {
        auto loaded = tesan::load_checkpoint<T>(a.resume_from);
        const int epochs_override = cfg.epochs;
        cfg = loaded.cfg;
        if (epochs_override > loaded.cfg.epochs) cfg.epochs = epochs_override;
        state = std::move(loaded.state);
        resume_vhash = loaded.vocab_hash;
    }

    Corpus corpus = load_corpus(a.input, a.vocab_path, a.min_count, a.min_visits, cfg.window);
    if (corpus.samples.empty()) throw tesan::Error("no training samples in '" + a.input + "'");
    const std::uint64_t vhash = tesan::vocabulary_hash(corpus.vocab);

    if (!a.resume_from.empty()) {
        if (resume_vhash != vhash)
            throw tesan::Error("checkpoint was trained against a different vocabulary");
        std::cerr << "resuming at epoch " << state.epoch << "/" << cfg.epochs << "\n";
    } else {
        const std::int64_t d_max =
            cfg.d_max_override >= 0 ? cfg.d_max_override : corpus.max_interval;
        state = tesan::init_train_state<T>(cfg, static_cast<int>(corpus.vocab.size()), d_max);
    }

    auto report = tesan::train<T>(state, corpus.samples, corpus.vocab, cfg,
                                  [&](int epoch, double loss) {
                                      std::cerr << "epoch " << epoch << "/" << cfg.epochs
                                                << " loss " << loss << "\n";
                                  });

    if (!a.checkpoint_out.empty()) tesan::save_checkpoint(a.checkpoint_out, state, cfg, vhash);
    json out;
    out["completed_epochs"] = report.completed_epochs;
    out["diverged"] = report.diverged;
    out["samples"] = corpus.samples.size();
    if (!report.epoch_mean_loss.empty()) out["final_loss"] = report.epoch_mean_loss.back();
    if (report.diverged) {
        std::cerr << "training diverged; state rolled back to epoch " << state.epoch << "\n";
        std::cout << out.dump() << "\n";
        return 2;
    }
    if (!a.out_embeddings.empty())
        tesan::save_embeddings(state.params.concept_table, corpus.vocab, a.out_embeddings);
    std::cout << out.dump() << "\n";
    return 0;
}

int run_export(const std::string& ck_path, const std::string& vocab_path,
               const std::string& out_path) {
    auto vocab = tesan::load_vocabulary(vocab_path);
    const int width = tesan::checkpoint_scalar_width(ck_path);
    const std::uint64_t vhash = tesan::vocabulary_hash(vocab);
    auto save = [&](const auto& table) { tesan::save_embeddings(table, vocab, out_path); };
    if (width == 4) {
        auto loaded = tesan::load_checkpoint<float>(ck_path);
        if (loaded.vocab_hash != vhash)
            throw tesan::Error("checkpoint was trained against a different vocabulary");
        save(loaded.state.params.concept_table);
    } else {
        auto loaded = tesan::load_checkpoint<double>(ck_path);
        if (loaded.vocab_hash != vhash)
            throw tesan::Error("checkpoint was trained against a different vocabulary");
        save(loaded.state.params.concept_table);
    }
    json out;
    out["embeddings"] = out_path;
    std::cout << out.dump() << "\n";
    return 0;
}

tesan::MotifPair parse_motif(const std::string& s) {
    const auto c1 = s.find(',');
    const auto c2 = s.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw tesan::Error("motif must be 'code_a,code_b,gap_days', got '" + s + "'");
    tesan::MotifPair m;
    m.code_a = s.substr(0, c1);
    m.code_b = s.substr(c1 + 1, c2 - c1 - 1);
    try {
        m.gap_days = std::stoi(s.substr(c2 + 1));
    } catch (const std::exception&) {
        throw tesan::Error("bad motif gap in '" + s + "'");
    }
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal self-attention embeddings for timestamped code sequences"};
    app.require_subcommand(1);

    // synth
    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "generate a planted-cluster journey corpus");
    synth->add_option("--out", sa.out_journeys, "journey JSONL output path")->required();
    synth->add_option("--truth", sa.out_truth, "ground-truth TSV output path")->required();
    synth->add_option("--groups", sa.cfg.n_groups, "number of concept groups");
    synth->add_option("--concepts-per-group", sa.cfg.concepts_per_group, "codes per group");
    synth->add_option("--patients", sa.cfg.n_patients, "number of patients");
    synth->add_option("--visits-min", sa.cfg.visits_per_patient.lo, "min base visits per patient");
    synth->add_option("--visits-max", sa.cfg.visits_per_patient.hi, "max base visits per patient");
    synth->add_option("--codes-min", sa.cfg.codes_per_visit.lo, "min codes per visit");
    synth->add_option("--codes-max", sa.cfg.codes_per_visit.hi, "max codes per visit");
    synth->add_option("--gap-min", sa.cfg.inter_visit_gap.lo, "min days between visits");
    synth->add_option("--gap-max", sa.cfg.inter_visit_gap.hi, "max days between visits");
    synth->add_option("--noise", sa.cfg.cross_group_noise,
                      "probability a code is drawn from another group");
    synth->add_option("--seed", sa.cfg.seed, "generator seed");
    synth->add_option("--motif", sa.motifs,
                      "temporal motif 'code_a,code_b,gap_days' (repeatable): each base "
                      "occurrence of code_a schedules a visit with code_b gap_days +/- 1 later");

    // vocab
    std::string v_input, v_out;
    int v_min_count = 5, v_min_visits = 1;
    auto* vocab_cmd = app.add_subcommand("vocab", "build a vocabulary TSV from journeys");
    vocab_cmd->add_option("--input", v_input, "journey JSONL path")->required();
    vocab_cmd->add_option("--out", v_out, "vocabulary TSV output path")->required();
    vocab_cmd->add_option("--min-count", v_min_count, "drop codes occurring fewer times");
    vocab_cmd->add_option("--min-visits", v_min_visits, "drop journeys with fewer visits");

    // train
    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "learn concept embeddings");
    train_cmd->add_option("--input", ta.input, "journey JSONL path")->required();
    train_cmd->add_option("--vocab", ta.vocab_path, "vocabulary TSV (default: build in-memory)");
    train_cmd->add_option("--out", ta.out_embeddings, "embedding text output path");
    train_cmd->add_option("--checkpoint", ta.checkpoint_out, "checkpoint output path");
    train_cmd->add_option("--resume", ta.resume_from, "checkpoint to resume from");
    train_cmd->add_option("--dim", ta.cfg.dim, "embedding dimension");
    auto* opt_window = train_cmd->add_option("--window", ta.cfg.window, "context window size");
    auto* opt_neg = train_cmd->add_option("--neg", ta.cfg.negatives, "negative samples");
    auto* opt_epochs = train_cmd->add_option("--epochs", ta.cfg.epochs, "training epochs");
    auto* opt_batch = train_cmd->add_option("--batch", ta.cfg.batch_size, "batch size");
    train_cmd->add_option("--lr", ta.cfg.learning_rate, "learning rate");
    train_cmd->add_option("--seed", ta.cfg.seed, "training seed");
    train_cmd->add_option("--mode", ta.mode, "tesa|multi-sa|interval|normal-sa");
    train_cmd->add_option("--preset", ta.preset,
                          "mimic-like: neg 10, epochs 30, window 6, batch 64; "
                          "cms-like: neg 5, epochs 20, window 7, batch 128");
    train_cmd->add_option("--workers", ta.cfg.workers, "gradient workers per batch");
    train_cmd->add_option("--optimizer", ta.optimizer, "adam|sgd");
    auto* precision_opt = train_cmd->add_option("--precision", ta.precision, "f32|f64");
    train_cmd->add_flag("--dual-tables", ta.cfg.dual_tables,
                        "separate output-side embedding table");
    train_cmd->add_option("--dmax", ta.cfg.d_max_override,
                          "interval table size override (default: corpus max)");
    train_cmd->add_option("--min-count", ta.min_count, "vocabulary min count");
    train_cmd->add_option("--min-visits", ta.min_visits, "journey min visits");

    // gradcheck
    int g_trials = 200;
    double g_eps = 1e-4, g_threshold = 1e-4;
    std::uint64_t g_seed = 1;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    gradcheck_cmd->add_option("--trials", g_trials, "random configurations");
    gradcheck_cmd->add_option("--eps", g_eps, "finite-difference step");
    gradcheck_cmd->add_option("--seed", g_seed, "suite seed");
    gradcheck_cmd->add_option("--threshold", g_threshold, "max relative error to accept");

    // eval-cluster
    std::string ec_emb, ec_truth, ec_norm = "geometric";
    int ec_k = 0, ec_restarts = 10;
    std::uint64_t ec_seed = 1;
    auto* ec_cmd = app.add_subcommand("eval-cluster", "k-means + NMI against group labels");
    ec_cmd->add_option("--emb", ec_emb, "embedding text file")->required();
    ec_cmd->add_option("--truth", ec_truth, "ground-truth TSV")->required();
    ec_cmd->add_option("--k", ec_k, "clusters (default: distinct groups)");
    ec_cmd->add_option("--restarts", ec_restarts, "k-means restarts");
    ec_cmd->add_option("--seed", ec_seed, "k-means seed");
    ec_cmd->add_option("--nmi-norm", ec_norm, "geometric|arithmetic|max");

    // eval-nns
    std::string en_emb, en_truth, en_metric = "cosine";
    auto* en_cmd = app.add_subcommand("eval-nns", "nearest-neighbour P@1 against group labels");
    en_cmd->add_option("--emb", en_emb, "embedding text file")->required();
    en_cmd->add_option("--truth", en_truth, "ground-truth TSV")->required();
    en_cmd->add_option("--metric", en_metric, "cosine|euclidean");

    // export
    std::string x_ck, x_vocab, x_out;
    auto* export_cmd = app.add_subcommand("export", "write embeddings from a checkpoint");
    export_cmd->add_option("--checkpoint", x_ck, "checkpoint path")->required();
    export_cmd->add_option("--vocab", x_vocab, "vocabulary TSV")->required();
    export_cmd->add_option("--out", x_out, "embedding text output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    // flag validation: nothing is read or written past this block
    tesan::NmiNorm ec_norm_v = tesan::NmiNorm::Geometric;
    tesan::NnsMetric en_metric_v = tesan::NnsMetric::Cosine;
    try {
        if (*synth) {
            for (const auto& m : sa.motifs) sa.cfg.motif_pairs.push_back(parse_motif(m));
            sa.cfg.validate();
        }
        if (*vocab_cmd) {
            if (v_min_count < 1) throw tesan::Error("min-count must be >= 1");
            if (v_min_visits < 1) throw tesan::Error("min-visits must be >= 1");
        }
        if (*train_cmd) {
            if (!ta.preset.empty()) {
                int pneg, pepochs, pwindow, pbatch;
                if (ta.preset == "mimic-like") {
                    pneg = 10, pepochs = 30, pwindow = 6, pbatch = 64;
                } else if (ta.preset == "cms-like") {
                    pneg = 5, pepochs = 20, pwindow = 7, pbatch = 128;
                } else {
                    throw tesan::Error("unknown preset '" + ta.preset +
                                       "' (expected mimic-like|cms-like)");
                }
                if (opt_neg->count() == 0) ta.cfg.negatives = pneg;
                if (opt_epochs->count() == 0) ta.cfg.epochs = pepochs;
                if (opt_window->count() == 0) ta.cfg.window = pwindow;
                if (opt_batch->count() == 0) ta.cfg.batch_size = pbatch;
            }
            ta.cfg.mode = tesan::mode_from_string(ta.mode);
            if (ta.optimizer == "adam")
                ta.cfg.optimizer = tesan::Optimizer::Adam;
            else if (ta.optimizer == "sgd")
                ta.cfg.optimizer = tesan::Optimizer::SGD;
            else
                throw tesan::Error("unknown optimizer '" + ta.optimizer + "' (expected adam|sgd)");
            if (ta.precision != "f32" && ta.precision != "f64")
                throw tesan::Error("unknown precision '" + ta.precision +
                                   "' (expected f32|f64)");
            ta.cfg.validate();
        }
        if (*gradcheck_cmd) {
            if (g_trials < 1) throw tesan::Error("trials must be >= 1");
            if (!(g_eps > 0)) throw tesan::Error("eps must be > 0");
        }
        if (*ec_cmd) {
            ec_norm_v = tesan::nmi_norm_from_string(ec_norm);
            if (ec_restarts < 1) throw tesan::Error("restarts must be >= 1");
        }
        if (*en_cmd) en_metric_v = tesan::nns_metric_from_string(en_metric);
    } catch (const tesan::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*synth) {
            tesan::generate_files(sa.cfg, sa.out_journeys, sa.out_truth);
            json out;
            out["journeys"] = sa.out_journeys;
            out["truth"] = sa.out_truth;
            out["patients"] = sa.cfg.n_patients;
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*vocab_cmd) {
            tesan::ParseStats stats;
            auto journeys = tesan::parse_journeys(v_input, v_min_visits, &stats);
            auto vocab = tesan::build_vocabulary(journeys, v_min_count);
            tesan::save_vocabulary(vocab, v_out);
            json out;
            out["codes"] = vocab.size();
            out["vocab"] = v_out;
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*train_cmd) {
            // A resumed run adopts the checkpoint's scalar width unless
            // --precision was given explicitly (a stated mismatch still fails).
            if (!ta.resume_from.empty() && precision_opt->count() == 0)
                ta.precision =
                    tesan::checkpoint_scalar_width(ta.resume_from) == 8 ? "f64" : "f32";
            if (ta.precision == "f32") return run_train<float>(ta);
            return run_train<double>(ta);
        }
        if (*gradcheck_cmd) {
            auto rep = tesan::gradcheck_suite(g_trials, g_seed, g_eps);
            json out;
            out["max_rel_err"] = rep.max_rel_err;
            out["configs"] = rep.configs_run;
            out["worst_tensor"] = rep.worst_tensor;
            std::cout << out.dump() << "\n";
            return rep.max_rel_err < g_threshold ? 0 : 2;
        }
        if (*ec_cmd) {
            auto emb = tesan::load_embeddings(ec_emb);
            auto truth = tesan::load_ground_truth(ec_truth);
            auto res = tesan::eval_cluster(emb, truth, ec_k, ec_seed, ec_restarts, ec_norm_v);
            json out;
            out["nmi"] = res.nmi;
            out["n_codes"] = res.n_codes;
            out["k"] = res.k;
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*en_cmd) {
            auto emb = tesan::load_embeddings(en_emb);
            auto truth = tesan::load_ground_truth(en_truth);
            auto res = tesan::eval_nns(emb, truth, en_metric_v);
            json out;
            out["p_at_1"] = res.p_at_1;
            out["n_codes"] = res.n_codes;
            out["excluded_zero_norm"] = res.excluded_zero_norm;
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*export_cmd) return run_export(x_ck, x_vocab, x_out);
    } catch (const tesan::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
