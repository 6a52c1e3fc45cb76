// Model parameters: embedding tables, attention / gate / pooling weights,
// ablation modes, initialization and generic tensor traversal.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "tesan/common.hpp"

namespace tesan {

/// Ablation modes for the temporal self-attention score.
///   TeSA      full score: content terms plus the interval-embedding term
///   MultiSA   content terms only (interval term removed)
///   Interval  interval term only (content terms removed)
///   NormalSA  scalar-score self-attention, shared across features
enum class Mode { TeSA, MultiSA, Interval, NormalSA };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::TeSA: return "tesa";
        case Mode::MultiSA: return "multi-sa";
        case Mode::Interval: return "interval";
        case Mode::NormalSA: return "normal-sa";
    }
    throw Error("unknown mode");
}

inline Mode mode_from_string(std::string_view s) {
    if (s == "tesa") return Mode::TeSA;
    if (s == "multi-sa" || s == "multi_sa") return Mode::MultiSA;
    if (s == "interval") return Mode::Interval;
    if (s == "normal-sa" || s == "normal_sa") return Mode::NormalSA;
    throw Error("unknown mode '" + std::string(s) + "' (expected tesa|multi-sa|interval|normal-sa)");
}

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// All learnable tensors. Biases are stored as d x 1 matrices so every field
/// can be traversed uniformly. In NormalSA mode the score projection
/// degenerates to a vector: column 0 of W and entry (0,0) of b are used.
template <typename T>
struct ModelParams {
    using Mat = tesan::Mat<T>;

    Mode mode = Mode::TeSA;
    bool dual_tables = false;

    Mat concept_table;   // d x |C|, one column per concept
    Mat output_table;    // d x |C| when dual_tables, else 0 x 0
    Mat interval_table;  // (D_max + 1) x d, one row per clamped day interval

    // temporal self-attention block
    Mat W1, W2, W3, W;   // d x d
    Mat b1, b;           // d x 1

    // fusion gate
    Mat Wf1, Wf2;        // d x d
    Mat bf;              // d x 1

    // attention pooling (its own parameter set, separate from the block above)
    Mat W1p, Wp;         // d x d
    Mat b1p, bp;         // d x 1

    int dim() const { return static_cast<int>(concept_table.rows()); }
    int vocab_size() const { return static_cast<int>(concept_table.cols()); }
    std::int64_t max_delta() const { return interval_table.rows() - 1; }

    /// Table providing target/negative vectors for the objective.
    const Mat& out_table() const { return dual_tables ? output_table : concept_table; }
    Mat& out_table() { return dual_tables ? output_table : concept_table; }
};

/// Visits every tensor as f(name, Mat&) in a fixed, documented order. The
/// checkpoint format and the optimizer both rely on this order.
template <typename P, typename F>
void for_each_tensor(P&& p, F&& f) {
    f("concept_table", p.concept_table);
    if (p.dual_tables) f("output_table", p.output_table);
    f("interval_table", p.interval_table);
    f("W1", p.W1);
    f("W2", p.W2);
    f("W3", p.W3);
    f("b1", p.b1);
    f("W", p.W);
    f("b", p.b);
    f("Wf1", p.Wf1);
    f("Wf2", p.Wf2);
    f("bf", p.bf);
    f("W1p", p.W1p);
    f("b1p", p.b1p);
    f("Wp", p.Wp);
    f("bp", p.bp);
}

/// Visits matching tensors of two parameter sets in the fixed order.
template <typename PA, typename PB, typename F>
void for_each_tensor_pair(PA&& a, PB&& b, F&& f) {
    f("concept_table", a.concept_table, b.concept_table);
    if (a.dual_tables) f("output_table", a.output_table, b.output_table);
    f("interval_table", a.interval_table, b.interval_table);
    f("W1", a.W1, b.W1);
    f("W2", a.W2, b.W2);
    f("W3", a.W3, b.W3);
    f("b1", a.b1, b.b1);
    f("W", a.W, b.W);
    f("b", a.b, b.b);
    f("Wf1", a.Wf1, b.Wf1);
    f("Wf2", a.Wf2, b.Wf2);
    f("bf", a.bf, b.bf);
    f("W1p", a.W1p, b.W1p);
    f("b1p", a.b1p, b.b1p);
    f("Wp", a.Wp, b.Wp);
    f("bp", a.bp, b.bp);
}

/// Visits matching tensors of three parameter sets in the fixed order.
template <typename PA, typename PB, typename PC, typename F>
void for_each_tensor_triple(PA&& a, PB&& b, PC&& c, F&& f) {
    f("concept_table", a.concept_table, b.concept_table, c.concept_table);
    if (a.dual_tables) f("output_table", a.output_table, b.output_table, c.output_table);
    f("interval_table", a.interval_table, b.interval_table, c.interval_table);
    f("W1", a.W1, b.W1, c.W1);
    f("W2", a.W2, b.W2, c.W2);
    f("W3", a.W3, b.W3, c.W3);
    f("b1", a.b1, b.b1, c.b1);
    f("W", a.W, b.W, c.W);
    f("b", a.b, b.b, c.b);
    f("Wf1", a.Wf1, b.Wf1, c.Wf1);
    f("Wf2", a.Wf2, b.Wf2, c.Wf2);
    f("bf", a.bf, b.bf, c.bf);
    f("W1p", a.W1p, b.W1p, c.W1p);
    f("b1p", a.b1p, b.b1p, c.b1p);
    f("Wp", a.Wp, b.Wp, c.Wp);
    f("bp", a.bp, b.bp, c.bp);
}

/// Gradients mirror the parameter layout exactly.
template <typename T>
using GradientSet = ModelParams<T>;

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
    ModelParams<T> z;
    z.mode = p.mode;
    z.dual_tables = p.dual_tables;
    for_each_tensor_pair(z, p, [](const char*, auto& tz, const auto& tp) {
        tz.setZero(tp.rows(), tp.cols());
    });
    return z;
}

/// Embedding tables ~ U(-0.5/d, 0.5/d); weight matrices Xavier-uniform;
/// biases zero. Draw order is fixed so a seed pins the full initialization.
template <typename T>
ModelParams<T> init_params(int dim, int vocab_size, std::int64_t d_max, Mode mode, bool dual_tables, Rng& rng) {
    if (dim < 1) throw Error("dim must be >= 1");
    if (vocab_size < 1) throw Error("vocabulary must be non-empty");
    if (d_max < 0) throw Error("D_max must be >= 0");

    ModelParams<T> p;
    p.mode = mode;
    p.dual_tables = dual_tables;
    const double table_lim = 0.5 / dim;
    const double xavier_lim = std::sqrt(3.0 / dim);  // sqrt(6 / (fan_in + fan_out)) for d x d

    auto fill_uniform = [&](auto& m, double lim) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                m(r, c) = static_cast<T>(rng.next_real(-lim, lim));
    };

    p.concept_table.resize(dim, vocab_size);
    fill_uniform(p.concept_table, table_lim);
    if (dual_tables) {
        p.output_table.resize(dim, vocab_size);
        fill_uniform(p.output_table, table_lim);
    }
    p.interval_table.resize(d_max + 1, dim);
    fill_uniform(p.interval_table, table_lim);

    auto xavier = [&](auto& m) {
        m.resize(dim, dim);
        fill_uniform(m, xavier_lim);
    };
    xavier(p.W1);
    xavier(p.W2);
    xavier(p.W3);
    xavier(p.W);
    xavier(p.Wf1);
    xavier(p.Wf2);
    xavier(p.W1p);
    xavier(p.Wp);

    p.b1.setZero(dim, 1);
    p.b.setZero(dim, 1);
    p.bf.setZero(dim, 1);
    p.b1p.setZero(dim, 1);
    p.bp.setZero(dim, 1);
    return p;
}

}  // namespace tesan
