// Attention kernels: compatibility functions, feature-wise softmax, the
// temporal self-attention block with fusion gate, and attention pooling.
// Everything here is a pure function of (inputs, parameters).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tesan/common.hpp"
#include "tesan/journeys.hpp"
#include "tesan/params.hpp"

namespace tesan {

/// Per-target attention distributions: probs[j](k, i) = P^j[k, i].
template <typename T>
using AttentionProbs = std::vector<Mat<T>>;

inline Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>
delta_matrix(const std::vector<std::int64_t>& days) {
    const auto n = static_cast<Eigen::Index>(days.size());
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> d(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            d(i, j) = days[i] >= days[j] ? days[i] - days[j] : days[j] - days[i];
    return d;
}

template <typename T>
Mat<T> embed_lookup(const std::vector<std::int32_t>& ids, const Mat<T>& table) {
    if (ids.empty()) throw Error("empty context");
    Mat<T> c(table.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.cols())
            throw Error("concept id " + std::to_string(ids[i]) + " out of range [0, " +
                        std::to_string(table.cols()) + ")");
        c.col(static_cast<Eigen::Index>(i)) = table.col(ids[i]);
    }
    return c;
}

template <typename T>
Mat<T> embed_lookup(const std::vector<std::int32_t>& ids, const ModelParams<T>& p) {
    return embed_lookup(ids, p.concept_table);
}

/// Interval embedding e_delta: row min(delta, D_max) of the interval table.
template <typename T>
Vec<T> interval_lookup(std::int64_t delta, const ModelParams<T>& p) {
    if (delta < 0) throw Error("negative interval " + std::to_string(delta));
    const std::int64_t clamped = delta > p.max_delta() ? p.max_delta() : delta;
    return p.interval_table.row(clamped).transpose();
}

/// Additive (MLP) compatibility: w^T tanh(W1 c_i + W2 q + b1) + b.
template <typename T>
T additive_compat(const Vec<T>& ci, const Vec<T>& q, const Mat<T>& W1, const Mat<T>& W2,
                  const Vec<T>& b1, const Vec<T>& w, T b) {
    if (ci.size() != q.size() || W1.cols() != ci.size() || W2.cols() != q.size() ||
        W1.rows() != b1.size() || W2.rows() != b1.size() || w.size() != b1.size())
        throw Error("shape mismatch in additive_compat");
    Vec<T> a = (W1 * ci + W2 * q + b1).array().tanh();
    return w.dot(a) + b;
}

/// Multiplicative compatibility: <W1 c_i, W2 q>.
template <typename T>
T multiplicative_compat(const Vec<T>& ci, const Vec<T>& q, const Mat<T>& W1, const Mat<T>& W2) {
    if (W1.cols() != ci.size() || W2.cols() != q.size() || W1.rows() != W2.rows())
        throw Error("shape mismatch in multiplicative_compat");
    return (W1 * ci).dot(W2 * q);
}

/// Feature-wise (multi-dimensional) temporal compatibility for one pair.
/// Mode selects which terms of W^T tanh(W1 c_i + W2 c_j + W3 e_d + b1) + b
/// survive; NormalSA collapses the projection to a scalar shared across
/// features.
template <typename T>
Vec<T> temporal_compat(const Vec<T>& ci, const Vec<T>& cj, std::int64_t delta,
                       const ModelParams<T>& p) {
    if (ci.size() != p.dim() || cj.size() != p.dim())
        throw Error("shape mismatch in temporal_compat");
    Vec<T> z = p.b1;
    switch (p.mode) {
        case Mode::TeSA:
            z += p.W1 * ci + p.W2 * cj + p.W3 * interval_lookup(delta, p);
            break;
        case Mode::MultiSA:
            z += p.W1 * ci + p.W2 * cj;
            break;
        case Mode::Interval:
            z += p.W3 * interval_lookup(delta, p);
            break;
        case Mode::NormalSA: {
            z += p.W1 * ci + p.W2 * cj;
            Vec<T> a = z.array().tanh().matrix();
            T score = p.W.col(0).dot(a) + p.b(0, 0);
            return Vec<T>::Constant(p.dim(), score);
        }
    }
    Vec<T> a = z.array().tanh().matrix();
    return p.W.transpose() * a + p.b;
}

/// Row-wise softmax over columns with max-subtraction; sums are accumulated
/// in double regardless of T.
template <typename T>
Mat<T> multidim_softmax(const Mat<T>& scores) {
    if (!scores.allFinite()) throw NumericError("non-finite attention scores");
    Eigen::MatrixXd s = scores.template cast<double>();
    for (Eigen::Index k = 0; k < s.rows(); ++k) {
        Eigen::ArrayXd row = s.row(k).transpose().array();
        Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
        s.row(k) = (e / e.sum()).matrix().transpose();
    }
    return s.template cast<T>();
}

/// Intermediates of one tesan_forward pass, laid out for the backward pass.
/// Pair tensors are stacked d x n^2 with column q = j*n + i (i fastest), so
/// the block [j*n, j*n + n) holds everything for target position j.
template <typename T>
struct TesaTrace {
    Mat<T> c;                         // d x n context embeddings
    std::vector<std::int64_t> deltas; // n^2 clamped interval ids, q = j*n + i
    Mat<T> estack;                    // d x n^2 interval embeddings (TeSA/Interval only)
    Mat<T> astack;                    // d x n^2 tanh activations of the score MLP
    Mat<T> probs;                     // d x n^2 attention, block j = P^j
    Mat<T> s;                         // d x n attended summaries
    Mat<T> gate;                      // d x n fusion gate F
    Mat<T> u;                         // d x n gated outputs
    Mat<T> apool;                     // d x n pooling tanh activations
    Mat<T> pool_probs;                // d x n pooling attention
    Vec<T> h;                         // d final representation

    Eigen::Index n() const { return c.cols(); }
};

namespace detail {

/// Scores all n^2 ordered pairs, filling c/deltas/estack/astack of the trace,
/// and returns the stacked d x n^2 score matrix.
template <typename T>
Mat<T> score_pairs(const Mat<T>& c, const std::vector<std::int64_t>& days,
                   const ModelParams<T>& p, TesaTrace<T>& tr) {
    const Eigen::Index d = c.rows();
    const Eigen::Index n = c.cols();
    if (n != static_cast<Eigen::Index>(days.size()))
        throw Error("context size mismatch: " + std::to_string(n) + " embeddings, " +
                    std::to_string(days.size()) + " days");

    const bool content = p.mode != Mode::Interval;
    const bool interval = p.mode == Mode::TeSA || p.mode == Mode::Interval;

    tr.c = c;
    tr.deltas.assign(static_cast<std::size_t>(n) * n, 0);
    Mat<T> z = p.b1.replicate(1, n * n);

    if (content) {
        Mat<T> A = p.W1 * c;
        Mat<T> B = p.W2 * c;
        for (Eigen::Index j = 0; j < n; ++j)
            z.middleCols(j * n, n) += A.colwise() + Vec<T>(B.col(j));
    }
    if (interval) {
        tr.estack.resize(d, n * n);
        const auto delta = delta_matrix(days);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) {
                std::int64_t dd = delta(i, j);
                if (dd > p.max_delta()) dd = p.max_delta();
                tr.deltas[static_cast<std::size_t>(j * n + i)] = dd;
                tr.estack.col(j * n + i) = p.interval_table.row(dd).transpose();
            }
        z += p.W3 * tr.estack;
    } else {
        tr.estack.resize(0, 0);
    }

    tr.astack = z.array().tanh().matrix();
    if (p.mode == Mode::NormalSA) {
        // one scalar per pair, broadcast down the feature axis
        Eigen::Matrix<T, 1, Eigen::Dynamic> sc = p.W.col(0).transpose() * tr.astack;
        sc.array() += p.b(0, 0);
        return sc.replicate(d, 1);
    }
    Mat<T> scores = p.W.transpose() * tr.astack;
    scores.colwise() += Vec<T>(p.b);
    return scores;
}

/// Fills the remaining trace fields from stacked scores; returns h.
template <typename T>
Vec<T> attend_and_pool(const Mat<T>& scores, const ModelParams<T>& p, TesaTrace<T>& tr) {
    const Eigen::Index d = tr.c.rows();
    const Eigen::Index n = tr.c.cols();

    tr.probs.resize(d, n * n);
    tr.s.resize(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        tr.probs.middleCols(j * n, n) = multidim_softmax<T>(scores.middleCols(j * n, n));
        tr.s.col(j) =
            (tr.probs.middleCols(j * n, n).array() * tr.c.array()).rowwise().sum().matrix();
    }

    Mat<T> g = p.Wf1 * tr.s + p.Wf2 * tr.c;
    g.colwise() += Vec<T>(p.bf);
    tr.gate = ((-g.array()).exp() + T(1)).inverse().matrix();
    tr.u = (tr.gate.array() * tr.s.array() + (T(1) - tr.gate.array()) * tr.c.array()).matrix();

    Mat<T> zp = p.W1p * tr.u;
    zp.colwise() += Vec<T>(p.b1p);
    tr.apool = zp.array().tanh().matrix();
    Mat<T> tscore = p.Wp.transpose() * tr.apool;
    tscore.colwise() += Vec<T>(p.bp);
    tr.pool_probs = multidim_softmax<T>(tscore);
    tr.h = (tr.pool_probs.array() * tr.u.array()).rowwise().sum().matrix();
    return tr.h;
}

}  // namespace detail

/// Attention distributions P^j for every target position j.
template <typename T>
AttentionProbs<T> self_attention_probs(const Mat<T>& c, const std::vector<std::int64_t>& days,
                                       const ModelParams<T>& p) {
    TesaTrace<T> tr;
    Mat<T> scores = detail::score_pairs(c, days, p, tr);
    const Eigen::Index n = c.cols();
    AttentionProbs<T> probs;
    probs.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j)
        probs.push_back(multidim_softmax<T>(scores.middleCols(j * n, n)));
    return probs;
}

/// Temporal self-attention: s_j = sum_i P^j[:, i] .* c_i.
template <typename T>
Mat<T> self_attend(const Mat<T>& c, const std::vector<std::int64_t>& days,
                   const ModelParams<T>& p) {
    TesaTrace<T> tr;
    Mat<T> scores = detail::score_pairs(c, days, p, tr);
    const Eigen::Index n = c.cols();
    Mat<T> s(c.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Mat<T> pj = multidim_softmax<T>(scores.middleCols(j * n, n));
        s.col(j) = (pj.array() * c.array()).rowwise().sum().matrix();
    }
    return s;
}

/// Dimension-wise fusion gate: u = F .* s + (1 - F) .* c with
/// F = sigmoid(Wf1 s + Wf2 c + bf).
template <typename T>
Mat<T> fusion_gate(const Mat<T>& s, const Mat<T>& c, const ModelParams<T>& p) {
    if (s.rows() != c.rows() || s.cols() != c.cols())
        throw Error("shape mismatch in fusion_gate");
    Mat<T> g = p.Wf1 * s + p.Wf2 * c;
    g.colwise() += Vec<T>(p.bf);
    Mat<T> f = ((-g.array()).exp() + T(1)).inverse().matrix();
    return (f.array() * s.array() + (T(1) - f.array()) * c.array()).matrix();
}

/// TeSA block: self-attention followed by the fusion gate.
template <typename T>
Mat<T> tesa_forward(const Mat<T>& c, const std::vector<std::int64_t>& days,
                    const ModelParams<T>& p) {
    return fusion_gate(self_attend(c, days, p), c, p);
}

/// Query-free attention pooling of a context matrix to a single vector.
template <typename T>
Vec<T> attention_pool(const Mat<T>& u, const ModelParams<T>& p) {
    if (u.cols() < 1) throw Error("empty context");
    Mat<T> zp = p.W1p * u;
    zp.colwise() += Vec<T>(p.b1p);
    Mat<T> a = zp.array().tanh().matrix();
    Mat<T> tscore = p.Wp.transpose() * a;
    tscore.colwise() += Vec<T>(p.bp);
    Mat<T> probs = multidim_softmax<T>(tscore);
    return (probs.array() * u.array()).rowwise().sum().matrix();
}

/// Full pipeline with trace capture for the backward pass.
template <typename T>
Vec<T> tesan_forward_traced(const std::vector<std::int32_t>& ctx_ids,
                            const std::vector<std::int64_t>& ctx_days,
                            const ModelParams<T>& p, TesaTrace<T>& tr) {
    Mat<T> c = embed_lookup(ctx_ids, p);
    Mat<T> scores = detail::score_pairs(c, ctx_days, p, tr);
    return detail::attend_and_pool(scores, p, tr);
}

/// Context representation h for one training sample.
template <typename T>
Vec<T> tesan_forward(const ContextSample& sample, const ModelParams<T>& p) {
    TesaTrace<T> tr;
    return tesan_forward_traced(sample.ctx_ids, sample.ctx_days, p, tr);
}

}  // namespace tesan
