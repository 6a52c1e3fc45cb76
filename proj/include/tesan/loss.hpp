// Negative-sampling objective and the analytic backward pass through
// attention pooling, the fusion gate and temporal self-attention.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tesan/attention.hpp"
#include "tesan/journeys.hpp"
#include "tesan/params.hpp"

namespace tesan {

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

/// log(sigmoid(x)) without overflow for large |x|.
template <typename T>
T log_sigmoid(T x) {
    return std::min(x, T(0)) - std::log1p(std::exp(-std::abs(x)));
}

/// Negative-sampling objective J = log s(c_t.h) + sum_j log s(-c_j.h).
/// Always <= 0; training minimizes -J. Target and negative vectors come from
/// the output-side table (the concept table itself unless dual_tables).
template <typename T>
T nsg_objective(const Vec<T>& h, std::int32_t target, const std::vector<std::int32_t>& negatives,
                const ModelParams<T>& p) {
    const auto& out = p.out_table();
    auto col = [&](std::int32_t id) {
        if (id < 0 || id >= out.cols())
            throw Error("concept id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(out.cols()) + ")");
        return out.col(id);
    };
    T j = log_sigmoid(T(col(target).dot(h)));
    for (std::int32_t neg : negatives) j += log_sigmoid(T(-col(neg).dot(h)));
    return j;
}

/// Sparse per-sample gradient of -J. Embedding-table gradients are kept as
/// (index, vector) maps so a sample touches O(n + r) columns, not the full
/// table; the small weight tensors are dense. Map iteration order is sorted,
/// which keeps the sequential fold deterministic.
template <typename T>
struct SampleGrad {
    T loss = T(0);
    std::map<std::int32_t, Vec<T>> concept_cols;
    std::map<std::int32_t, Vec<T>> output_cols;   // populated only with dual tables
    std::map<std::int64_t, Vec<T>> interval_rows;
    Mat<T> W1, W2, W3, b1, W, b, Wf1, Wf2, bf, W1p, b1p, Wp, bp;
};

namespace detail {

template <typename K, typename T>
void add_sparse(std::map<K, Vec<T>>& m, K key, const Vec<T>& v) {
    auto [it, fresh] = m.try_emplace(key, v);
    if (!fresh) it->second += v;
}

}  // namespace detail

/// Reverse-mode gradients of loss = -J for one sample. Every returned tensor
/// is an exact partial derivative; parameters the sample never touches do not
/// appear (sparse maps) or are zero (dense blocks of unused modes).
template <typename T>
SampleGrad<T> backward_sample(const ContextSample& sample,
                              const std::vector<std::int32_t>& negatives,
                              const ModelParams<T>& p) {
    const Eigen::Index d = p.dim();
    TesaTrace<T> tr;
    Vec<T> h = tesan_forward_traced(sample.ctx_ids, sample.ctx_days, p, tr);
    if (!h.allFinite()) throw NumericError("non-finite forward output (attention)");
    const Eigen::Index n = tr.n();

    SampleGrad<T> g;
    g.W1.setZero(d, d);
    g.W2.setZero(d, d);
    g.W3.setZero(d, d);
    g.b1.setZero(d, 1);
    g.W.setZero(d, d);
    g.b.setZero(d, 1);
    g.Wf1.setZero(d, d);
    g.Wf2.setZero(d, d);
    g.bf.setZero(d, 1);
    g.W1p.setZero(d, d);
    g.b1p.setZero(d, 1);
    g.Wp.setZero(d, d);
    g.bp.setZero(d, 1);

    // loss and dL/dh; output-side column gradients fall out directly
    const auto& out = p.out_table();
    auto& out_cols = p.dual_tables ? g.output_cols : g.concept_cols;
    auto col = [&](std::int32_t id) -> Vec<T> {
        if (id < 0 || id >= out.cols())
            throw Error("concept id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(out.cols()) + ")");
        return out.col(id);
    };
    Vec<T> ct = col(sample.target);
    T xt = ct.dot(h);
    g.loss = -log_sigmoid(xt);
    Vec<T> dh = Vec<T>::Zero(d);
    T at = sigmoid(-xt);  // -dL/dx_t
    dh -= at * ct;
    detail::add_sparse(out_cols, sample.target, Vec<T>(-at * h));
    for (std::int32_t neg : negatives) {
        Vec<T> cn = col(neg);
        T xn = cn.dot(h);
        g.loss -= log_sigmoid(-xn);
        T an = sigmoid(xn);  // dL/dx_n
        dh += an * cn;
        detail::add_sparse(out_cols, neg, Vec<T>(an * h));
    }
    if (!std::isfinite(static_cast<double>(g.loss)))
        throw NumericError("non-finite loss (objective)");

    // attention pooling: h[k] = sum_i P[k,i] u[k,i]
    Mat<T> du = (tr.pool_probs.array().colwise() * dh.array()).matrix();
    Mat<T> dtscore =
        (du.array() * (tr.u.array().colwise() - tr.h.array())).matrix();
    Mat<T> dapool = p.Wp * dtscore;
    g.Wp += tr.apool * dtscore.transpose();
    g.bp += dtscore.rowwise().sum();
    Mat<T> dzp = ((T(1) - tr.apool.array().square()) * dapool.array()).matrix();
    g.W1p += dzp * tr.u.transpose();
    g.b1p += dzp.rowwise().sum();
    du += p.W1p.transpose() * dzp;

    // fusion gate: u = F .* s + (1-F) .* c
    Mat<T> ds = (tr.gate.array() * du.array()).matrix();
    Mat<T> dc = ((T(1) - tr.gate.array()) * du.array()).matrix();
    Mat<T> dgate = ((tr.s.array() - tr.c.array()) * du.array()).matrix();
    Mat<T> dg = (tr.gate.array() * (T(1) - tr.gate.array()) * dgate.array()).matrix();
    g.Wf1 += dg * tr.s.transpose();
    g.Wf2 += dg * tr.c.transpose();
    g.bf += dg.rowwise().sum();
    ds += p.Wf1.transpose() * dg;
    dc += p.Wf2.transpose() * dg;

    // self-attention: s_j[k] = sum_i P^j[k,i] c[k,i]
    Mat<T> dscores(d, n * n);
    for (Eigen::Index j = 0; j < n; ++j) {
        auto pj = tr.probs.middleCols(j * n, n);
        Mat<T> wscaled = (pj.array().colwise() * ds.col(j).array()).matrix();
        dc += wscaled;  // value path
        dscores.middleCols(j * n, n) =
            (wscaled.array() * (tr.c.array().colwise() - tr.s.col(j).array())).matrix();
    }

    // score projection
    Mat<T> dastack;
    if (p.mode == Mode::NormalSA) {
        Eigen::Matrix<T, 1, Eigen::Dynamic> dscalar = dscores.colwise().sum();
        dastack = p.W.col(0) * dscalar;
        g.W.col(0) += tr.astack * dscalar.transpose();
        g.b(0, 0) += dscalar.sum();
    } else {
        dastack = p.W * dscores;
        g.W += tr.astack * dscores.transpose();
        g.b += dscores.rowwise().sum();
    }
    Mat<T> dz = ((T(1) - tr.astack.array().square()) * dastack.array()).matrix();
    g.b1 += dz.rowwise().sum();

    const bool content = p.mode != Mode::Interval;
    const bool interval = p.mode == Mode::TeSA || p.mode == Mode::Interval;
    if (content) {
        // z_{j*n+i} = W1 c_i + W2 c_j + ...: blocks share the i -> column map
        Mat<T> s1 = Mat<T>::Zero(d, n);
        Mat<T> t2(d, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            s1 += dz.middleCols(j * n, n);
            t2.col(j) = dz.middleCols(j * n, n).rowwise().sum();
        }
        g.W1 += s1 * tr.c.transpose();
        g.W2 += t2 * tr.c.transpose();
        dc += p.W1.transpose() * s1 + p.W2.transpose() * t2;
    }
    if (interval) {
        g.W3 += dz * tr.estack.transpose();
        Mat<T> de = p.W3.transpose() * dz;
        for (Eigen::Index q = 0; q < n * n; ++q)
            detail::add_sparse(g.interval_rows, tr.deltas[static_cast<std::size_t>(q)],
                               Vec<T>(de.col(q)));
    }

    // context embedding columns (shared ids within the window accumulate)
    for (Eigen::Index i = 0; i < n; ++i)
        detail::add_sparse(g.concept_cols, sample.ctx_ids[static_cast<std::size_t>(i)],
                           Vec<T>(dc.col(i)));
    return g;
}

/// Folds one sample gradient into a dense set. Sequential, fixed-order use of
/// this fold is what makes multi-worker training reproducible.
template <typename T>
void accumulate(GradientSet<T>& total, const SampleGrad<T>& g) {
    for (const auto& [id, v] : g.concept_cols) total.concept_table.col(id) += v;
    for (const auto& [id, v] : g.output_cols) total.output_table.col(id) += v;
    for (const auto& [row, v] : g.interval_rows)
        total.interval_table.row(row) += v.transpose();
    total.W1 += g.W1;
    total.W2 += g.W2;
    total.W3 += g.W3;
    total.b1 += g.b1;
    total.W += g.W;
    total.b += g.b;
    total.Wf1 += g.Wf1;
    total.Wf2 += g.Wf2;
    total.bf += g.bf;
    total.W1p += g.W1p;
    total.b1p += g.b1p;
    total.Wp += g.Wp;
    total.bp += g.bp;
}

/// Dense single-sample gradient of -J, mainly for verification.
template <typename T>
std::pair<T, GradientSet<T>> backward(const ContextSample& sample,
                                      const std::vector<std::int32_t>& negatives,
                                      const ModelParams<T>& p) {
    SampleGrad<T> g = backward_sample(sample, negatives, p);
    GradientSet<T> dense = zeros_like(p);
    accumulate(dense, g);
    return {g.loss, std::move(dense)};
}

}  // namespace tesan
