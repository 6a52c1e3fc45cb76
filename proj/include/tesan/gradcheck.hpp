// Finite-difference gradient oracle and the randomized gradcheck suite that
// compares it against the analytic backward pass.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tesan/loss.hpp"
#include "tesan/params.hpp"

namespace tesan {

/// Central differences (f(x+eps) - f(x-eps)) / 2 eps for every scalar
/// parameter. loss_fn must be a pure function of the parameter set.
template <typename T, typename F>
GradientSet<T> finite_diff_grad(F&& loss_fn, const ModelParams<T>& params, T epsilon) {
    if (!(epsilon > T(0))) throw Error("epsilon must be positive");
    ModelParams<T> work = params;
    GradientSet<T> grad = zeros_like(params);
    for_each_tensor_pair(work, grad, [&](const char*, auto& theta, auto& gt) {
        for (Eigen::Index c = 0; c < theta.cols(); ++c) {
            for (Eigen::Index r = 0; r < theta.rows(); ++r) {
                const T saved = theta(r, c);
                theta(r, c) = saved + epsilon;
                const T fp = loss_fn(const_cast<const ModelParams<T>&>(work));
                theta(r, c) = saved - epsilon;
                const T fm = loss_fn(const_cast<const ModelParams<T>&>(work));
                theta(r, c) = saved;
                gt(r, c) = (fp - fm) / (T(2) * epsilon);
            }
        }
    });
    return grad;
}

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    Eigen::Index worst_row = 0, worst_col = 0;
    int worst_config = -1;
    int configs_run = 0;
};

namespace detail {

/// |a - f| / max(|a|, |f|, floor). The floor keeps finite-difference noise on
/// near-zero gradients (dead score biases, unused mode paths) from reading as
/// error; it sits well above the ~1e-8 noise of eps=1e-4 central differences.
inline double rel_err(double a, double f, double floor = 1e-3) {
    return std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor});
}

template <typename T>
void randomize(Mat<T>& m, Rng& rng, double lim) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = static_cast<T>(rng.next_real(-lim, lim));
}

}  // namespace detail

/// Random small-configuration sweep: analytic backward vs finite differences
/// across dims {2,3,4}, context lengths 1..4, negative counts 0..3 and all
/// four modes, with biases randomized too (init_params leaves them zero).
inline GradCheckReport gradcheck_suite(int n_configs, std::uint64_t seed, double epsilon = 1e-4) {
    if (n_configs < 1) throw Error("n_configs must be >= 1");
    Rng rng(seed);
    const Mode modes[] = {Mode::TeSA, Mode::MultiSA, Mode::Interval, Mode::NormalSA};
    GradCheckReport rep;
    for (int cfg = 0; cfg < n_configs; ++cfg) {
        const int d = rng.next_int(2, 4);
        const int m = rng.next_int(1, 4);
        const int r = rng.next_int(0, 3);
        const int vocab = rng.next_int(m + r + 2, m + r + 6);
        const std::int64_t d_max = rng.next_int(2, 10);
        const Mode mode = modes[cfg % 4];
        const bool dual = rng.next_int(0, 3) == 0;

        ModelParams<double> p = init_params<double>(d, vocab, d_max, mode, dual, rng);
        for_each_tensor(p, [&](const char*, Mat<double>& t) { detail::randomize(t, rng, 0.6); });

        ContextSample sample;
        sample.target = static_cast<std::int32_t>(rng.next_int(0, vocab - 1));
        for (int i = 0; i < m; ++i) {
            sample.ctx_ids.push_back(static_cast<std::int32_t>(rng.next_int(0, vocab - 1)));
            sample.ctx_days.push_back(rng.next_int(0, 2 * static_cast<int>(d_max)));
        }
        std::vector<std::int32_t> negatives;
        for (int i = 0; i < r; ++i)
            negatives.push_back(static_cast<std::int32_t>(rng.next_int(0, vocab - 1)));

        auto [loss, analytic] = backward(sample, negatives, p);
        (void)loss;
        auto loss_fn = [&](const ModelParams<double>& q) {
            Vec<double> h = tesan_forward(sample, q);
            return -nsg_objective(h, sample.target, negatives, q);
        };
        GradientSet<double> fd = finite_diff_grad(loss_fn, p, epsilon);

        for_each_tensor_pair(analytic, fd, [&](const char* name, const Mat<double>& a,
                                               const Mat<double>& f) {
            for (Eigen::Index cc = 0; cc < a.cols(); ++cc)
                for (Eigen::Index rr = 0; rr < a.rows(); ++rr) {
                    const double e = detail::rel_err(a(rr, cc), f(rr, cc));
                    if (e > rep.max_rel_err) {
                        rep.max_rel_err = e;
                        rep.worst_tensor = name;
                        rep.worst_row = rr;
                        rep.worst_col = cc;
                        rep.worst_config = cfg;
                    }
                }
        });
        ++rep.configs_run;
    }
    return rep;
}

}  // namespace tesan
