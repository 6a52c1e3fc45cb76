// Optimizer loop: shuffled mini-batches of context samples, summed batch
// gradients, Adam or SGD updates, divergence rollback, resumable state.
#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "tesan/journeys.hpp"
#include "tesan/loss.hpp"
#include "tesan/params.hpp"

namespace tesan {

enum class Optimizer { Adam, SGD };

struct TrainConfig {
    int dim = 100;
    int window = 6;
    int negatives = 10;
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    Mode mode = Mode::TeSA;
    bool dual_tables = false;
    Optimizer optimizer = Optimizer::Adam;
    int workers = 1;
    std::int64_t d_max_override = -1;  // < 0: use the corpus maximum interval

    void validate() const {
        if (dim < 1) throw Error("dim must be >= 1");
        if (window < 1) throw Error("window must be >= 1");
        if (negatives < 0) throw Error("negatives must be >= 0");
        if (epochs < 1) throw Error("epochs must be >= 1");
        if (batch_size < 1) throw Error("batch_size must be >= 1");
        if (!(learning_rate > 0)) throw Error("learning_rate must be > 0");
        if (workers < 1) throw Error("workers must be >= 1");
    }
};

/// Everything needed to continue training bit-identically: parameters,
/// optimizer moments, step counter, completed-epoch count and the rng state
/// as of that epoch boundary.
template <typename T>
struct TrainState {
    ModelParams<T> params;
    GradientSet<T> adam_m, adam_v;
    std::int64_t adam_t = 0;
    int epoch = 0;
    std::string rng_state;
};

struct TrainReport {
    std::vector<double> epoch_mean_loss;  // mean -J per completed epoch
    int completed_epochs = 0;
    bool diverged = false;
};

template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg, int vocab_size, std::int64_t d_max) {
    cfg.validate();
    if (d_max < 0) throw Error("D_max must be >= 0");
    Rng rng(cfg.seed);
    TrainState<T> st;
    st.params = init_params<T>(cfg.dim, vocab_size, d_max, cfg.mode, cfg.dual_tables, rng);
    st.adam_m = zeros_like(st.params);
    st.adam_v = zeros_like(st.params);
    st.rng_state = rng.state();
    return st;
}

namespace detail {

template <typename T>
void apply_update(TrainState<T>& st, const GradientSet<T>& grad, const TrainConfig& cfg) {
    const T lr = static_cast<T>(cfg.learning_rate);
    if (cfg.optimizer == Optimizer::SGD) {
        for_each_tensor_pair(st.params, grad, [&](const char*, Mat<T>& th, const Mat<T>& g) {
            th -= lr * g;
        });
        return;
    }
    const T b1 = static_cast<T>(0.9), b2 = static_cast<T>(0.999), eps = static_cast<T>(1e-8);
    st.adam_t += 1;
    const T corr1 = T(1) - static_cast<T>(std::pow(0.9, static_cast<double>(st.adam_t)));
    const T corr2 = T(1) - static_cast<T>(std::pow(0.999, static_cast<double>(st.adam_t)));
    for_each_tensor_pair(st.adam_m, grad, [&](const char*, Mat<T>& m, const Mat<T>& g) {
        m = (b1 * m.array() + (T(1) - b1) * g.array()).matrix();
    });
    for_each_tensor_pair(st.adam_v, grad, [&](const char*, Mat<T>& v, const Mat<T>& g) {
        v = (b2 * v.array() + (T(1) - b2) * g.array().square()).matrix();
    });
    for_each_tensor_triple(
        st.params, st.adam_m, st.adam_v,
        [&](const char*, Mat<T>& th, const Mat<T>& m, const Mat<T>& v) {
            th -= (lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps)).matrix();
        });
}

}  // namespace detail

/// Runs epochs [state.epoch, cfg.epochs). Negatives are drawn sequentially in
/// sample order before each batch is dispatched, and per-sample gradients are
/// folded in sample order, so results are bit-identical for any worker count.
/// A non-finite loss rolls the state back to the last epoch boundary and sets
/// report.diverged.
template <typename T>
TrainReport train(TrainState<T>& state, const std::vector<ContextSample>& samples,
                  const Vocabulary& vocab, const TrainConfig& cfg,
                  const std::function<void(int, double)>& on_epoch = {}) {
    cfg.validate();
    if (samples.empty()) throw Error("no training samples");

    Rng rng(0);
    rng.set_state(state.rng_state);
    TrainState<T> snapshot = state;

    TrainReport report;
    report.completed_epochs = state.epoch;
    const std::size_t n = samples.size();
    std::vector<std::size_t> order(n);
    GradientSet<T> batch_grad = zeros_like(state.params);
    std::vector<std::vector<std::int32_t>> negs(cfg.batch_size);
    std::vector<SampleGrad<T>> slots(cfg.batch_size);

    for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        double loss_sum = 0.0;
        bool bad = false;

        for (std::size_t start = 0; start < n && !bad; start += cfg.batch_size) {
            const std::size_t b = std::min<std::size_t>(cfg.batch_size, n - start);
            for (std::size_t i = 0; i < b; ++i)
                negs[i] = sample_negatives(vocab, samples[order[start + i]].target,
                                           cfg.negatives, rng);

            auto compute = [&](std::size_t i) {
                slots[i] = backward_sample(samples[order[start + i]], negs[i], state.params);
            };
            if (cfg.workers <= 1 || b == 1) {
                try {
                    for (std::size_t i = 0; i < b; ++i) compute(i);
                } catch (const NumericError&) {
                    bad = true;
                }
            } else {
                const int w = std::min<int>(cfg.workers, static_cast<int>(b));
                std::vector<std::exception_ptr> errs(w);
                std::vector<std::thread> pool;
                pool.reserve(w);
                for (int t = 0; t < w; ++t)
                    pool.emplace_back([&, t] {
                        try {
                            for (std::size_t i = t; i < b; i += w) compute(i);
                        } catch (...) {
                            errs[t] = std::current_exception();
                        }
                    });
                for (auto& th : pool) th.join();
                for (auto& e : errs) {
                    if (!e) continue;
                    try {
                        std::rethrow_exception(e);
                    } catch (const NumericError&) {
                        bad = true;
                    }
                }
            }
            if (bad) break;

            for_each_tensor(batch_grad, [](const char*, Mat<T>& t) { t.setZero(); });
            for (std::size_t i = 0; i < b; ++i) {
                accumulate(batch_grad, slots[i]);
                loss_sum += static_cast<double>(slots[i].loss);
            }
            detail::apply_update(state, batch_grad, cfg);
        }

        const double mean_loss = loss_sum / static_cast<double>(n);
        if (bad || !std::isfinite(mean_loss)) {
            state = snapshot;
            report.diverged = true;
            break;
        }
        state.epoch = epoch + 1;
        state.rng_state = rng.state();
        snapshot = state;
        report.epoch_mean_loss.push_back(mean_loss);
        report.completed_epochs = state.epoch;
        if (on_epoch) on_epoch(epoch + 1, mean_loss);
    }
    return report;
}

}  // namespace tesan
