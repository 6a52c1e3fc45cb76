// Embedding evaluation: seeded k-means++ with restarts, normalized mutual
// information, and nearest-neighbour precision@1 against group labels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tesan/common.hpp"
#include "tesan/embedding_io.hpp"

namespace tesan {

struct KMeansResult {
    std::vector<int> assignment;         // point -> cluster in [0, k)
    Eigen::MatrixXd centroids;           // d x k
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_trajectory;  // one entry per Lloyd assignment step
};

namespace detail {

inline double sq_dist(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& c,
                      Eigen::Index j) {
    return (x.col(i) - c.col(j)).squaredNorm();
}

/// One seeded k-means++ run with Lloyd iterations.
inline KMeansResult kmeans_once(const Eigen::MatrixXd& x, int k, Rng& rng) {
    const Eigen::Index n = x.cols();
    KMeansResult res;
    res.centroids.resize(x.rows(), k);

    // k-means++ seeding
    std::vector<double> d2(static_cast<std::size_t>(n));
    res.centroids.col(0) = x.col(static_cast<Eigen::Index>(rng.next_below(
        static_cast<std::uint64_t>(n))));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j) best = std::min(best, sq_dist(x, i, res.centroids, j));
            d2[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        Eigen::Index pick;
        if (total > 0.0) {
            double r = rng.next_double() * total, acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[static_cast<std::size_t>(i)];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all points coincide with chosen centroids
            pick = static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
        }
        res.centroids.col(c) = x.col(pick);
    }

    // Lloyd iterations
    res.assignment.assign(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
    Eigen::MatrixXd next(x.rows(), k);
    for (int iter = 0; iter < 300; ++iter) {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(x, i, res.centroids, 0);
            for (int j = 1; j < k; ++j) {
                const double dj = sq_dist(x, i, res.centroids, j);
                if (dj < bd) {
                    bd = dj;
                    best = j;
                }
            }
            res.assignment[static_cast<std::size_t>(i)] = best;
            inertia += bd;
        }
        if (!res.inertia_trajectory.empty() &&
            inertia > res.inertia_trajectory.back() * (1.0 + 1e-9) + 1e-12)
            throw Error("k-means inertia increased across an iteration");
        res.inertia_trajectory.push_back(inertia);
        res.inertia = inertia;
        res.iterations = iter + 1;

        next.setZero();
        std::fill(counts.begin(), counts.end(), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = res.assignment[static_cast<std::size_t>(i)];
            next.col(a) += x.col(i);
            ++counts[static_cast<std::size_t>(a)];
        }
        for (int j = 0; j < k; ++j)
            if (counts[static_cast<std::size_t>(j)] > 0)
                next.col(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) continue;
            // re-seed an empty cluster with the point farthest from its
            // centroid, taken from a cluster that stays non-empty
            Eigen::Index far = 0;
            double fd = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int a = res.assignment[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(a)] <= 1) continue;
                const double di = sq_dist(x, i, res.centroids, a);
                if (di > fd) {
                    fd = di;
                    far = i;
                }
            }
            const auto old = static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(far)]);
            next.col(static_cast<Eigen::Index>(old)) =
                (next.col(static_cast<Eigen::Index>(old)) * static_cast<double>(counts[old]) -
                 x.col(far)) /
                static_cast<double>(counts[old] - 1);
            --counts[old];
            next.col(j) = x.col(far);
            counts[static_cast<std::size_t>(j)] = 1;
            res.assignment[static_cast<std::size_t>(far)] = j;
        }

        const double shift = (next - res.centroids).colwise().norm().maxCoeff();
        res.centroids = next;
        if (shift < 1e-6) break;
    }

    // final assignment and inertia against the converged centroids
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        double bd = sq_dist(x, i, res.centroids, 0);
        for (int j = 1; j < k; ++j) {
            const double dj = sq_dist(x, i, res.centroids, j);
            if (dj < bd) {
                bd = dj;
                best = j;
            }
        }
        res.assignment[static_cast<std::size_t>(i)] = best;
        inertia += bd;
    }
    res.inertia = inertia;
    res.inertia_trajectory.push_back(inertia);
    return res;
}

}  // namespace detail

/// Best-inertia assignment over `restarts` seeded k-means++ runs; ties keep
/// the earlier restart. Points are columns of x.
inline KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts) {
    if (k < 2) throw Error("k must be >= 2");
    if (x.cols() < k)
        throw Error("k-means needs at least k points: " + std::to_string(x.cols()) + " < " +
                    std::to_string(k));
    if (restarts < 1) throw Error("restarts must be >= 1");
    KMeansResult best;
    for (int r = 0; r < restarts; ++r) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(r));
        KMeansResult run = detail::kmeans_once(x, k, rng);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

enum class NmiNorm { Geometric, Arithmetic, Max };

inline NmiNorm nmi_norm_from_string(std::string_view s) {
    if (s == "geometric") return NmiNorm::Geometric;
    if (s == "arithmetic") return NmiNorm::Arithmetic;
    if (s == "max") return NmiNorm::Max;
    throw Error("unknown nmi norm '" + std::string(s) + "' (expected geometric|arithmetic|max)");
}

/// Normalized mutual information of two label sequences over the same items,
/// natural logs. Degenerate cases: both sides single-cluster -> 1, exactly
/// one side single-cluster -> 0.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b,
                  NmiNorm norm = NmiNorm::Geometric) {
    if (a.size() != b.size()) throw Error("label sequences differ in length");
    if (a.empty()) throw Error("no items to score");
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ma, mb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ma[a[i]] += 1.0;
        mb[b[i]] += 1.0;
    }
    double ha = 0.0, hb = 0.0, mi = 0.0;
    for (const auto& kv : ma) ha -= kv.second / n * std::log(kv.second / n);
    for (const auto& kv : mb) hb -= kv.second / n * std::log(kv.second / n);
    for (const auto& [kk, c] : joint) {
        const double pab = c / n;
        mi += pab * std::log(pab * n * n / (ma[kk.first] * mb[kk.second]));
    }
    if (ha == 0.0 && hb == 0.0) return 1.0;
    if (ha == 0.0 || hb == 0.0) return 0.0;
    double z = 0.0;
    switch (norm) {
        case NmiNorm::Geometric: z = std::sqrt(ha * hb); break;
        case NmiNorm::Arithmetic: z = (ha + hb) / 2.0; break;
        case NmiNorm::Max: z = std::max(ha, hb); break;
    }
    return std::clamp(mi / z, 0.0, 1.0);
}

enum class NnsMetric { Cosine, Euclidean };

inline NnsMetric nns_metric_from_string(std::string_view s) {
    if (s == "cosine") return NnsMetric::Cosine;
    if (s == "euclidean") return NnsMetric::Euclidean;
    throw Error("unknown metric '" + std::string(s) + "' (expected cosine|euclidean)");
}

struct NnsResult {
    double p_at_1 = 0.0;
    int evaluated = 0;
    int excluded_zero_norm = 0;
};

/// For every labeled point, the nearest other labeled point (ties broken by
/// lower index) scores a hit iff it shares the group. Zero-norm points are
/// excluded and counted.
inline NnsResult nns_p_at_1(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                            NnsMetric metric = NnsMetric::Cosine) {
    if (static_cast<std::size_t>(x.cols()) != labels.size())
        throw Error("points and labels differ in length");
    NnsResult res;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        if (x.col(i).norm() == 0.0)
            ++res.excluded_zero_norm;
        else
            keep.push_back(i);
    }
    if (keep.size() < 2) throw Error("need at least 2 labeled codes with nonzero embeddings");

    int hits = 0;
    for (std::size_t ii = 0; ii < keep.size(); ++ii) {
        const Eigen::Index i = keep[ii];
        Eigen::Index best = -1;
        double best_score = 0.0;
        for (std::size_t jj = 0; jj < keep.size(); ++jj) {
            if (jj == ii) continue;
            const Eigen::Index j = keep[jj];
            double score;
            if (metric == NnsMetric::Cosine)
                score = x.col(i).dot(x.col(j)) / (x.col(i).norm() * x.col(j).norm());
            else
                score = -(x.col(i) - x.col(j)).norm();
            if (best < 0 || score > best_score) {
                best = j;
                best_score = score;
            }
        }
        if (labels[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    res.evaluated = static_cast<int>(keep.size());
    res.p_at_1 = static_cast<double>(hits) / static_cast<double>(res.evaluated);
    return res;
}

/// TSV "code<TAB>group"; duplicate codes must agree on the group.
inline std::map<std::string, std::string> load_ground_truth(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read '" + path + "'");
    std::map<std::string, std::string> truth;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
            throw Error("line " + std::to_string(lineno) + ": expected 'code<TAB>group'");
        std::string code = line.substr(0, tab);
        std::string group = line.substr(tab + 1);
        auto [it, fresh] = truth.emplace(code, group);
        if (!fresh && it->second != group)
            throw Error("code '" + code + "' labeled both '" + it->second + "' and '" + group +
                        "'");
    }
    if (truth.empty()) throw Error("no labels in '" + path + "'");
    return truth;
}

namespace detail {

/// Intersects embedding codes with ground truth, in embedding order. Group
/// names map to dense ids by sorted order.
inline void labeled_subset(const Embeddings& emb, const std::map<std::string, std::string>& truth,
                           Eigen::MatrixXd& x, std::vector<int>& labels) {
    std::map<std::string, int> group_id;
    for (const auto& kv : truth) group_id.emplace(kv.second, 0);
    int next_id = 0;
    for (auto& kv : group_id) kv.second = next_id++;

    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < emb.codes.size(); ++i) {
        auto it = truth.find(emb.codes[i]);
        if (it == truth.end()) continue;
        cols.push_back(static_cast<Eigen::Index>(i));
        labels.push_back(group_id.at(it->second));
    }
    if (cols.empty()) throw Error("no labeled codes found in the embedding");
    x.resize(emb.values.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
        x.col(static_cast<Eigen::Index>(i)) = emb.values.col(cols[i]);
}

}  // namespace detail

struct ClusterEvalResult {
    double nmi = 0.0;
    int n_codes = 0;
    int k = 0;
};

/// k-means + NMI over the labeled subset of an embedding. k defaults to the
/// number of distinct groups present (k_override <= 0).
inline ClusterEvalResult eval_cluster(const Embeddings& emb,
                                      const std::map<std::string, std::string>& truth,
                                      int k_override, std::uint64_t seed, int restarts,
                                      NmiNorm norm = NmiNorm::Geometric) {
    Eigen::MatrixXd x;
    std::vector<int> labels;
    detail::labeled_subset(emb, truth, x, labels);
    int distinct = 0;
    {
        std::vector<int> u = labels;
        std::sort(u.begin(), u.end());
        distinct = static_cast<int>(std::unique(u.begin(), u.end()) - u.begin());
    }
    if (distinct < 2) throw Error("clustering needs >= 2 distinct groups, found " +
                                  std::to_string(distinct));
    const int k = k_override > 0 ? k_override : distinct;
    KMeansResult km = kmeans(x, k, seed, restarts);
    ClusterEvalResult res;
    res.nmi = nmi(km.assignment, labels, norm);
    res.n_codes = static_cast<int>(labels.size());
    res.k = k;
    return res;
}

struct NnsEvalResult {
    double p_at_1 = 0.0;
    int n_codes = 0;
    int excluded_zero_norm = 0;
};

/// P@1 over the labeled subset of an embedding.
inline NnsEvalResult eval_nns(const Embeddings& emb,
                              const std::map<std::string, std::string>& truth,
                              NnsMetric metric = NnsMetric::Cosine) {
    Eigen::MatrixXd x;
    std::vector<int> labels;
    detail::labeled_subset(emb, truth, x, labels);
    NnsResult r = nns_p_at_1(x, labels, metric);
    NnsEvalResult res;
    res.p_at_1 = r.p_at_1;
    res.n_codes = r.evaluated;
    res.excluded_zero_norm = r.excluded_zero_norm;
    return res;
}

}  // namespace tesan
