#include "nireg/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "nireg/errors.hpp"
#include "nireg/parallel.hpp"
#include "nireg/rng.hpp"

namespace nireg {

namespace {

// Squared distances from every row to one centroid.
Eigen::VectorXd sq_dist_to(const Eigen::MatrixXd& data, const Eigen::RowVectorXd& c) {
    return (data.rowwise() - c).rowwise().squaredNorm();
}

// Assignment step: nearest centroid, ties to the lowest index. Returns
// per-point squared distance to the assigned centroid.
Eigen::VectorXd assign_points(const Eigen::MatrixXd& data, const Eigen::MatrixXd& centroids,
                              std::vector<int>& assignment) {
    const Index n = data.rows();
    const int k = static_cast<int>(centroids.rows());
    Eigen::VectorXd best = sq_dist_to(data, centroids.row(0));
    assignment.assign(static_cast<std::size_t>(n), 0);
    for (int c = 1; c < k; ++c) {
        Eigen::VectorXd d = sq_dist_to(data, centroids.row(c));
        for (Index i = 0; i < n; ++i) {
            if (d(i) < best(i)) {
                best(i) = d(i);
                assignment[static_cast<std::size_t>(i)] = c;
            }
        }
    }
    return best;
}

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& data, int k, std::mt19937_64& rng) {
    const Index n = data.rows();
    Eigen::MatrixXd centroids(k, data.cols());
    std::uniform_int_distribution<Index> uniform_row(0, n - 1);
    centroids.row(0) = data.row(uniform_row(rng));
    Eigen::VectorXd d2 = sq_dist_to(data, centroids.row(0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Index pick;
        if (total > 0.0 && std::isfinite(total)) {
            const double target = unit(rng) * total;
            double cum = 0.0;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                cum += d2(i);
                if (cum >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = uniform_row(rng);
        }
        centroids.row(c) = data.row(pick);
        d2 = d2.cwiseMin(sq_dist_to(data, centroids.row(c)));
    }
    return centroids;
}

// Moves each empty centroid to the point currently farthest from its
// assigned centroid, then reassigns. Bounded retries; irreparable only for
// pathological duplicate-heavy inputs.
Eigen::VectorXd repair_empty(const Eigen::MatrixXd& data, Eigen::MatrixXd& centroids,
                             std::vector<int>& assignment, Eigen::VectorXd d2, int k) {
    for (int attempt = 0; attempt < 2 * k; ++attempt) {
        std::vector<Index> count(static_cast<std::size_t>(k), 0);
        for (int a : assignment) ++count[static_cast<std::size_t>(a)];
        int empty = -1;
        for (int c = 0; c < k; ++c) {
            if (count[static_cast<std::size_t>(c)] == 0) {
                empty = c;
                break;
            }
        }
        if (empty < 0) return d2;
        Index farthest = 0;
        d2.maxCoeff(&farthest);
        centroids.row(empty) = data.row(farthest);
        d2 = assign_points(data, centroids, assignment);
    }
    throw NumericError("kmeans: unable to form k non-empty clusters");
}

KMeansResult lloyd_run(const Eigen::MatrixXd& data, int k, std::uint64_t run_seed,
                       const KMeansOptions& opts) {
    std::mt19937_64 rng(run_seed);
    const Index n = data.rows();
    KMeansResult res;
    res.centroids = kmeanspp_init(data, k, rng);
    double prev_inertia = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iter; ++it) {
        Eigen::VectorXd d2 = assign_points(data, res.centroids, res.assignment);
        d2 = repair_empty(data, res.centroids, res.assignment, std::move(d2), k);
        res.inertia = d2.sum();
        res.iterations = it + 1;
        if (res.inertia > prev_inertia * (1.0 + 1e-9) + 1e-12) {
            throw NumericError("kmeans: inertia increased across Lloyd iterations");
        }
        prev_inertia = res.inertia;

        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, data.cols());
        std::vector<Index> count(static_cast<std::size_t>(k), 0);
        for (Index i = 0; i < n; ++i) {
            const int c = res.assignment[static_cast<std::size_t>(i)];
            next.row(c) += data.row(i);
            ++count[static_cast<std::size_t>(c)];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            next.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
            shift = std::max(shift, (next.row(c) - res.centroids.row(c)).norm());
        }
        res.centroids = next;
        if (shift < opts.tol) break;
    }
    // Final consistent state: assignment is the argmin of the final
    // centroids and inertia matches it exactly.
    Eigen::VectorXd d2 = assign_points(data, res.centroids, res.assignment);
    d2 = repair_empty(data, res.centroids, res.assignment, std::move(d2), k);
    res.inertia = d2.sum();
    return res;
}

std::vector<Index> class_indices(const LabelVector& labels, int cls) {
    std::vector<Index> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == cls) out.push_back(static_cast<Index>(i));
    }
    return out;
}

// Descending size, ties toward the lower cluster index.
std::vector<int> size_order(const KMeansResult& km, int k) {
    std::vector<Index> count(static_cast<std::size_t>(k), 0);
    for (int a : km.assignment) ++count[static_cast<std::size_t>(a)];
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return count[static_cast<std::size_t>(a)] > count[static_cast<std::size_t>(b)];
    });
    return order;
}

// Greedy globally-nearest centroid matching between the two class
// clusterings.
std::vector<std::pair<int, int>> centroid_pairs(const KMeansResult& km0,
                                                const KMeansResult& km1, int k) {
    Eigen::MatrixXd dist(k, k);
    for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
            dist(a, b) = (km0.centroids.row(a) - km1.centroids.row(b)).norm();
        }
    }
    std::vector<std::pair<int, int>> pairs;
    std::vector<char> used0(static_cast<std::size_t>(k), 0), used1(used0);
    for (int step = 0; step < k; ++step) {
        double best = std::numeric_limits<double>::infinity();
        int ba = -1, bb = -1;
        for (int a = 0; a < k; ++a) {
            if (used0[static_cast<std::size_t>(a)]) continue;
            for (int b = 0; b < k; ++b) {
                if (used1[static_cast<std::size_t>(b)]) continue;
                if (dist(a, b) < best) {
                    best = dist(a, b);
                    ba = a;
                    bb = b;
                }
            }
        }
        used0[static_cast<std::size_t>(ba)] = 1;
        used1[static_cast<std::size_t>(bb)] = 1;
        pairs.emplace_back(ba, bb);
    }
    return pairs;
}

} // namespace

KMeansResult kmeans(const Eigen::MatrixXd& data, int k, std::uint64_t seed,
                    const KMeansOptions& opts) {
    const Index n = data.rows();
    if (k < 1) throw ConfigError("kmeans requires k >= 1");
    if (n < k) throw DataError("kmeans requires n >= k (n=" + std::to_string(n) +
                               ", k=" + std::to_string(k) + ")");
    if (opts.restarts < 1) throw ConfigError("kmeans requires restarts >= 1");
    if (!data.allFinite()) throw DataError("kmeans input contains non-finite values");

    std::vector<KMeansResult> runs(static_cast<std::size_t>(opts.restarts));
    parallel_for(static_cast<std::size_t>(opts.restarts), opts.threads, [&](std::size_t r) {
        runs[r] = lloyd_run(data, k, derive_seed(seed, r), opts);
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].inertia < runs[best].inertia) best = r;
    }
    runs[best].seed = seed;
    return std::move(runs[best]);
}

const char* to_string(PairingRule rule) {
    switch (rule) {
        case PairingRule::by_index: return "by_index";
        case PairingRule::by_size: return "by_size";
        case PairingRule::by_centroid: return "by_centroid";
    }
    return "by_index";
}

PairingRule pairing_rule_from_string(const std::string& s) {
    if (s == "by_index") return PairingRule::by_index;
    if (s == "by_size") return PairingRule::by_size;
    if (s == "by_centroid") return PairingRule::by_centroid;
    throw ConfigError("unknown pairing rule: " + s);
}

SubpopulationPartition build_subpopulations(const LabeledDataset& dataset,
                                            const PcaTransform& transform,
                                            int k_per_class, std::uint64_t seed,
                                            PairingRule rule, const KMeansOptions& opts) {
    validate_dataset(dataset);
    if (k_per_class < 1) throw ConfigError("k_per_class must be >= 1");
    const auto idx0 = class_indices(dataset.labels, 0);
    const auto idx1 = class_indices(dataset.labels, 1);
    if (idx0.empty() || idx1.empty()) throw DataError("both classes must be present");
    for (const auto* idx : {&idx0, &idx1}) {
        if (static_cast<int>(idx->size()) < k_per_class) {
            throw DataError("class with " + std::to_string(idx->size()) +
                            " samples is smaller than k_per_class=" + std::to_string(k_per_class));
        }
    }

    const FeatureMatrix pcs = apply_pca(transform, dataset.features);
    Eigen::MatrixXd m0(static_cast<Index>(idx0.size()), pcs.cols());
    Eigen::MatrixXd m1(static_cast<Index>(idx1.size()), pcs.cols());
    for (std::size_t i = 0; i < idx0.size(); ++i) m0.row(static_cast<Index>(i)) = pcs.values.row(idx0[i]);
    for (std::size_t i = 0; i < idx1.size(); ++i) m1.row(static_cast<Index>(i)) = pcs.values.row(idx1[i]);

    SubpopulationPartition part;
    part.rule = rule;
    part.seed = seed;
    part.class0 = kmeans(m0, k_per_class, derive_seed(seed, 0), opts);
    part.class1 = kmeans(m1, k_per_class, derive_seed(seed, 1), opts);

    switch (rule) {
        case PairingRule::by_index:
            for (int c = 0; c < k_per_class; ++c) part.pairing.emplace_back(c, c);
            break;
        case PairingRule::by_size: {
            const auto o0 = size_order(part.class0, k_per_class);
            const auto o1 = size_order(part.class1, k_per_class);
            for (int c = 0; c < k_per_class; ++c) part.pairing.emplace_back(o0[c], o1[c]);
            break;
        }
        case PairingRule::by_centroid:
            part.pairing = centroid_pairs(part.class0, part.class1, k_per_class);
            break;
    }

    part.clusters.resize(static_cast<std::size_t>(k_per_class));
    part.counts.resize(static_cast<std::size_t>(k_per_class));
    for (int c = 0; c < k_per_class; ++c) {
        auto& rows = part.clusters[static_cast<std::size_t>(c)];
        auto& cnt = part.counts[static_cast<std::size_t>(c)];
        const auto [c0, c1] = part.pairing[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < idx0.size(); ++i) {
            if (part.class0.assignment[i] == c0) rows.push_back(idx0[i]);
        }
        cnt.n_class0 = static_cast<Index>(rows.size());
        for (std::size_t i = 0; i < idx1.size(); ++i) {
            if (part.class1.assignment[i] == c1) rows.push_back(idx1[i]);
        }
        cnt.n_class1 = static_cast<Index>(rows.size()) - cnt.n_class0;
        cnt.fraction_class1 =
            static_cast<double>(cnt.n_class1) / static_cast<double>(rows.size());
        std::sort(rows.begin(), rows.end());
    }
    return part;
}

SplitSpec make_ood_split(const SubpopulationPartition& partition, int test_cluster) {
    const int k = static_cast<int>(partition.clusters.size());
    if (test_cluster < 0 || test_cluster >= k) {
        throw ConfigError("test_cluster " + std::to_string(test_cluster) +
                          " out of range for " + std::to_string(k) + " clusters");
    }
    SplitSpec split;
    split.test_indices = partition.clusters[static_cast<std::size_t>(test_cluster)];
    for (int c = 0; c < k; ++c) {
        if (c == test_cluster) continue;
        const auto& rows = partition.clusters[static_cast<std::size_t>(c)];
        split.train_indices.insert(split.train_indices.end(), rows.begin(), rows.end());
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    return split;
}

nlohmann::json cluster_report_json(const SubpopulationPartition& partition) {
    nlohmann::json j;
    j["pairing_rule"] = to_string(partition.rule);
    j["seed"] = partition.seed;
    j["k_per_class"] = partition.clusters.size();
    auto arr = nlohmann::json::array();
    for (std::size_t c = 0; c < partition.clusters.size(); ++c) {
        const auto& cnt = partition.counts[c];
        const auto [c0, c1] = partition.pairing[c];
        arr.push_back({{"cluster", c},
                       {"n_class0", cnt.n_class0},
                       {"n_class1", cnt.n_class1},
                       {"n_total", cnt.n_class0 + cnt.n_class1},
                       {"fraction_class1", cnt.fraction_class1},
                       {"class0_cluster", c0},
                       {"class1_cluster", c1},
                       {"centroid_norm_class0", partition.class0.centroids.row(c0).norm()},
                       {"centroid_norm_class1", partition.class1.centroids.row(c1).norm()}});
    }
    j["clusters"] = std::move(arr);
    return j;
}

} // namespace nireg
