#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <utility>
#include <vector>

#include "nireg/dataset.hpp"
#include "nireg/pca.hpp"

namespace nireg {

struct KMeansResult {
    Eigen::MatrixXd centroids;    // k x m
    std::vector<int> assignment;  // n entries in [0, k)
    double inertia = 0.0;         // total within-cluster squared distance
    int iterations = 0;
    std::uint64_t seed = 0;
};

struct KMeansOptions {
    int restarts = 8;
    int max_iter = 300;
    double tol = 1e-6;  // max centroid shift that counts as converged
    int threads = 0;    // 0 = hardware concurrency
};

/// Lloyd iterations from k-means++ starts; the best-inertia restart wins
/// (ties broken toward the lower restart index), so the result is
/// deterministic for a given seed regardless of the worker count. Ties in
/// the assignment step go to the lowest centroid index; empty clusters are
/// repaired by reseeding at the point farthest from its assigned centroid.
KMeansResult kmeans(const Eigen::MatrixXd& data, int k, std::uint64_t seed,
                    const KMeansOptions& opts = {});

enum class PairingRule { by_index, by_size, by_centroid };

const char* to_string(PairingRule rule);
PairingRule pairing_rule_from_string(const std::string& s);

/// Partition of a labeled dataset into combined clusters: class-0 and
/// class-1 rows are clustered independently and one cluster of each class
/// is paired to form each combined cluster (the subpopulation set).
struct SubpopulationPartition {
    std::vector<std::vector<Index>> clusters;  // disjoint, cover all rows
    KMeansResult class0;
    KMeansResult class1;
    std::vector<std::pair<int, int>> pairing;  // (class0 cluster, class1 cluster)
    struct Counts {
        Index n_class0 = 0;
        Index n_class1 = 0;
        double fraction_class1 = 0.0;
    };
    std::vector<Counts> counts;
    PairingRule rule = PairingRule::by_index;
    std::uint64_t seed = 0;
};

/// Applies the transform, clusters each class into k_per_class clusters,
/// and pairs them per the rule. Every combined cluster contains at least
/// one sample of each class by construction.
SubpopulationPartition build_subpopulations(const LabeledDataset& dataset,
                                            const PcaTransform& transform,
                                            int k_per_class, std::uint64_t seed,
                                            PairingRule rule = PairingRule::by_index,
                                            const KMeansOptions& opts = {});

/// Withholds one combined cluster as the test set; the rest train.
SplitSpec make_ood_split(const SubpopulationPartition& partition, int test_cluster);

/// Report payload: per combined cluster sizes, class fractions and centroid
/// norms, plus the pairing rule and seed used.
nlohmann::json cluster_report_json(const SubpopulationPartition& partition);

} // namespace nireg
