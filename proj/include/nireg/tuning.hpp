#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <vector>

#include "nireg/dataset.hpp"
#include "nireg/kmeans.hpp"
#include "nireg/logistic.hpp"
#include "nireg/pca.hpp"

namespace nireg {

enum class TuningProtocol { random_kfold, cluster_holdout };

const char* to_string(TuningProtocol protocol);

struct TuningResult {
    std::vector<double> grid;
    std::vector<std::vector<double>> per_fold_aucs;  // [grid value][fold]
    std::vector<double> mean_aucs;                   // per grid value
    double best_value = 0.0;
    TuningProtocol protocol = TuningProtocol::random_kfold;
    std::uint64_t seed = 0;
};

/// Index bookkeeping captured during a tuning run so protocol integrity
/// (no holdout leakage, folds partition the data) can be audited from the
/// outside.
struct TuningAudit {
    std::vector<std::vector<Index>> holdout_sets;           // per fold
    std::vector<std::vector<Index>> fit_sets;               // per fold
    std::vector<std::vector<std::vector<Index>>> anchor_sets;  // per fold, per anchor
};

/// Random stratified k-fold selection of the l2 strength: for each grid
/// value and fold, fit on the remainder and score AUC on the fold. The
/// best mean AUC wins; ties within 1e-12 go to the larger value.
TuningResult tune_l2(const LabeledDataset& dataset, const PcaTransform& transform,
                     const std::vector<double>& grid, int folds, std::uint64_t seed,
                     const SolverOptions& solver = {}, int threads = 0,
                     TuningAudit* audit = nullptr);

/// Cluster-holdout selection of the ni strength: each combined cluster
/// serves as the holdout in turn; anchors are re-fit on the remaining
/// clusters only, the joint ni model is fit on all remaining rows, and the
/// holdout is used exclusively for scoring.
TuningResult tune_ni(const LabeledDataset& dataset, const PcaTransform& transform,
                     const SubpopulationPartition& partition,
                     const std::vector<double>& grid,
                     std::optional<double> anchor_ridge = {},
                     const SolverOptions& solver = {}, int threads = 0,
                     TuningAudit* audit = nullptr);

/// Fallback for a single-cluster partition, where cluster holdout is
/// undefined: random stratified folds with the lone anchor re-fit on each
/// fold's training rows.
TuningResult tune_ni_kfold(const LabeledDataset& dataset, const PcaTransform& transform,
                           const std::vector<double>& grid, int folds, std::uint64_t seed,
                           std::optional<double> anchor_ridge = {},
                           const SolverOptions& solver = {}, int threads = 0,
                           TuningAudit* audit = nullptr);

/// Stratified fold assignment: per class, a seeded shuffle dealt round
/// robin over `folds` near-equal sets. Every fold contains both classes.
std::vector<std::vector<Index>> stratified_folds(const LabelVector& labels, int folds,
                                                 std::uint64_t seed);

nlohmann::json tuning_report_json(const TuningResult& result);

} // namespace nireg
