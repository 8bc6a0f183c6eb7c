#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "nireg/dataset.hpp"
#include "nireg/kmeans.hpp"
#include "nireg/logistic.hpp"
#include "nireg/pca.hpp"
#include "nireg/roc.hpp"
#include "nireg/synthetic.hpp"
#include "nireg/tuning.hpp"

namespace nireg {

inline constexpr const char* kVersion = "0.1.0";

/// Top-level seeds; every random choice in a pipeline run flows from one
/// of these three streams and is echoed into every report.
struct PipelineSeeds {
    std::uint64_t clustering = 1;
    std::uint64_t cv = 2;
    std::uint64_t generation = 3;
};

struct CsvInput {
    std::string path;
    std::string label_column = "label";
    bool has_header = true;
    std::optional<int> label_index;  // set when selecting by index
};

/// Full experiment configuration. Input is either a CSV file (the OOD test
/// set is carved by per-class clustering and make_ood_split) or a generator
/// config (the held-out environment is the OOD test set).
struct PipelineConfig {
    std::optional<CsvInput> input;
    std::optional<GeneratorConfig> generator;
    int holdout_env = -1;  // generator mode; -1 = last environment

    int k_split = 5;       // carve clustering (CSV mode)
    int test_cluster = 0;  // withheld combined cluster (CSV mode)
    int k_train = 5;       // training subpopulations
    PairingRule pairing = PairingRule::by_index;

    double rank_tolerance = 1e-9;
    std::optional<double> anchor_ridge;  // unset = 1e-4 * cluster size
    std::vector<double> lambda_grid;     // empty = 13 points 1e-6..1e6
    std::vector<double> alpha_grid;      // empty = 13 points 1e-6..1e6
    int folds = 5;
    KMeansOptions kmeans_opts;
    SolverOptions solver;
    PipelineSeeds seeds;
    std::string out_dir;
    int threads = 0;
    bool quiet = false;

    void validate() const;
};

/// 13 log-spaced grid points 1e-6 .. 1e6.
std::vector<double> default_grid();

/// The synthetic acceptance benchmark: generator defaults with the last
/// environment held out, k_train = n_envs - 1, nearest-centroid pairing
/// and 24 k-means restarts. All three seeds derive from `master_seed`.
PipelineConfig acceptance_preset(std::uint64_t master_seed, const std::string& out_dir);

struct PipelineResult {
    double auc_ni = 0.0;
    double auc_l2 = 0.0;
    double auc_gap = 0.0;
    double best_alpha = 0.0;
    double best_lambda = 0.0;
    bool degenerate_single_cluster = false;
    LogisticModel model_ni;
    LogisticModel model_l2;
    TuningResult tuning_ni;
    TuningResult tuning_l2;
    TuningAudit audit_ni;
    TuningAudit audit_l2;
    nlohmann::json summary;
};

/// Runs the full experiment and, when out_dir is non-empty, writes the
/// report bundle: cluster-report.json, tuning-report-ni.json,
/// tuning-report-l2.json, model-ni.json, model-l2.json, roc-ni.csv,
/// roc-l2.csv, pca.json and summary.json.
PipelineResult run_pipeline(const PipelineConfig& config);

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

} // namespace nireg
