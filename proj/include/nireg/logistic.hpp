#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nireg/dataset.hpp"
#include "nireg/kmeans.hpp"

namespace nireg {

enum class RegKind { none, l2, ni };

const char* to_string(RegKind kind);
RegKind reg_kind_from_string(const std::string& s);

/// Regularizer attached to a logistic fit. l2 penalizes lambda * ||w||^2;
/// ni penalizes alpha * sum_c ||w - w_c||^2 over the anchor weights w_c.
/// The bias is never penalized.
struct RegularizerSpec {
    RegKind kind = RegKind::none;
    double lambda = 0.0;
    double alpha = 0.0;
    std::vector<Eigen::VectorXd> anchors;

    static RegularizerSpec none_spec() { return {}; }
    static RegularizerSpec l2_spec(double lambda);
    static RegularizerSpec ni_spec(double alpha, std::vector<Eigen::VectorXd> anchors);

    /// Throws ConfigError unless consistent with weight dimension `dim`.
    void validate(Index dim) const;
};

struct SolverOptions {
    double gtol = 1e-6;     // terminate when the gradient norm drops below
    int max_iter = 1000;
    int memory = 10;        // L-BFGS correction pairs
    double armijo_c = 1e-4;
    int max_linesearch = 60;
};

struct TrainingMeta {
    int iterations = 0;
    double final_loss = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;  // false when max_iter or a line-search stall hit
};

struct LogisticModel {
    double bias = 0.0;
    Eigen::VectorXd weights;
    RegularizerSpec regularizer;
    std::string transform_id;
    TrainingMeta training_meta;
};

/// Overflow-safe sigmoid clamped into (0, 1) so downstream log-loss and
/// ROC paths never see an exact 0 or 1.
double sigmoid(double z);

/// log(sigmoid(z)) computed without underflow: min(z,0) - log1p(exp(-|z|)).
double log_sigmoid(double z);

Eigen::VectorXd decision_values(const LogisticModel& model, const FeatureMatrix& pcs);
Eigen::VectorXd predict_proba(const LogisticModel& model, const FeatureMatrix& pcs);

/// Cross-entropy sum over samples plus the regularizer term.
double loss(const LogisticModel& model, const FeatureMatrix& pcs, const LabelVector& labels);

/// Analytic gradient: (d/d bias, d/d weights).
std::pair<double, Eigen::VectorXd> gradient(const LogisticModel& model,
                                            const FeatureMatrix& pcs,
                                            const LabelVector& labels);

/// Deterministic L-BFGS with Armijo backtracking from the zero start.
LogisticModel fit(const FeatureMatrix& pcs, const LabelVector& labels,
                  const RegularizerSpec& reg, const SolverOptions& opts = {});

/// One l2 fit per combined cluster, in cluster order. anchor_ridge is the
/// absolute l2 strength for every cluster; unset applies 1e-4 * cluster
/// size per cluster. A value of 0 fits unregularized anchors.
std::vector<Eigen::VectorXd> fit_cluster_anchors(const FeatureMatrix& pcs,
                                                 const LabelVector& labels,
                                                 const SubpopulationPartition& partition,
                                                 std::optional<double> anchor_ridge = {},
                                                 const SolverOptions& opts = {},
                                                 int threads = 0);

nlohmann::json model_to_json(const LogisticModel& model);
LogisticModel model_from_json(const nlohmann::json& j);

/// Stable content hash used as the model reference in reports.
std::string model_id(const LogisticModel& model);

} // namespace nireg
