#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "nireg/dataset.hpp"
#include "nireg/logistic.hpp"
#include "nireg/pca.hpp"

namespace nireg {

/// ROC curve with tie-grouped thresholds: samples sharing a score advance
/// the curve in one combined step. Points run from (0,0) to (1,1) and the
/// AUC is the trapezoidal integral of those points.
struct RocCurve {
    std::vector<double> thresholds;  // score opening each point; +inf first
    std::vector<std::pair<double, double>> points;  // (fpr, tpr)
    double auc = 0.0;
};

RocCurve roc_curve(const Eigen::VectorXd& scores, const LabelVector& labels);

struct EvalReport {
    std::string model_id;
    RegularizerSpec regularizer;
    std::string split;
    double auc = 0.0;
    RocCurve curve;
    Index n_pos = 0;
    Index n_neg = 0;
};

/// apply_pca -> predict_proba -> roc_curve over a named split.
EvalReport evaluate(const LogisticModel& model, const PcaTransform& transform,
                    const LabeledDataset& dataset, const std::string& split_name);

/// CSV with header "threshold,fpr,tpr", one row per curve point.
void write_roc_csv(const RocCurve& curve, const std::string& path);

nlohmann::json eval_report_json(const EvalReport& report);

} // namespace nireg
