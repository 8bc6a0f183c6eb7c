#include "nireg/roc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "nireg/errors.hpp"

namespace nireg {

RocCurve roc_curve(const Eigen::VectorXd& scores, const LabelVector& labels) {
    const Index n = scores.size();
    if (static_cast<Index>(labels.size()) != n) {
        throw ConfigError("roc_curve: score/label length mismatch");
    }
    Index n_pos = 0, n_neg = 0;
    for (int y : labels) (y == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_curve requires both classes present");
    for (Index i = 0; i < n; ++i) {
        if (std::isnan(scores(i))) throw DataError("roc_curve: NaN score");
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return scores(a) > scores(b); });

    RocCurve curve;
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());
    curve.points.emplace_back(0.0, 0.0);
    double auc = 0.0;
    Index tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = scores(order[i]);
        Index tp_prev = tp, fp_prev = fp;
        // One combined step per distinct score value.
        while (i < order.size() && scores(order[i]) == score) {
            (labels[static_cast<std::size_t>(order[i])] == 1 ? tp : fp) += 1;
            ++i;
        }
        const double fpr_prev = static_cast<double>(fp_prev) / static_cast<double>(n_neg);
        const double tpr_prev = static_cast<double>(tp_prev) / static_cast<double>(n_pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        auc += (fpr - fpr_prev) * (tpr + tpr_prev) / 2.0;
        curve.thresholds.push_back(score);
        curve.points.emplace_back(fpr, tpr);
    }
    curve.auc = auc;
    return curve;
}

EvalReport evaluate(const LogisticModel& model, const PcaTransform& transform,
                    const LabeledDataset& dataset, const std::string& split_name) {
    validate_dataset(dataset);
    const FeatureMatrix pcs = apply_pca(transform, dataset.features);
    const Eigen::VectorXd p = predict_proba(model, pcs);
    EvalReport report;
    report.model_id = model_id(model);
    report.regularizer = model.regularizer;
    report.split = split_name;
    report.curve = roc_curve(p, dataset.labels);
    report.auc = report.curve.auc;
    for (int y : dataset.labels) (y == 1 ? report.n_pos : report.n_neg) += 1;
    return report;
}

void write_roc_csv(const RocCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "threshold,fpr,tpr\n";
    char buf[96];
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", curve.thresholds[i],
                      curve.points[i].first, curve.points[i].second);
        out << buf;
    }
    if (!out) throw DataError("write failure: " + path);
}

nlohmann::json eval_report_json(const EvalReport& report) {
    nlohmann::json j;
    j["model_id"] = report.model_id;
    j["regularizer"] = {{"kind", to_string(report.regularizer.kind)},
                        {"lambda", report.regularizer.lambda},
                        {"alpha", report.regularizer.alpha}};
    j["split"] = report.split;
    j["auc"] = report.auc;
    j["n_pos"] = report.n_pos;
    j["n_neg"] = report.n_neg;
    return j;
}

} // namespace nireg
