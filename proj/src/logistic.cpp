#include "nireg/logistic.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>

#include "nireg/errors.hpp"
#include "nireg/parallel.hpp"

namespace nireg {

namespace {

Eigen::VectorXd labels_as_vector(const LabelVector& labels) {
    Eigen::VectorXd y(static_cast<Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Index>(i)) = labels[i];
    return y;
}

void check_shapes(const FeatureMatrix& pcs, const LabelVector& labels, Index dim) {
    if (pcs.cols() != dim) {
        throw ConfigError("dimension mismatch: " + std::to_string(pcs.cols()) +
                          " feature columns vs " + std::to_string(dim) + " weights");
    }
    if (static_cast<Index>(labels.size()) != pcs.rows()) {
        throw ConfigError("label count does not match rows");
    }
}

// Packed objective over x = (bias, weights): cross-entropy sum plus the
// regularizer. Evaluates value and gradient together.
struct Objective {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    const RegularizerSpec& reg;

    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        const Index k = X.cols();
        const double w0 = x(0);
        const auto w = x.tail(k);

        Eigen::VectorXd z = (X * w).array() + w0;
        double f = 0.0;
        Eigen::VectorXd p(z.size());
        for (Index i = 0; i < z.size(); ++i) {
            f -= y(i) * log_sigmoid(z(i)) + (1.0 - y(i)) * log_sigmoid(-z(i));
            p(i) = sigmoid(z(i));
        }
        Eigen::VectorXd residual = p - y;
        grad.resize(k + 1);
        grad(0) = residual.sum();
        grad.tail(k) = X.transpose() * residual;

        switch (reg.kind) {
            case RegKind::none:
                break;
            case RegKind::l2:
                f += reg.lambda * w.squaredNorm();
                grad.tail(k) += 2.0 * reg.lambda * w;
                break;
            case RegKind::ni:
                for (const auto& anchor : reg.anchors) {
                    const Eigen::VectorXd diff = w - anchor;
                    f += reg.alpha * diff.squaredNorm();
                    grad.tail(k) += 2.0 * reg.alpha * diff;
                }
                break;
        }
        return f;
    }
};

} // namespace

const char* to_string(RegKind kind) {
    switch (kind) {
        case RegKind::none: return "none";
        case RegKind::l2: return "l2";
        case RegKind::ni: return "ni";
    }
    return "none";
}

RegKind reg_kind_from_string(const std::string& s) {
    if (s == "none") return RegKind::none;
    if (s == "l2") return RegKind::l2;
    if (s == "ni") return RegKind::ni;
    throw ConfigError("unknown regularizer kind: " + s);
}

RegularizerSpec RegularizerSpec::l2_spec(double lambda) {
    RegularizerSpec spec;
    spec.kind = RegKind::l2;
    spec.lambda = lambda;
    return spec;
}

RegularizerSpec RegularizerSpec::ni_spec(double alpha, std::vector<Eigen::VectorXd> anchors) {
    RegularizerSpec spec;
    spec.kind = RegKind::ni;
    spec.alpha = alpha;
    spec.anchors = std::move(anchors);
    return spec;
}

void RegularizerSpec::validate(Index dim) const {
    if (lambda < 0.0 || alpha < 0.0) throw ConfigError("regularizer strengths must be >= 0");
    switch (kind) {
        case RegKind::none:
            break;
        case RegKind::l2:
            if (!(lambda > 0.0)) throw ConfigError("l2 regularizer requires lambda > 0");
            break;
        case RegKind::ni:
            if (!(alpha > 0.0)) throw ConfigError("ni regularizer requires alpha > 0");
            if (anchors.empty()) throw ConfigError("ni regularizer requires at least one anchor");
            for (const auto& anchor : anchors) {
                if (anchor.size() != dim) {
                    throw ConfigError("anchor length " + std::to_string(anchor.size()) +
                                      " does not match weight length " + std::to_string(dim));
                }
            }
            break;
    }
}

double sigmoid(double z) {
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    constexpr double lo = std::numeric_limits<double>::min();
    if (p < lo) p = lo;
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    if (p > hi) p = hi;
    return p;
}

double log_sigmoid(double z) {
    return std::min(z, 0.0) - std::log1p(std::exp(-std::abs(z)));
}

Eigen::VectorXd decision_values(const LogisticModel& model, const FeatureMatrix& pcs) {
    if (pcs.cols() != model.weights.size()) {
        throw ConfigError("dimension mismatch: " + std::to_string(pcs.cols()) +
                          " feature columns vs " + std::to_string(model.weights.size()) +
                          " weights");
    }
    return (pcs.values * model.weights).array() + model.bias;
}

Eigen::VectorXd predict_proba(const LogisticModel& model, const FeatureMatrix& pcs) {
    Eigen::VectorXd z = decision_values(model, pcs);
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

double loss(const LogisticModel& model, const FeatureMatrix& pcs, const LabelVector& labels) {
    check_shapes(pcs, labels, model.weights.size());
    model.regularizer.validate(model.weights.size());
    const Eigen::VectorXd y = labels_as_vector(labels);
    Objective obj{pcs.values, y, model.regularizer};
    Eigen::VectorXd x(model.weights.size() + 1);
    x(0) = model.bias;
    x.tail(model.weights.size()) = model.weights;
    Eigen::VectorXd grad;
    return obj(x, grad);
}

std::pair<double, Eigen::VectorXd> gradient(const LogisticModel& model,
                                            const FeatureMatrix& pcs,
                                            const LabelVector& labels) {
    check_shapes(pcs, labels, model.weights.size());
    model.regularizer.validate(model.weights.size());
    const Eigen::VectorXd y = labels_as_vector(labels);
    Objective obj{pcs.values, y, model.regularizer};
    Eigen::VectorXd x(model.weights.size() + 1);
    x(0) = model.bias;
    x.tail(model.weights.size()) = model.weights;
    Eigen::VectorXd grad;
    obj(x, grad);
    return {grad(0), grad.tail(model.weights.size())};
}

LogisticModel fit(const FeatureMatrix& pcs, const LabelVector& labels,
                  const RegularizerSpec& reg, const SolverOptions& opts) {
    const Index k = pcs.cols();
    check_shapes(pcs, labels, k);
    reg.validate(k);
    bool has0 = false, has1 = false;
    for (int y : labels) (y == 0 ? has0 : has1) = true;
    if (!has0 || !has1) throw DataError("fit requires both label values present");

    const Eigen::VectorXd y = labels_as_vector(labels);
    Objective obj{pcs.values, y, reg};

    Eigen::VectorXd x = Eigen::VectorXd::Zero(k + 1);
    Eigen::VectorXd grad;
    double f = obj(x, grad);
    if (!std::isfinite(f)) throw NumericError("fit: non-finite loss at start");

    // L-BFGS two-loop recursion with Armijo backtracking.
    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    TrainingMeta meta;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (grad.norm() <= opts.gtol) {
            meta.converged = true;
            break;
        }
        Eigen::VectorXd dir = -grad;
        if (!s_hist.empty()) {
            std::vector<double> a(s_hist.size());
            for (std::size_t i = s_hist.size(); i-- > 0;) {
                a[i] = rho_hist[i] * s_hist[i].dot(dir);
                dir -= a[i] * y_hist[i];
            }
            const double gamma =
                s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            dir *= gamma;
            for (std::size_t i = 0; i < s_hist.size(); ++i) {
                const double b = rho_hist[i] * y_hist[i].dot(dir);
                dir += (a[i] - b) * s_hist[i];
            }
        }
        double slope = grad.dot(dir);
        if (!(slope < 0.0)) {
            // Not a descent direction; drop the memory and fall back.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -grad;
            slope = -grad.squaredNorm();
        }

        double step = 1.0;
        Eigen::VectorXd x_new, grad_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < opts.max_linesearch; ++ls) {
            x_new = x + step * dir;
            f_new = obj(x_new, grad_new);
            if (std::isfinite(f_new) && f_new <= f + opts.armijo_c * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // line-search stall; report unconverged
        if (f_new > f + 1e-12 * (1.0 + std::abs(f))) {
            throw NumericError("fit: loss increased across an accepted step");
        }

        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd yv = grad_new - grad;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = std::move(x_new);
        grad = std::move(grad_new);
        f = f_new;
        meta.iterations = iter + 1;
    }
    if (!meta.converged && grad.norm() <= opts.gtol) meta.converged = true;
    if (!std::isfinite(f)) throw NumericError("fit: non-finite loss");

    LogisticModel model;
    model.bias = x(0);
    model.weights = x.tail(k);
    model.regularizer = reg;
    meta.final_loss = f;
    meta.gradient_norm = grad.norm();
    model.training_meta = meta;
    return model;
}

std::vector<Eigen::VectorXd> fit_cluster_anchors(const FeatureMatrix& pcs,
                                                 const LabelVector& labels,
                                                 const SubpopulationPartition& partition,
                                                 std::optional<double> anchor_ridge,
                                                 const SolverOptions& opts, int threads) {
    if (anchor_ridge && *anchor_ridge < 0.0) {
        throw ConfigError("anchor_ridge must be >= 0");
    }
    const std::size_t n_clusters = partition.clusters.size();
    for (std::size_t c = 0; c < n_clusters; ++c) {
        bool has0 = false, has1 = false;
        for (Index i : partition.clusters[c]) {
            (labels[static_cast<std::size_t>(i)] == 0 ? has0 : has1) = true;
        }
        if (!has0 || !has1) {
            throw DataError("cluster " + std::to_string(c) + " contains a single class");
        }
    }

    std::vector<Eigen::VectorXd> anchors(n_clusters);
    parallel_for(n_clusters, threads, [&](std::size_t c) {
        const auto& rows = partition.clusters[c];
        FeatureMatrix sub;
        sub.values.resize(static_cast<Index>(rows.size()), pcs.cols());
        LabelVector sub_labels;
        sub_labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            sub.values.row(static_cast<Index>(i)) = pcs.values.row(rows[i]);
            sub_labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
        }
        const double ridge =
            anchor_ridge ? *anchor_ridge : 1e-4 * static_cast<double>(rows.size());
        const RegularizerSpec spec =
            ridge > 0.0 ? RegularizerSpec::l2_spec(ridge) : RegularizerSpec::none_spec();
        anchors[c] = fit(sub, sub_labels, spec, opts).weights;
    });
    return anchors;
}

nlohmann::json model_to_json(const LogisticModel& model) {
    nlohmann::json j;
    j["bias"] = model.bias;
    j["weights"] = std::vector<double>(model.weights.begin(), model.weights.end());
    nlohmann::json reg;
    reg["kind"] = to_string(model.regularizer.kind);
    reg["lambda"] = model.regularizer.lambda;
    reg["alpha"] = model.regularizer.alpha;
    auto anchors = nlohmann::json::array();
    for (const auto& a : model.regularizer.anchors) {
        anchors.push_back(std::vector<double>(a.begin(), a.end()));
    }
    reg["anchors"] = std::move(anchors);
    j["regularizer"] = std::move(reg);
    j["transform_id"] = model.transform_id;
    j["training_meta"] = {{"iterations", model.training_meta.iterations},
                          {"final_loss", model.training_meta.final_loss},
                          {"gradient_norm", model.training_meta.gradient_norm},
                          {"converged", model.training_meta.converged}};
    return j;
}

LogisticModel model_from_json(const nlohmann::json& j) {
    LogisticModel m;
    m.bias = j.at("bias").get<double>();
    const auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Index>(w.size()));
    const auto& reg = j.at("regularizer");
    m.regularizer.kind = reg_kind_from_string(reg.at("kind").get<std::string>());
    m.regularizer.lambda = reg.at("lambda").get<double>();
    m.regularizer.alpha = reg.at("alpha").get<double>();
    for (const auto& a : reg.at("anchors")) {
        const auto v = a.get<std::vector<double>>();
        m.regularizer.anchors.push_back(
            Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
    }
    m.transform_id = j.value("transform_id", std::string{});
    if (j.contains("training_meta")) {
        const auto& tm = j.at("training_meta");
        m.training_meta.iterations = tm.value("iterations", 0);
        m.training_meta.final_loss = tm.value("final_loss", 0.0);
        m.training_meta.gradient_norm = tm.value("gradient_norm", 0.0);
        m.training_meta.converged = tm.value("converged", false);
    }
    return m;
}

std::string model_id(const LogisticModel& model) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : model_to_json(model).dump()) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[26];
    std::snprintf(buf, sizeof buf, "model-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace nireg
