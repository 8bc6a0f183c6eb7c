#include <doctest.h>

#include <cmath>
#include <random>

#include "nireg/errors.hpp"
#include "nireg/logistic.hpp"
#include "test_support.hpp"

using namespace nireg;

namespace {

// Independent naive evaluator of the objective, written directly from the
// loss definition with no shared code paths.
double naive_loss(double w0, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                  const LabelVector& y, const RegularizerSpec& reg) {
    double total = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
        double z = w0;
        for (Index j = 0; j < x.cols(); ++j) z += w(j) * x(i, j);
        const double p = 1.0 / (1.0 + std::exp(-z));
        total -= y[static_cast<std::size_t>(i)] * std::log(p) +
                 (1 - y[static_cast<std::size_t>(i)]) * std::log(1.0 - p);
    }
    if (reg.kind == RegKind::l2) {
        total += reg.lambda * w.squaredNorm();
    } else if (reg.kind == RegKind::ni) {
        for (const auto& anchor : reg.anchors) total += reg.alpha * (w - anchor).squaredNorm();
    }
    return total;
}

LogisticModel make_model(double bias, Eigen::VectorXd w, RegularizerSpec reg = {}) {
    LogisticModel m;
    m.bias = bias;
    m.weights = std::move(w);
    m.regularizer = std::move(reg);
    return m;
}

RegularizerSpec random_reg(RegKind kind, Index dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.1, 2.0);
    switch (kind) {
        case RegKind::none:
            return RegularizerSpec::none_spec();
        case RegKind::l2:
            return RegularizerSpec::l2_spec(unit(rng));
        case RegKind::ni: {
            std::normal_distribution<double> normal(0.0, 1.0);
            std::vector<Eigen::VectorXd> anchors;
            const int n_anchors = 1 + static_cast<int>(rng() % 4);
            for (int a = 0; a < n_anchors; ++a) {
                Eigen::VectorXd v(dim);
                for (Index j = 0; j < dim; ++j) v(j) = normal(rng);
                anchors.push_back(std::move(v));
            }
            return RegularizerSpec::ni_spec(unit(rng), std::move(anchors));
        }
    }
    return {};
}

// Max relative error between the analytic gradient and central finite
// differences of the loss.
double fd_gradient_error(const LogisticModel& model, const FeatureMatrix& pcs,
                         const LabelVector& labels) {
    const auto [g0, gw] = gradient(model, pcs, labels);
    Eigen::VectorXd analytic(gw.size() + 1);
    analytic(0) = g0;
    analytic.tail(gw.size()) = gw;

    const double h = 1e-6;
    Eigen::VectorXd fd(analytic.size());
    for (Index j = 0; j < analytic.size(); ++j) {
        LogisticModel up = model, dn = model;
        if (j == 0) {
            up.bias += h;
            dn.bias -= h;
        } else {
            up.weights(j - 1) += h;
            dn.weights(j - 1) -= h;
        }
        fd(j) = (loss(up, pcs, labels) - loss(dn, pcs, labels)) / (2.0 * h);
    }
    return (analytic - fd).norm() / std::max(1.0, analytic.norm());
}

} // namespace

TEST_CASE("predict_proba analytic points") {
    FeatureMatrix pcs;
    pcs.values.resize(3, 2);
    pcs.values << 0.0, 0.0, std::log(3.0), 0.0, -1000.0, 0.0;
    const auto m = make_model(0.0, Eigen::Vector2d(1.0, 0.0));
    const Eigen::VectorXd p = predict_proba(m, pcs);
    CHECK(p(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p(2) > 0.0);
    CHECK(std::isfinite(p(2)));

    const auto zero = make_model(0.0, Eigen::Vector2d(0.0, 0.0));
    const Eigen::VectorXd half = predict_proba(zero, pcs);
    for (Index i = 0; i < 3; ++i) CHECK(half(i) == 0.5);
}

TEST_CASE("loss at zero weights on balanced labels is n ln 2") {
    FeatureMatrix pcs{test::random_matrix(20, 3, 71), {}};
    LabelVector labels;
    for (int i = 0; i < 20; ++i) labels.push_back(i % 2);
    const auto m = make_model(0.0, Eigen::VectorXd::Zero(3));
    CHECK(loss(m, pcs, labels) == doctest::Approx(20.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("extreme logits keep the loss finite") {
    FeatureMatrix pcs;
    pcs.values.resize(2, 1);
    pcs.values << 1000.0, -1000.0;
    LabelVector labels{0, 1};
    const auto m = make_model(0.0, Eigen::VectorXd::Ones(1));
    const double f = loss(m, pcs, labels);
    CHECK(std::isfinite(f));
    CHECK(f == doctest::Approx(2000.0).epsilon(1e-9));
}

TEST_CASE("ni regularizer vanishes at its anchor") {
    FeatureMatrix pcs{test::random_matrix(10, 3, 72), {}};
    LabelVector labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    Eigen::VectorXd anchor = Eigen::Vector3d(0.3, -0.2, 1.1);
    const auto plain = make_model(0.1, anchor);
    const auto reg = make_model(0.1, anchor, RegularizerSpec::ni_spec(5.0, {anchor}));
    CHECK(loss(reg, pcs, labels) == doctest::Approx(loss(plain, pcs, labels)).epsilon(1e-14));
}

TEST_CASE("loss matches the naive evaluator") {
    std::mt19937_64 rng(73);
    std::normal_distribution<double> normal(0.0, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 20, k = 3;
        FeatureMatrix pcs{test::random_matrix(n, k, 74 + trial), {}};
        LabelVector labels;
        for (Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng() % 2));
        Eigen::VectorXd w(k);
        for (Index j = 0; j < k; ++j) w(j) = normal(rng);
        const double w0 = normal(rng);
        const RegKind kind = static_cast<RegKind>(trial % 3);
        const auto reg = random_reg(kind, k, rng);
        const auto m = make_model(w0, w, reg);
        const double expect = naive_loss(w0, w, pcs.values, labels, reg);
        CHECK(loss(m, pcs, labels) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradient matches finite differences for all kinds") {
    std::mt19937_64 rng(75);
    std::normal_distribution<double> normal(0.0, 0.7);
    for (int trial = 0; trial < 30; ++trial) {
        const Index n = 30, k = 4;
        FeatureMatrix pcs{test::random_matrix(n, k, 200 + trial), {}};
        LabelVector labels;
        for (Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng() % 2));
        Eigen::VectorXd w(k);
        for (Index j = 0; j < k; ++j) w(j) = normal(rng);
        const auto reg = random_reg(static_cast<RegKind>(trial % 3), k, rng);
        const auto m = make_model(normal(rng), w, reg);
        CHECK(fd_gradient_error(m, pcs, labels) <= 1e-5);
    }
}

TEST_CASE("ni gradient is the plain gradient at the anchor mean") {
    FeatureMatrix pcs{test::random_matrix(15, 3, 76), {}};
    LabelVector labels;
    for (int i = 0; i < 15; ++i) labels.push_back(i % 2);
    std::vector<Eigen::VectorXd> anchors{Eigen::Vector3d(1.0, 0.0, -1.0),
                                         Eigen::Vector3d(0.0, 2.0, 1.0)};
    Eigen::VectorXd mean = (anchors[0] + anchors[1]) / 2.0;
    const auto with_ni = make_model(0.2, mean, RegularizerSpec::ni_spec(3.0, anchors));
    const auto without = make_model(0.2, mean);
    const auto [g0a, gwa] = gradient(with_ni, pcs, labels);
    const auto [g0b, gwb] = gradient(without, pcs, labels);
    CHECK(g0a == doctest::Approx(g0b).epsilon(1e-14));
    CHECK((gwa - gwb).norm() <= 1e-12);
}

TEST_CASE("fit converges with a small gradient") {
    const auto ds = test::random_dataset(60, 4, 77);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    const auto m = fit(pcs, ds.labels, RegularizerSpec::l2_spec(0.5));
    CHECK(m.training_meta.converged);
    CHECK(m.training_meta.gradient_norm <= 1e-6);
    const auto [g0, gw] = gradient(m, pcs, ds.labels);
    Eigen::VectorXd g(gw.size() + 1);
    g(0) = g0;
    g.tail(gw.size()) = gw;
    CHECK(g.norm() <= 1e-6);
}

TEST_CASE("fit is antisymmetric under label swap") {
    const auto ds = test::random_dataset(50, 3, 78);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    LabelVector swapped;
    for (int y : ds.labels) swapped.push_back(1 - y);
    for (const auto& reg : {RegularizerSpec::none_spec(), RegularizerSpec::l2_spec(0.3)}) {
        const auto a = fit(pcs, ds.labels, reg);
        const auto b = fit(pcs, swapped, reg);
        CHECK(std::abs(a.bias + b.bias) <= 1e-6);
        CHECK((a.weights + b.weights).norm() <= 1e-6);
    }
}

TEST_CASE("fit on label-symmetric data has zero bias") {
    // Mirrored rows with flipped labels: swapping y is the map x -> -x.
    const Eigen::MatrixXd half = test::random_matrix(25, 3, 79);
    FeatureMatrix pcs;
    pcs.values.resize(50, 3);
    pcs.values.topRows(25) = half;
    pcs.values.bottomRows(25) = -half;
    LabelVector labels(25, 1);
    labels.insert(labels.end(), 25, 0);
    const auto m = fit(pcs, labels, RegularizerSpec::l2_spec(1.0));
    CHECK(std::abs(m.bias) <= 1e-6);
}

TEST_CASE("ni with huge alpha lands on the anchor mean") {
    const auto ds = test::random_dataset(40, 3, 80);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    std::vector<Eigen::VectorXd> anchors{Eigen::Vector3d(0.5, -0.25, 0.75),
                                         Eigen::Vector3d(-0.5, 1.0, 0.25)};
    const Eigen::VectorXd mean = (anchors[0] + anchors[1]) / 2.0;
    const auto m = fit(pcs, ds.labels, RegularizerSpec::ni_spec(1e8, anchors));
    CHECK((m.weights - mean).norm() <= 1e-3);
}

TEST_CASE("ni with vanishing alpha matches the unregularized fit") {
    const auto ds = test::random_dataset(40, 3, 81);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    std::vector<Eigen::VectorXd> anchors{Eigen::Vector3d(1.0, 1.0, -1.0)};
    const auto tight = fit(pcs, ds.labels, RegularizerSpec::ni_spec(1e-10, anchors));
    const auto plain = fit(pcs, ds.labels, RegularizerSpec::none_spec());
    CHECK(std::abs(tight.bias - plain.bias) <= 1e-6);
    CHECK((tight.weights - plain.weights).norm() <= 1e-6);
}

TEST_CASE("l2 weight norm is non-increasing in lambda") {
    const auto ds = test::random_dataset(60, 4, 82);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    double prev = std::numeric_limits<double>::infinity();
    for (int e = -6; e <= 6; ++e) {
        const auto m = fit(pcs, ds.labels, RegularizerSpec::l2_spec(std::pow(10.0, e)));
        CHECK(m.weights.norm() <= prev + 1e-8);
        prev = m.weights.norm();
    }
}

TEST_CASE("ni pull toward the anchors is monotone in alpha") {
    const auto ds = test::random_dataset(50, 3, 83);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    std::vector<Eigen::VectorXd> anchors{Eigen::Vector3d(0.4, 0.0, 0.2),
                                         Eigen::Vector3d(-0.1, 0.3, 0.0)};
    auto pull = [&](double alpha) {
        const auto m = fit(pcs, ds.labels, RegularizerSpec::ni_spec(alpha, anchors));
        double total = 0.0;
        for (const auto& anchor : anchors) total += (m.weights - anchor).squaredNorm();
        return total;
    };
    double prev = std::numeric_limits<double>::infinity();
    for (int e = -4; e <= 4; ++e) {
        const double cur = pull(std::pow(10.0, e));
        CHECK(cur <= prev + 1e-8);
        prev = cur;
    }
}

TEST_CASE("fit errors") {
    FeatureMatrix pcs{test::random_matrix(10, 2, 84), {}};
    LabelVector ones(10, 1);
    CHECK_THROWS_AS(fit(pcs, ones, RegularizerSpec::none_spec()), DataError);
    LabelVector labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    CHECK_THROWS_AS(fit(pcs, labels, RegularizerSpec::l2_spec(0.0)), ConfigError);
    CHECK_THROWS_AS(fit(pcs, labels, RegularizerSpec::ni_spec(1.0, {})), ConfigError);
    CHECK_THROWS_AS(
        fit(pcs, labels, RegularizerSpec::ni_spec(1.0, {Eigen::Vector3d(1, 2, 3)})),
        ConfigError);
}

TEST_CASE("fit_cluster_anchors on identical clusters gives identical anchors") {
    const Eigen::MatrixXd block = test::random_matrix(30, 3, 85);
    FeatureMatrix pcs;
    pcs.values.resize(60, 3);
    pcs.values.topRows(30) = block;
    pcs.values.bottomRows(30) = block;
    LabelVector labels;
    for (int rep = 0; rep < 2; ++rep) {
        for (int i = 0; i < 30; ++i) labels.push_back(i % 2);
    }
    SubpopulationPartition part;
    part.clusters.resize(2);
    for (Index i = 0; i < 30; ++i) part.clusters[0].push_back(i);
    for (Index i = 30; i < 60; ++i) part.clusters[1].push_back(i);
    const auto anchors = fit_cluster_anchors(pcs, labels, part);
    REQUIRE(anchors.size() == 2);
    CHECK((anchors[0] - anchors[1]).norm() <= 1e-6);
}

TEST_CASE("a single whole-set anchor equals the l2 fit at the same strength") {
    const auto ds = test::random_dataset(40, 3, 86);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    SubpopulationPartition part;
    part.clusters.resize(1);
    for (Index i = 0; i < 40; ++i) part.clusters[0].push_back(i);
    const double lambda = 0.7;
    const auto anchors = fit_cluster_anchors(pcs, ds.labels, part, lambda);
    const auto direct = fit(pcs, ds.labels, RegularizerSpec::l2_spec(lambda));
    CHECK((anchors[0] - direct.weights).norm() <= 1e-6);
}

TEST_CASE("fit_cluster_anchors rejects a single-class cluster") {
    const auto ds = test::random_dataset(20, 3, 87);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    SubpopulationPartition part;
    part.clusters.resize(2);
    for (Index i = 0; i < 20; ++i) {
        part.clusters[ds.labels[static_cast<std::size_t>(i)]].push_back(i);
    }
    try {
        fit_cluster_anchors(pcs, ds.labels, part);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("cluster") != std::string::npos);
    }
}

TEST_CASE("model json round-trip") {
    const auto ds = test::random_dataset(30, 3, 88);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    auto m = fit(pcs, ds.labels,
                 RegularizerSpec::ni_spec(0.5, {Eigen::Vector3d(0.1, 0.2, 0.3)}));
    m.transform_id = t.id();
    const auto back = model_from_json(model_to_json(m));
    CHECK(back.bias == m.bias);
    CHECK((back.weights - m.weights).norm() == 0.0);
    CHECK(back.regularizer.kind == RegKind::ni);
    CHECK(back.regularizer.alpha == m.regularizer.alpha);
    CHECK(back.transform_id == m.transform_id);
    CHECK(model_id(back) == model_id(m));
}
