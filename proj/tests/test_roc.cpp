#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "nireg/errors.hpp"
#include "nireg/roc.hpp"
#include "test_support.hpp"

using namespace nireg;

namespace {

// Brute-force pairwise-counting oracle:
// (#concordant + 0.5 * #tied) / (n_pos * n_neg).
double pairwise_auc(const Eigen::VectorXd& scores, const LabelVector& labels) {
    double total = 0.0;
    Index n_pos = 0, n_neg = 0;
    for (Index i = 0; i < scores.size(); ++i) {
        if (labels[static_cast<std::size_t>(i)] == 1) {
            ++n_pos;
            for (Index j = 0; j < scores.size(); ++j) {
                if (labels[static_cast<std::size_t>(j)] == 1) continue;
                if (scores(i) > scores(j)) {
                    total += 1.0;
                } else if (scores(i) == scores(j)) {
                    total += 0.5;
                }
            }
        } else {
            ++n_neg;
        }
    }
    return total / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Random instance, heavy score ties when `quantize` is set.
std::pair<Eigen::VectorXd, LabelVector> random_instance(std::uint64_t seed, Index max_n,
                                                        bool quantize) {
    std::mt19937_64 rng(seed);
    const Index n = 2 + static_cast<Index>(rng() % static_cast<std::uint64_t>(max_n - 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd scores(n);
    LabelVector labels;
    for (Index i = 0; i < n; ++i) {
        double s = unit(rng);
        if (quantize) s = std::round(s * 4.0) / 4.0;
        scores(i) = s;
        labels.push_back(static_cast<int>(rng() % 2));
    }
    labels[0] = 0;
    labels[static_cast<std::size_t>(n - 1)] = 1;
    return {scores, labels};
}

} // namespace

TEST_CASE("perfect separation gives auc 1") {
    Eigen::VectorXd scores(6);
    scores << 0.9, 0.8, 0.7, 0.3, 0.2, 0.1;
    LabelVector labels{1, 1, 1, 0, 0, 0};
    const auto curve = roc_curve(scores, labels);
    CHECK(curve.auc == 1.0);
    CHECK(curve.points.front() == std::pair<double, double>{0.0, 0.0});
    CHECK(curve.points.back() == std::pair<double, double>{1.0, 1.0});
}

TEST_CASE("all-equal scores give the diagonal and auc 0.5") {
    Eigen::VectorXd scores = Eigen::VectorXd::Constant(8, 0.3);
    LabelVector labels{0, 1, 0, 1, 0, 1, 0, 1};
    const auto curve = roc_curve(scores, labels);
    CHECK(curve.auc == 0.5);
    // Single combined tie step: (0,0) then (1,1).
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[1] == std::pair<double, double>{1.0, 1.0});
}

TEST_CASE("trapezoid auc equals the pairwise-counting oracle") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto [scores, labels] = random_instance(1000 + seed, 200, seed % 2 == 0);
        const auto curve = roc_curve(scores, labels);
        const double oracle = pairwise_auc(scores, labels);
        CHECK(std::abs(curve.auc - oracle) <= 1e-12);
    }
}

TEST_CASE("roc curve is monotone with correct endpoints") {
    const auto [scores, labels] = random_instance(77, 120, true);
    const auto curve = roc_curve(scores, labels);
    CHECK(curve.points.front() == std::pair<double, double>{0.0, 0.0});
    CHECK(curve.points.back() == std::pair<double, double>{1.0, 1.0});
    CHECK(std::isinf(curve.thresholds.front()));
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].first >= curve.points[i - 1].first);
        CHECK(curve.points[i].second >= curve.points[i - 1].second);
        CHECK(curve.thresholds[i] < curve.thresholds[i - 1]);
    }
    // Reported auc is the trapezoidal integral of the reported points.
    double auc = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        auc += (curve.points[i].first - curve.points[i - 1].first) *
               (curve.points[i].second + curve.points[i - 1].second) / 2.0;
    }
    CHECK(std::abs(auc - curve.auc) <= 1e-12);
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto [scores, labels] = random_instance(300 + trial, 100, trial % 2 == 0);
        // Random strictly increasing map: cumulative positive steps over the
        // sorted distinct values.
        std::vector<double> distinct(scores.begin(), scores.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        std::map<double, double> lift;
        double acc = -3.0;
        for (double v : distinct) {
            acc += unit(rng);
            lift[v] = acc;
        }
        Eigen::VectorXd mapped(scores.size());
        for (Index i = 0; i < scores.size(); ++i) mapped(i) = lift[scores(i)];
        CHECK(roc_curve(mapped, labels).auc == doctest::Approx(roc_curve(scores, labels).auc).epsilon(1e-14));
    }
}

TEST_CASE("complement symmetry preserves auc") {
    const auto [scores, labels] = random_instance(55, 150, true);
    LabelVector flipped;
    for (int y : labels) flipped.push_back(1 - y);
    Eigen::VectorXd comp = Eigen::VectorXd::Ones(scores.size()) - scores;
    CHECK(roc_curve(comp, flipped).auc ==
          doctest::Approx(roc_curve(scores, labels).auc).epsilon(1e-14));
}

TEST_CASE("roc_curve errors") {
    Eigen::VectorXd scores(3);
    scores << 0.1, 0.2, 0.3;
    CHECK_THROWS_AS(roc_curve(scores, LabelVector{1, 1, 1}), DataError);
    Eigen::VectorXd bad = scores;
    bad(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(roc_curve(bad, LabelVector{0, 1, 1}), DataError);
    CHECK_THROWS_AS(roc_curve(scores, LabelVector{0, 1}), ConfigError);
}

TEST_CASE("evaluate runs the whole scoring pipeline") {
    const auto ds = test::random_dataset(50, 4, 90);
    const auto t = fit_pca(ds.features);
    const auto pcs = apply_pca(t, ds.features);
    auto model = fit(pcs, ds.labels, RegularizerSpec::l2_spec(0.1));
    model.transform_id = t.id();
    const auto report = evaluate(model, t, ds, "train");
    CHECK(report.split == "train");
    CHECK(report.n_pos + report.n_neg == 50);
    CHECK(report.auc >= 0.5);  // no worse than the zero-weight model on its own training split
    CHECK(report.model_id == model_id(model));

    // Determinism: identical scores give identical reports.
    const auto again = evaluate(model, t, ds, "train");
    CHECK(again.auc == report.auc);
    CHECK(again.curve.points == report.curve.points);
}

TEST_CASE("roc csv round-trips through a file") {
    test::TempDir tmp("roc");
    const auto [scores, labels] = random_instance(91, 60, true);
    const auto curve = roc_curve(scores, labels);
    write_roc_csv(curve, tmp.file("roc.csv"));
    std::ifstream in(tmp.file("roc.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "threshold,fpr,tpr");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == curve.points.size());
}
