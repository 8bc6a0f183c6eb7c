#include "nireg/tuning.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "nireg/errors.hpp"
#include "nireg/parallel.hpp"
#include "nireg/rng.hpp"
#include "nireg/roc.hpp"

namespace nireg {

namespace {

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("hyperparameter grid must be non-empty");
    for (double v : grid) {
        if (!(v > 0.0)) throw ConfigError("hyperparameter grid values must be > 0");
    }
}

double pick_best(const std::vector<double>& grid, const std::vector<double>& means) {
    const double top = *std::max_element(means.begin(), means.end());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (means[i] >= top - 1e-12) best = std::max(best, grid[i]);
    }
    return best;
}

// Rows/labels restricted to an index set.
std::pair<FeatureMatrix, LabelVector> take_rows(const FeatureMatrix& pcs,
                                                const LabelVector& labels,
                                                const std::vector<Index>& rows) {
    FeatureMatrix sub;
    sub.values.resize(static_cast<Index>(rows.size()), pcs.cols());
    LabelVector sub_labels;
    sub_labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sub.values.row(static_cast<Index>(i)) = pcs.values.row(rows[i]);
        sub_labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
    }
    return {std::move(sub), std::move(sub_labels)};
}

// Throws unless the fold sets are pairwise disjoint and cover [0, n).
void check_fold_partition(const std::vector<std::vector<Index>>& folds, Index n) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    Index total = 0;
    for (const auto& fold : folds) {
        for (Index i : fold) {
            if (i < 0 || i >= n || seen[static_cast<std::size_t>(i)]) {
                throw NumericError("fold sets do not partition the data");
            }
            seen[static_cast<std::size_t>(i)] = 1;
            ++total;
        }
    }
    if (total != n) throw NumericError("fold sets do not cover the data");
}

struct Cell {
    std::size_t grid_index;
    std::size_t fold_index;
};

// Shared grid x fold evaluation: fit_score(gi, fi) returns the holdout AUC
// for one cell; cells run as independent pure tasks with aggregation order
// fixed by (grid index, fold index).
TuningResult run_grid(const std::vector<double>& grid, std::size_t n_folds, int threads,
                      const std::function<double(std::size_t, std::size_t)>& fit_score) {
    TuningResult result;
    result.grid = grid;
    result.per_fold_aucs.assign(grid.size(), std::vector<double>(n_folds, 0.0));
    std::vector<Cell> cells;
    cells.reserve(grid.size() * n_folds);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t f = 0; f < n_folds; ++f) cells.push_back({g, f});
    }
    parallel_for(cells.size(), threads, [&](std::size_t c) {
        const auto [g, f] = cells[c];
        result.per_fold_aucs[g][f] = fit_score(g, f);
    });
    result.mean_aucs.reserve(grid.size());
    for (const auto& row : result.per_fold_aucs) {
        result.mean_aucs.push_back(std::accumulate(row.begin(), row.end(), 0.0) /
                                   static_cast<double>(row.size()));
    }
    result.best_value = pick_best(grid, result.mean_aucs);
    return result;
}

} // namespace

const char* to_string(TuningProtocol protocol) {
    return protocol == TuningProtocol::random_kfold ? "random_kfold" : "cluster_holdout";
}

std::vector<std::vector<Index>> stratified_folds(const LabelVector& labels, int folds,
                                                 std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross-validation requires folds >= 2");
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(folds));
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<Index> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) idx.push_back(static_cast<Index>(i));
        }
        if (static_cast<int>(idx.size()) < folds) {
            throw DataError("class " + std::to_string(cls) + " has " +
                            std::to_string(idx.size()) + " samples; stratification into " +
                            std::to_string(folds) + " folds would leave single-class folds");
        }
        std::mt19937_64 rng = make_engine(seed, static_cast<std::uint64_t>(cls));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t p = 0; p < idx.size(); ++p) {
            out[p % static_cast<std::size_t>(folds)].push_back(idx[p]);
        }
    }
    for (auto& fold : out) std::sort(fold.begin(), fold.end());
    return out;
}

TuningResult tune_l2(const LabeledDataset& dataset, const PcaTransform& transform,
                     const std::vector<double>& grid, int folds, std::uint64_t seed,
                     const SolverOptions& solver, int threads, TuningAudit* audit) {
    validate_dataset(dataset);
    check_grid(grid);
    const FeatureMatrix pcs = apply_pca(transform, dataset.features);
    const auto fold_sets = stratified_folds(dataset.labels, folds, seed);
    check_fold_partition(fold_sets, dataset.n());

    std::vector<std::vector<Index>> train_sets(fold_sets.size());
    for (std::size_t f = 0; f < fold_sets.size(); ++f) {
        for (std::size_t g = 0; g < fold_sets.size(); ++g) {
            if (g == f) continue;
            train_sets[f].insert(train_sets[f].end(), fold_sets[g].begin(), fold_sets[g].end());
        }
        std::sort(train_sets[f].begin(), train_sets[f].end());
    }
    if (audit != nullptr) {
        audit->holdout_sets = fold_sets;
        audit->fit_sets = train_sets;
        audit->anchor_sets.clear();
    }

    TuningResult result = run_grid(grid, fold_sets.size(), threads, [&](std::size_t g, std::size_t f) {
        const auto [train_pcs, train_labels] = take_rows(pcs, dataset.labels, train_sets[f]);
        const LogisticModel model =
            fit(train_pcs, train_labels, RegularizerSpec::l2_spec(grid[g]), solver);
        const auto [fold_pcs, fold_labels] = take_rows(pcs, dataset.labels, fold_sets[f]);
        return roc_curve(predict_proba(model, fold_pcs), fold_labels).auc;
    });
    result.protocol = TuningProtocol::random_kfold;
    result.seed = seed;
    return result;
}

TuningResult tune_ni(const LabeledDataset& dataset, const PcaTransform& transform,
                     const SubpopulationPartition& partition, const std::vector<double>& grid,
                     std::optional<double> anchor_ridge, const SolverOptions& solver,
                     int threads, TuningAudit* audit) {
    validate_dataset(dataset);
    check_grid(grid);
    const std::size_t n_clusters = partition.clusters.size();
    if (n_clusters < 2) {
        throw ConfigError("cluster-holdout tuning requires at least 2 clusters");
    }
    check_fold_partition(partition.clusters, dataset.n());
    const FeatureMatrix pcs = apply_pca(transform, dataset.features);

    // Per holdout: remaining clusters define both the anchors and the fit
    // rows. The holdout's indices appear only in scoring; verified here by
    // construction checks and recorded for external audit.
    std::vector<std::vector<Index>> fit_sets(n_clusters);
    std::vector<std::vector<std::vector<Index>>> anchor_sets(n_clusters);
    for (std::size_t h = 0; h < n_clusters; ++h) {
        const std::set<Index> holdout(partition.clusters[h].begin(), partition.clusters[h].end());
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (c == h) continue;
            anchor_sets[h].push_back(partition.clusters[c]);
            fit_sets[h].insert(fit_sets[h].end(), partition.clusters[c].begin(),
                               partition.clusters[c].end());
        }
        std::sort(fit_sets[h].begin(), fit_sets[h].end());
        for (Index i : fit_sets[h]) {
            if (holdout.count(i) != 0) {
                throw NumericError("cluster-holdout bookkeeping: holdout index in fit set");
            }
        }
        if (fit_sets[h].size() + holdout.size() != static_cast<std::size_t>(dataset.n())) {
            throw NumericError("cluster-holdout bookkeeping: fit set and holdout do not tile");
        }
    }
    if (audit != nullptr) {
        audit->holdout_sets = partition.clusters;
        audit->fit_sets = fit_sets;
        audit->anchor_sets = anchor_sets;
    }

    // Anchors depend only on the holdout, not the grid value; fit once per
    // holdout.
    std::vector<std::vector<Eigen::VectorXd>> anchors_per_holdout(n_clusters);
    parallel_for(n_clusters, threads, [&](std::size_t h) {
        std::vector<Eigen::VectorXd> anchors;
        anchors.reserve(anchor_sets[h].size());
        for (const auto& rows : anchor_sets[h]) {
            bool has0 = false, has1 = false;
            for (Index i : rows) (dataset.labels[static_cast<std::size_t>(i)] == 0 ? has0 : has1) = true;
            if (!has0 || !has1) throw DataError("single-class cluster during holdout tuning");
            const auto [sub, sub_labels] = take_rows(pcs, dataset.labels, rows);
            const double ridge =
                anchor_ridge ? *anchor_ridge : 1e-4 * static_cast<double>(rows.size());
            const RegularizerSpec spec =
                ridge > 0.0 ? RegularizerSpec::l2_spec(ridge) : RegularizerSpec::none_spec();
            anchors.push_back(fit(sub, sub_labels, spec, solver).weights);
        }
        anchors_per_holdout[h] = std::move(anchors);
    });

    TuningResult result = run_grid(grid, n_clusters, threads, [&](std::size_t g, std::size_t h) {
        const auto [train_pcs, train_labels] = take_rows(pcs, dataset.labels, fit_sets[h]);
        bool has0 = false, has1 = false;
        for (int y : train_labels) (y == 0 ? has0 : has1) = true;
        if (!has0 || !has1) throw DataError("single remaining class during holdout tuning");
        const LogisticModel model =
            fit(train_pcs, train_labels,
                RegularizerSpec::ni_spec(grid[g], anchors_per_holdout[h]), solver);
        const auto [hold_pcs, hold_labels] = take_rows(pcs, dataset.labels, partition.clusters[h]);
        return roc_curve(predict_proba(model, hold_pcs), hold_labels).auc;
    });
    result.protocol = TuningProtocol::cluster_holdout;
    result.seed = partition.seed;
    return result;
}

TuningResult tune_ni_kfold(const LabeledDataset& dataset, const PcaTransform& transform,
                           const std::vector<double>& grid, int folds, std::uint64_t seed,
                           std::optional<double> anchor_ridge, const SolverOptions& solver,
                           int threads, TuningAudit* audit) {
    validate_dataset(dataset);
    check_grid(grid);
    const FeatureMatrix pcs = apply_pca(transform, dataset.features);
    const auto fold_sets = stratified_folds(dataset.labels, folds, seed);
    check_fold_partition(fold_sets, dataset.n());

    std::vector<std::vector<Index>> train_sets(fold_sets.size());
    for (std::size_t f = 0; f < fold_sets.size(); ++f) {
        for (std::size_t g = 0; g < fold_sets.size(); ++g) {
            if (g == f) continue;
            train_sets[f].insert(train_sets[f].end(), fold_sets[g].begin(), fold_sets[g].end());
        }
        std::sort(train_sets[f].begin(), train_sets[f].end());
    }
    if (audit != nullptr) {
        audit->holdout_sets = fold_sets;
        audit->fit_sets = train_sets;
        audit->anchor_sets.assign(fold_sets.size(), {});
        for (std::size_t f = 0; f < fold_sets.size(); ++f) {
            audit->anchor_sets[f].push_back(train_sets[f]);
        }
    }

    TuningResult result = run_grid(grid, fold_sets.size(), threads, [&](std::size_t g, std::size_t f) {
        const auto [train_pcs, train_labels] = take_rows(pcs, dataset.labels, train_sets[f]);
        const double ridge =
            anchor_ridge ? *anchor_ridge : 1e-4 * static_cast<double>(train_sets[f].size());
        const RegularizerSpec anchor_spec =
            ridge > 0.0 ? RegularizerSpec::l2_spec(ridge) : RegularizerSpec::none_spec();
        const Eigen::VectorXd anchor = fit(train_pcs, train_labels, anchor_spec, solver).weights;
        const LogisticModel model =
            fit(train_pcs, train_labels, RegularizerSpec::ni_spec(grid[g], {anchor}), solver);
        const auto [fold_pcs, fold_labels] = take_rows(pcs, dataset.labels, fold_sets[f]);
        return roc_curve(predict_proba(model, fold_pcs), fold_labels).auc;
    });
    result.protocol = TuningProtocol::random_kfold;
    result.seed = seed;
    return result;
}

nlohmann::json tuning_report_json(const TuningResult& result) {
    nlohmann::json j;
    j["protocol"] = to_string(result.protocol);
    j["seed"] = result.seed;
    j["grid"] = result.grid;
    j["per_fold_aucs"] = result.per_fold_aucs;
    j["mean_aucs"] = result.mean_aucs;
    j["best_value"] = result.best_value;
    return j;
}

} // namespace nireg
