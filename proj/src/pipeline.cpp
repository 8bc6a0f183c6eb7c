#include "nireg/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nireg/errors.hpp"
#include "nireg/rng.hpp"

namespace nireg {

namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    } catch (DataError& e) {
        throw DataError(name + ": " + e.what());
    } catch (NumericError& e) {
        throw NumericError(name + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << text;
    if (!out) throw DataError("write failure: " + path);
}

void write_json(const std::string& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

void note(const PipelineConfig& cfg, const std::string& msg) {
    if (!cfg.quiet) std::cerr << "[pipeline] " << msg << '\n';
}

} // namespace

std::vector<double> default_grid() {
    std::vector<double> grid;
    for (int e = -6; e <= 6; ++e) grid.push_back(std::pow(10.0, e));
    return grid;
}

void PipelineConfig::validate() const {
    if (input.has_value() == generator.has_value()) {
        throw ConfigError("exactly one of input csv or generator must be set");
    }
    if (input) {
        if (k_split < 2) throw ConfigError("k_split must be >= 2 to withhold a cluster");
        if (test_cluster < 0 || test_cluster >= k_split) {
            throw ConfigError("test_cluster must lie in [0, k_split)");
        }
    }
    if (k_train < 1) throw ConfigError("k_train must be >= 1");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (!(rank_tolerance > 0.0 && rank_tolerance < 1.0)) {
        throw ConfigError("rank_tolerance must lie in (0, 1)");
    }
    if (anchor_ridge && *anchor_ridge < 0.0) throw ConfigError("anchor_ridge must be >= 0");
    for (const auto* grid : {&lambda_grid, &alpha_grid}) {
        for (double v : *grid) {
            if (!(v > 0.0)) throw ConfigError("grid values must be > 0");
        }
    }
    if (generator) generator->validate();
}

PipelineConfig acceptance_preset(std::uint64_t master_seed, const std::string& out_dir) {
    PipelineConfig cfg;
    cfg.generator = GeneratorConfig{};
    cfg.generator->seed = master_seed;
    cfg.holdout_env = cfg.generator->n_envs - 1;
    cfg.k_train = cfg.generator->n_envs - 1;
    cfg.pairing = PairingRule::by_centroid;
    cfg.kmeans_opts.restarts = 24;
    cfg.seeds.generation = master_seed;
    cfg.seeds.clustering = derive_seed(master_seed, 101);
    cfg.seeds.cv = derive_seed(master_seed, 102);
    cfg.out_dir = out_dir;
    return cfg;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    const std::vector<double> lambda_grid =
        config.lambda_grid.empty() ? default_grid() : config.lambda_grid;
    const std::vector<double> alpha_grid =
        config.alpha_grid.empty() ? default_grid() : config.alpha_grid;
    KMeansOptions km = config.kmeans_opts;
    km.threads = config.threads;

    // Stage 1: obtain training and OOD test rows.
    LabeledDataset train, test;
    nlohmann::json carve_report;
    std::string ood_source;
    if (config.generator) {
        GeneratorConfig gen = *config.generator;
        gen.seed = config.seeds.generation;
        const int holdout = config.holdout_env < 0 ? gen.n_envs - 1 : config.holdout_env;
        note(config, "generating " + std::to_string(gen.n_envs) + " environments, holding out " +
                         std::to_string(holdout));
        auto [train_part, test_part] =
            stage("generate", [&] { return ood_protocol(gen, holdout); });
        train = std::move(train_part.dataset);
        test = std::move(test_part.dataset);
        ood_source = "environment_holdout";
        carve_report = nullptr;
    } else {
        const LabeledDataset full = stage("load", [&] {
            if (config.input->label_index) {
                return load_csv(config.input->path, *config.input->label_index,
                                config.input->has_header);
            }
            return load_csv(config.input->path, config.input->label_column);
        });
        note(config, "loaded " + std::to_string(full.n()) + " rows, carving OOD cluster " +
                         std::to_string(config.test_cluster) + " of " +
                         std::to_string(config.k_split));
        // The carve needs a projection before any split exists; this
        // transform is used only here. The model transform is re-fit on
        // the training rows below.
        const PcaTransform carve_pca =
            stage("carve_pca", [&] { return fit_pca(full.features, config.rank_tolerance); });
        const SubpopulationPartition carve = stage("carve_clusters", [&] {
            return build_subpopulations(full, carve_pca, config.k_split,
                                        derive_seed(config.seeds.clustering, 1), config.pairing, km);
        });
        const SplitSpec split =
            stage("ood_split", [&] { return make_ood_split(carve, config.test_cluster); });
        train = subset(full, split.train_indices);
        test = subset(full, split.test_indices);
        ood_source = "cluster_carve";
        carve_report = cluster_report_json(carve);
    }

    // Stage 2: model transform, fit on the training rows only.
    const PcaTransform transform =
        stage("fit_pca", [&] { return fit_pca(train.features, config.rank_tolerance); });
    const FeatureMatrix train_pcs = apply_pca(transform, train.features);
    note(config, "pca keeps " + std::to_string(transform.k) + " of " +
                     std::to_string(transform.input_dim()) + " dimensions");

    // Stage 3: training subpopulations.
    const SubpopulationPartition partition = stage("train_clusters", [&] {
        return build_subpopulations(train, transform, config.k_train,
                                    derive_seed(config.seeds.clustering, 2), config.pairing, km);
    });
    const bool degenerate = partition.clusters.size() < 2;
    if (degenerate) note(config, "single training cluster: ni degenerates to a ridge toward one anchor");

    // Stage 4: hyperparameter selection.
    PipelineResult result;
    result.degenerate_single_cluster = degenerate;
    result.tuning_ni = stage("tune_ni", [&] {
        if (degenerate) {
            return tune_ni_kfold(train, transform, alpha_grid, config.folds, config.seeds.cv,
                                 config.anchor_ridge, config.solver, config.threads,
                                 &result.audit_ni);
        }
        return tune_ni(train, transform, partition, alpha_grid, config.anchor_ridge,
                       config.solver, config.threads, &result.audit_ni);
    });
    result.tuning_l2 = stage("tune_l2", [&] {
        return tune_l2(train, transform, lambda_grid, config.folds, config.seeds.cv,
                       config.solver, config.threads, &result.audit_l2);
    });
    result.best_alpha = result.tuning_ni.best_value;
    result.best_lambda = result.tuning_l2.best_value;
    note(config, "selected alpha=" + std::to_string(result.best_alpha) +
                     ", lambda=" + std::to_string(result.best_lambda));

    // Stage 5: final fits on the full training set.
    const std::vector<Eigen::VectorXd> anchors = stage("anchors", [&] {
        return fit_cluster_anchors(train_pcs, train.labels, partition, config.anchor_ridge,
                                   config.solver, config.threads);
    });
    result.model_ni = stage("fit_ni", [&] {
        return fit(train_pcs, train.labels,
                   RegularizerSpec::ni_spec(result.best_alpha, anchors), config.solver);
    });
    result.model_l2 = stage("fit_l2", [&] {
        return fit(train_pcs, train.labels, RegularizerSpec::l2_spec(result.best_lambda),
                   config.solver);
    });
    result.model_ni.transform_id = transform.id();
    result.model_l2.transform_id = transform.id();

    // Stage 6: evaluate both on the withheld OOD test set.
    const EvalReport eval_ni =
        stage("evaluate", [&] { return evaluate(result.model_ni, transform, test, "ood_test"); });
    const EvalReport eval_l2 =
        stage("evaluate", [&] { return evaluate(result.model_l2, transform, test, "ood_test"); });
    result.auc_ni = eval_ni.auc;
    result.auc_l2 = eval_l2.auc;
    result.auc_gap = eval_ni.auc - eval_l2.auc;
    note(config, "auc_ni=" + std::to_string(result.auc_ni) +
                     " auc_l2=" + std::to_string(result.auc_l2));

    // Stage 7: report bundle.
    nlohmann::json summary;
    summary["auc_ni"] = result.auc_ni;
    summary["auc_l2"] = result.auc_l2;
    summary["auc_gap"] = result.auc_gap;
    summary["best_alpha"] = result.best_alpha;
    summary["best_lambda"] = result.best_lambda;
    summary["config"] = pipeline_config_to_json(config);
    summary["seeds"] = {{"clustering", config.seeds.clustering},
                        {"cv", config.seeds.cv},
                        {"generation", config.seeds.generation}};
    summary["versions"] = {{"nireg", kVersion}, {"format", 1}};
    summary["ood_source"] = ood_source;
    summary["degenerate_single_cluster"] = degenerate;
    summary["n_train"] = train.n();
    summary["n_test"] = test.n();
    result.summary = summary;

    if (!config.out_dir.empty()) {
        stage("write_reports", [&] {
            const std::filesystem::path dir(config.out_dir);
            if (!std::filesystem::is_directory(dir)) {
                throw DataError("output directory does not exist: " + config.out_dir);
            }
            nlohmann::json clusters;
            clusters["ood_source"] = ood_source;
            clusters["ood_carve"] = carve_report;
            clusters["training"] = cluster_report_json(partition);
            write_json((dir / "cluster-report.json").string(), clusters);
            write_json((dir / "tuning-report-ni.json").string(),
                       tuning_report_json(result.tuning_ni));
            write_json((dir / "tuning-report-l2.json").string(),
                       tuning_report_json(result.tuning_l2));
            write_json((dir / "model-ni.json").string(), model_to_json(result.model_ni));
            write_json((dir / "model-l2.json").string(), model_to_json(result.model_l2));
            write_roc_csv(eval_ni.curve, (dir / "roc-ni.csv").string());
            write_roc_csv(eval_l2.curve, (dir / "roc-l2.csv").string());
            write_json((dir / "pca.json").string(), pca_to_json(transform));
            write_json((dir / "summary.json").string(), summary);
            return 0;
        });
    }
    return result;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& config) {
    nlohmann::json j;
    if (config.input) {
        nlohmann::json in;
        in["csv"] = config.input->path;
        in["label"] = config.input->label_column;
        in["has_header"] = config.input->has_header;
        if (config.input->label_index) in["label_index"] = *config.input->label_index;
        j["input"] = std::move(in);
    }
    if (config.generator) j["generator"] = generator_config_to_json(*config.generator);
    j["holdout_env"] = config.holdout_env;
    j["k_split"] = config.k_split;
    j["test_cluster"] = config.test_cluster;
    j["k_train"] = config.k_train;
    j["pairing"] = to_string(config.pairing);
    j["rank_tolerance"] = config.rank_tolerance;
    if (config.anchor_ridge) {
        j["anchor_ridge"] = *config.anchor_ridge;
    } else {
        j["anchor_ridge"] = nullptr;
    }
    j["lambda_grid"] = config.lambda_grid.empty() ? default_grid() : config.lambda_grid;
    j["alpha_grid"] = config.alpha_grid.empty() ? default_grid() : config.alpha_grid;
    j["folds"] = config.folds;
    j["kmeans"] = {{"restarts", config.kmeans_opts.restarts},
                   {"max_iter", config.kmeans_opts.max_iter},
                   {"tol", config.kmeans_opts.tol}};
    j["solver"] = {{"gtol", config.solver.gtol}, {"max_iter", config.solver.max_iter}};
    j["seeds"] = {{"clustering", config.seeds.clustering},
                  {"cv", config.seeds.cv},
                  {"generation", config.seeds.generation}};
    j["threads"] = config.threads;
    return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    if (j.contains("input") && !j.at("input").is_null()) {
        CsvInput in;
        in.path = j.at("input").at("csv").get<std::string>();
        in.label_column = j.at("input").value("label", in.label_column);
        in.has_header = j.at("input").value("has_header", true);
        if (j.at("input").contains("label_index")) {
            in.label_index = j.at("input").at("label_index").get<int>();
        }
        c.input = std::move(in);
    }
    if (j.contains("generator") && !j.at("generator").is_null()) {
        c.generator = generator_config_from_json(j.at("generator"));
    }
    c.holdout_env = j.value("holdout_env", c.holdout_env);
    c.k_split = j.value("k_split", c.k_split);
    c.test_cluster = j.value("test_cluster", c.test_cluster);
    c.k_train = j.value("k_train", c.k_train);
    if (j.contains("pairing")) c.pairing = pairing_rule_from_string(j.at("pairing"));
    c.rank_tolerance = j.value("rank_tolerance", c.rank_tolerance);
    if (j.contains("anchor_ridge") && !j.at("anchor_ridge").is_null()) {
        c.anchor_ridge = j.at("anchor_ridge").get<double>();
    }
    if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("alpha_grid")) c.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    c.folds = j.value("folds", c.folds);
    if (j.contains("kmeans")) {
        const auto& k = j.at("kmeans");
        c.kmeans_opts.restarts = k.value("restarts", c.kmeans_opts.restarts);
        c.kmeans_opts.max_iter = k.value("max_iter", c.kmeans_opts.max_iter);
        c.kmeans_opts.tol = k.value("tol", c.kmeans_opts.tol);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        c.solver.gtol = s.value("gtol", c.solver.gtol);
        c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
    }
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        c.seeds.clustering = s.value("clustering", c.seeds.clustering);
        c.seeds.cv = s.value("cv", c.seeds.cv);
        c.seeds.generation = s.value("generation", c.seeds.generation);
    }
    c.threads = j.value("threads", c.threads);
    return c;
}

} // namespace nireg
