// nireg: non-i.i.d. regularized logistic regression experiments.
//
// Subcommands expose the pipeline stages individually (generate, split,
// cluster, fit, tune, eval) plus the end-to-end pipeline run.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "nireg/dataset.hpp"
#include "nireg/errors.hpp"
#include "nireg/kmeans.hpp"
#include "nireg/logistic.hpp"
#include "nireg/pca.hpp"
#include "nireg/pipeline.hpp"
#include "nireg/roc.hpp"
#include "nireg/rng.hpp"
#include "nireg/synthetic.hpp"
#include "nireg/tuning.hpp"

namespace {

using nireg::Index;

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

void require_dir(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw nireg::DataError("output directory does not exist: " + dir);
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw nireg::DataError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw nireg::DataError("write failure: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw nireg::DataError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw nireg::DataError("invalid json in " + path + ": " + e.what());
    }
    return j;
}

// Dataset input flags shared by the stage subcommands.
struct InputFlags {
    std::string path;
    std::string label = "label";
    int label_index = -1;
    bool no_header = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--in", path, "input dataset CSV")->required();
        cmd->add_option("--label", label, "label column name (default: label)");
        cmd->add_option("--label-index", label_index, "zero-based label column index");
        cmd->add_flag("--no-header", no_header, "CSV has no header row");
    }

    nireg::LabeledDataset load() const {
        if (label_index >= 0 || no_header) {
            const int idx = label_index >= 0 ? label_index : 0;
            return nireg::load_csv(path, idx, !no_header);
        }
        return nireg::load_csv(path, label);
    }
};

int cmd_generate(const nireg::GeneratorConfig& cfg, const std::string& out_dir, bool quiet) {
    require_dir(out_dir);
    const nireg::SyntheticDataset data = nireg::generate(cfg);
    const std::filesystem::path dir(out_dir);
    nireg::save_csv(data.dataset, (dir / "dataset.csv").string());
    nireg::write_envs_csv(data, (dir / "envs.csv").string());
    if (!quiet) {
        std::cerr << "wrote " << data.dataset.n() << " rows (" << cfg.n_envs
                  << " environments) to " << out_dir << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"non-i.i.d. regularized logistic regression"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress progress output");

    // ---- generate ----
    auto* gen_cmd = app.add_subcommand("generate", "emit a synthetic non-i.i.d. dataset CSV");
    std::string gen_preset = "acceptance";
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    nireg::GeneratorConfig gen_cfg;
    std::string gen_signs, gen_fracs;
    gen_cmd->add_option("--preset", gen_preset, "config preset (acceptance)");
    gen_cmd->add_option("--seed", gen_seed, "generator seed");
    gen_cmd->add_option("-o,--out", gen_out, "output directory")->required();
    gen_cmd->add_option("--envs", gen_cfg.n_envs, "environment count");
    gen_cmd->add_option("--n-per-env", gen_cfg.n_per_env, "samples per environment");
    gen_cmd->add_option("--d-inv", gen_cfg.d_inv, "invariant feature count");
    gen_cmd->add_option("--d-sp", gen_cfg.d_sp, "spurious feature count");
    gen_cmd->add_option("--d-noise", gen_cfg.d_noise, "noise feature count");
    gen_cmd->add_option("--mu-inv", gen_cfg.mu_inv, "invariant class separation");
    gen_cmd->add_option("--mu-sp", gen_cfg.mu_sp, "spurious class separation");
    gen_cmd->add_option("--signs", gen_signs, "per-env spurious signs, e.g. 1,-1,1");
    gen_cmd->add_option("--fracs", gen_fracs, "per-env class-1 fractions");
    gen_cmd->add_option("--env-offset", gen_cfg.env_offset, "environment offset magnitude");
    gen_cmd->add_option("--noise-sd", gen_cfg.noise_sd, "common noise standard deviation");

    // ---- split ----
    auto* split_cmd = app.add_subcommand("split", "carve an out-of-distribution test split");
    InputFlags split_in;
    split_in.attach(split_cmd);
    int split_k = 5, split_test_cluster = 0;
    std::uint64_t split_seed = 1;
    std::string split_pairing = "by_index", split_out;
    double split_rank_tol = 1e-9;
    int split_restarts = 8;
    split_cmd->add_option("--k", split_k, "clusters per class");
    split_cmd->add_option("--test-cluster", split_test_cluster, "combined cluster to withhold");
    split_cmd->add_option("--seed", split_seed, "clustering seed");
    split_cmd->add_option("--pairing", split_pairing, "by_index|by_size|by_centroid");
    split_cmd->add_option("--rank-tol", split_rank_tol, "pca rank tolerance");
    split_cmd->add_option("--restarts", split_restarts, "k-means restarts");
    split_cmd->add_option("-o,--out", split_out, "output directory")->required();

    // ---- cluster ----
    auto* cluster_cmd = app.add_subcommand("cluster", "per-class k-means subpopulations");
    InputFlags cluster_in;
    cluster_in.attach(cluster_cmd);
    int cluster_k = 5;
    std::uint64_t cluster_seed = 1;
    std::string cluster_pairing = "by_index", cluster_out;
    double cluster_rank_tol = 1e-9;
    int cluster_restarts = 8;
    cluster_cmd->add_option("--k", cluster_k, "clusters per class");
    cluster_cmd->add_option("--seed", cluster_seed, "clustering seed");
    cluster_cmd->add_option("--pairing", cluster_pairing, "by_index|by_size|by_centroid");
    cluster_cmd->add_option("--rank-tol", cluster_rank_tol, "pca rank tolerance");
    cluster_cmd->add_option("--restarts", cluster_restarts, "k-means restarts");
    cluster_cmd->add_option("-o,--out", cluster_out, "output directory")->required();

    // ---- fit ----
    auto* fit_cmd = app.add_subcommand("fit", "fit one regularized logistic model");
    InputFlags fit_in;
    fit_in.attach(fit_cmd);
    std::string fit_reg = "l2";
    double fit_lambda = 1.0, fit_alpha = 1.0;
    int fit_k = 5;
    std::uint64_t fit_seed = 1;
    std::string fit_pairing = "by_index", fit_out;
    double fit_rank_tol = 1e-9;
    double fit_anchor_ridge = -1.0;
    fit_cmd->add_option("--reg", fit_reg, "none|l2|ni");
    fit_cmd->add_option("--lambda", fit_lambda, "l2 strength");
    fit_cmd->add_option("--alpha", fit_alpha, "ni strength");
    fit_cmd->add_option("--k", fit_k, "clusters per class for ni anchors");
    fit_cmd->add_option("--seed", fit_seed, "clustering seed for ni anchors");
    fit_cmd->add_option("--pairing", fit_pairing, "by_index|by_size|by_centroid");
    fit_cmd->add_option("--rank-tol", fit_rank_tol, "pca rank tolerance");
    fit_cmd->add_option("--anchor-ridge", fit_anchor_ridge,
                        "anchor l2 strength (negative = 1e-4 * cluster size)");
    fit_cmd->add_option("-o,--out", fit_out, "output directory")->required();

    // ---- tune ----
    auto* tune_cmd = app.add_subcommand("tune", "hyperparameter selection by cross-validation");
    InputFlags tune_in;
    tune_in.attach(tune_cmd);
    std::string tune_protocol = "kfold";
    std::string tune_grid;
    int tune_folds = 5, tune_k = 5;
    std::uint64_t tune_seed = 1;
    std::string tune_pairing = "by_index", tune_out;
    double tune_rank_tol = 1e-9;
    double tune_anchor_ridge = -1.0;
    int tune_restarts = 8;
    tune_cmd->add_option("--protocol", tune_protocol, "kfold (l2) | cluster-holdout (ni)");
    tune_cmd->add_option("--grid", tune_grid, "comma-separated grid values");
    tune_cmd->add_option("--folds", tune_folds, "random folds (kfold protocol)");
    tune_cmd->add_option("--k", tune_k, "clusters per class (cluster-holdout protocol)");
    tune_cmd->add_option("--seed", tune_seed, "shuffle/clustering seed");
    tune_cmd->add_option("--pairing", tune_pairing, "by_index|by_size|by_centroid");
    tune_cmd->add_option("--rank-tol", tune_rank_tol, "pca rank tolerance");
    tune_cmd->add_option("--anchor-ridge", tune_anchor_ridge,
                         "anchor l2 strength (negative = 1e-4 * cluster size)");
    tune_cmd->add_option("--restarts", tune_restarts, "k-means restarts");
    tune_cmd->add_option("-o,--out", tune_out, "output directory")->required();

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "score a model on a dataset");
    InputFlags eval_in;
    eval_in.attach(eval_cmd);
    std::string eval_model, eval_pca, eval_split_name = "test", eval_out;
    eval_cmd->add_option("--model", eval_model, "model json")->required();
    eval_cmd->add_option("--pca", eval_pca, "pca transform json")->required();
    eval_cmd->add_option("--split-name", eval_split_name, "split label for the report");
    eval_cmd->add_option("-o,--out", eval_out, "output directory")->required();

    // ---- pipeline ----
    auto* pipe_cmd = app.add_subcommand("pipeline", "full experiment with report bundle");
    std::string pipe_config_path, pipe_in, pipe_label = "label", pipe_out;
    bool pipe_generate = false;
    std::uint64_t pipe_seed = 0;
    bool pipe_seed_set = false;
    int pipe_threads = -1, pipe_k_split = -1, pipe_k_train = -1, pipe_test_cluster = -1;
    int pipe_holdout_env = -2, pipe_folds = -1, pipe_restarts = -1;
    std::string pipe_pairing, pipe_lambda_grid, pipe_alpha_grid;
    double pipe_anchor_ridge = -2.0, pipe_rank_tol = -1.0;
    pipe_cmd->add_option("--config", pipe_config_path, "pipeline config json");
    pipe_cmd->add_option("--in", pipe_in, "input dataset CSV (overrides config)");
    pipe_cmd->add_option("--label", pipe_label, "label column name");
    pipe_cmd->add_flag("--generate", pipe_generate, "use the synthetic acceptance preset");
    pipe_cmd->add_option("--seed", pipe_seed, "master seed (derives all three seeds)")
        ->each([&](const std::string&) { pipe_seed_set = true; });
    pipe_cmd->add_option("--threads", pipe_threads, "worker threads (0 = hardware)");
    pipe_cmd->add_option("--k-split", pipe_k_split, "carve clusters per class");
    pipe_cmd->add_option("--test-cluster", pipe_test_cluster, "withheld combined cluster");
    pipe_cmd->add_option("--k-train", pipe_k_train, "training clusters per class");
    pipe_cmd->add_option("--holdout-env", pipe_holdout_env, "held-out environment (generator mode)");
    pipe_cmd->add_option("--folds", pipe_folds, "random folds for the l2 protocol");
    pipe_cmd->add_option("--pairing", pipe_pairing, "by_index|by_size|by_centroid");
    pipe_cmd->add_option("--lambda-grid", pipe_lambda_grid, "comma-separated lambda grid");
    pipe_cmd->add_option("--alpha-grid", pipe_alpha_grid, "comma-separated alpha grid");
    pipe_cmd->add_option("--anchor-ridge", pipe_anchor_ridge,
                         "anchor l2 strength (negative = 1e-4 * cluster size)");
    pipe_cmd->add_option("--rank-tol", pipe_rank_tol, "pca rank tolerance");
    pipe_cmd->add_option("--restarts", pipe_restarts, "k-means restarts");
    pipe_cmd->add_option("-o,--out", pipe_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd) {
            if (gen_preset != "acceptance") {
                throw nireg::ConfigError("unknown preset: " + gen_preset);
            }
            gen_cfg.seed = gen_seed;
            if (!gen_signs.empty()) gen_cfg.spurious_signs = parse_int_list(gen_signs);
            if (!gen_fracs.empty()) gen_cfg.class1_fractions = parse_double_list(gen_fracs);
            if (gen_cmd->count("--envs") != 0) {
                if (gen_signs.empty()) {
                    gen_cfg.spurious_signs.assign(static_cast<std::size_t>(gen_cfg.n_envs), 1);
                    if (gen_cfg.n_envs > 1) gen_cfg.spurious_signs.back() = -1;
                }
                if (gen_fracs.empty()) {
                    gen_cfg.class1_fractions.assign(static_cast<std::size_t>(gen_cfg.n_envs), 0.5);
                }
            }
            return cmd_generate(gen_cfg, gen_out, quiet);
        }

        if (*split_cmd) {
            require_dir(split_out);
            const auto ds = split_in.load();
            const auto transform = nireg::fit_pca(ds.features, split_rank_tol);
            nireg::KMeansOptions km;
            km.restarts = split_restarts;
            const auto part = nireg::build_subpopulations(
                ds, transform, split_k, split_seed,
                nireg::pairing_rule_from_string(split_pairing), km);
            const auto split = nireg::make_ood_split(part, split_test_cluster);
            const std::filesystem::path dir(split_out);
            write_json_file((dir / "cluster-report.json").string(), cluster_report_json(part));
            nlohmann::json sj;
            sj["train_indices"] = split.train_indices;
            sj["test_indices"] = split.test_indices;
            sj["test_cluster"] = split_test_cluster;
            write_json_file((dir / "split.json").string(), sj);
            return 0;
        }

        if (*cluster_cmd) {
            require_dir(cluster_out);
            const auto ds = cluster_in.load();
            const auto transform = nireg::fit_pca(ds.features, cluster_rank_tol);
            nireg::KMeansOptions km;
            km.restarts = cluster_restarts;
            const auto part = nireg::build_subpopulations(
                ds, transform, cluster_k, cluster_seed,
                nireg::pairing_rule_from_string(cluster_pairing), km);
            const std::filesystem::path dir(cluster_out);
            write_json_file((dir / "cluster-report.json").string(), cluster_report_json(part));
            std::ofstream out(dir / "assignments.csv");
            if (!out) throw nireg::DataError("cannot open for writing: assignments.csv");
            out << "sample_id,cluster\n";
            std::vector<int> cluster_of(static_cast<std::size_t>(ds.n()), -1);
            for (std::size_t c = 0; c < part.clusters.size(); ++c) {
                for (Index i : part.clusters[c]) cluster_of[static_cast<std::size_t>(i)] = static_cast<int>(c);
            }
            for (Index i = 0; i < ds.n(); ++i) {
                out << ds.sample_ids[static_cast<std::size_t>(i)] << ','
                    << cluster_of[static_cast<std::size_t>(i)] << '\n';
            }
            return 0;
        }

        if (*fit_cmd) {
            require_dir(fit_out);
            const auto ds = fit_in.load();
            const auto transform = nireg::fit_pca(ds.features, fit_rank_tol);
            const auto pcs = nireg::apply_pca(transform, ds.features);
            const auto kind = nireg::reg_kind_from_string(fit_reg);
            nireg::RegularizerSpec spec;
            if (kind == nireg::RegKind::l2) {
                spec = nireg::RegularizerSpec::l2_spec(fit_lambda);
            } else if (kind == nireg::RegKind::ni) {
                const auto part = nireg::build_subpopulations(
                    ds, transform, fit_k, fit_seed, nireg::pairing_rule_from_string(fit_pairing));
                std::optional<double> ridge;
                if (fit_anchor_ridge >= 0.0) ridge = fit_anchor_ridge;
                const auto anchors = nireg::fit_cluster_anchors(pcs, ds.labels, part, ridge);
                spec = nireg::RegularizerSpec::ni_spec(fit_alpha, anchors);
            }
            auto model = nireg::fit(pcs, ds.labels, spec);
            model.transform_id = transform.id();
            const std::filesystem::path dir(fit_out);
            write_json_file((dir / "model.json").string(), model_to_json(model));
            write_json_file((dir / "pca.json").string(), pca_to_json(transform));
            if (!quiet) {
                std::cerr << "fit " << fit_reg << " model: loss=" << model.training_meta.final_loss
                          << " iters=" << model.training_meta.iterations << "\n";
            }
            return 0;
        }

        if (*tune_cmd) {
            require_dir(tune_out);
            const auto ds = tune_in.load();
            const auto transform = nireg::fit_pca(ds.features, tune_rank_tol);
            const std::vector<double> grid =
                tune_grid.empty() ? nireg::default_grid() : parse_double_list(tune_grid);
            nireg::TuningResult result;
            if (tune_protocol == "kfold") {
                result = nireg::tune_l2(ds, transform, grid, tune_folds, tune_seed);
            } else if (tune_protocol == "cluster-holdout") {
                nireg::KMeansOptions km;
                km.restarts = tune_restarts;
                const auto part = nireg::build_subpopulations(
                    ds, transform, tune_k, tune_seed,
                    nireg::pairing_rule_from_string(tune_pairing), km);
                std::optional<double> ridge;
                if (tune_anchor_ridge >= 0.0) ridge = tune_anchor_ridge;
                result = nireg::tune_ni(ds, transform, part, grid, ridge);
            } else {
                throw nireg::ConfigError("unknown protocol: " + tune_protocol);
            }
            write_json_file((std::filesystem::path(tune_out) / "tuning-report.json").string(),
                            tuning_report_json(result));
            if (!quiet) std::cerr << "best value: " << result.best_value << "\n";
            return 0;
        }

        if (*eval_cmd) {
            require_dir(eval_out);
            const auto ds = eval_in.load();
            const auto model = nireg::model_from_json(read_json_file(eval_model));
            const auto transform = nireg::pca_from_json(read_json_file(eval_pca));
            const auto report = nireg::evaluate(model, transform, ds, eval_split_name);
            const std::filesystem::path dir(eval_out);
            write_json_file((dir / "eval-report.json").string(), eval_report_json(report));
            nireg::write_roc_csv(report.curve, (dir / "roc.csv").string());
            if (!quiet) std::cerr << "auc(" << eval_split_name << ") = " << report.auc << "\n";
            return 0;
        }

        if (*pipe_cmd) {
            nireg::PipelineConfig cfg;
            if (!pipe_config_path.empty()) {
                cfg = nireg::pipeline_config_from_json(read_json_file(pipe_config_path));
            } else if (pipe_generate) {
                cfg = nireg::acceptance_preset(pipe_seed_set ? pipe_seed : 1, pipe_out);
            }
            if (!pipe_in.empty()) {
                nireg::CsvInput in;
                in.path = pipe_in;
                in.label_column = pipe_label;
                cfg.input = in;
                cfg.generator.reset();
            }
            if (pipe_seed_set && !pipe_generate && pipe_config_path.empty()) {
                throw nireg::ConfigError("--seed requires --generate or --config");
            }
            if (pipe_seed_set && pipe_generate) {
                // already derived by the preset
            } else if (pipe_seed_set) {
                cfg.seeds.generation = pipe_seed;
                cfg.seeds.clustering = nireg::derive_seed(pipe_seed, 101);
                cfg.seeds.cv = nireg::derive_seed(pipe_seed, 102);
                if (cfg.generator) cfg.generator->seed = cfg.seeds.generation;
            }
            if (pipe_threads >= 0) cfg.threads = pipe_threads;
            if (pipe_k_split > 0) cfg.k_split = pipe_k_split;
            if (pipe_test_cluster >= 0) cfg.test_cluster = pipe_test_cluster;
            if (pipe_k_train > 0) cfg.k_train = pipe_k_train;
            if (pipe_holdout_env >= -1) cfg.holdout_env = pipe_holdout_env;
            if (pipe_folds > 0) cfg.folds = pipe_folds;
            if (!pipe_pairing.empty()) cfg.pairing = nireg::pairing_rule_from_string(pipe_pairing);
            if (!pipe_lambda_grid.empty()) cfg.lambda_grid = parse_double_list(pipe_lambda_grid);
            if (!pipe_alpha_grid.empty()) cfg.alpha_grid = parse_double_list(pipe_alpha_grid);
            if (pipe_anchor_ridge >= 0.0) cfg.anchor_ridge = pipe_anchor_ridge;
            if (pipe_rank_tol > 0.0) cfg.rank_tolerance = pipe_rank_tol;
            if (pipe_restarts > 0) cfg.kmeans_opts.restarts = pipe_restarts;
            cfg.out_dir = pipe_out;
            cfg.quiet = quiet;
            require_dir(pipe_out);
            const auto result = nireg::run_pipeline(cfg);
            if (!quiet) {
                std::cerr << "auc_ni=" << result.auc_ni << " auc_l2=" << result.auc_l2
                          << " gap=" << result.auc_gap << "\n";
            }
            return 0;
        }
    } catch (const nireg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nireg::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const nireg::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
