#include "nireg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "nireg/errors.hpp"
#include "nireg/rng.hpp"

namespace nireg {

namespace {

constexpr std::uint64_t kOffsetStream = 0x0FF5E7;

// Seeded per-environment offset directions on the unit sphere, kept at
// pairwise distance >= 0.8 by bounded rejection so environments stay
// geometrically distinct.
std::vector<Eigen::VectorXd> offset_directions(const GeneratorConfig& cfg) {
    std::vector<Eigen::VectorXd> dirs;
    if (cfg.d_noise == 0) return dirs;
    std::mt19937_64 rng = make_engine(cfg.seed, kOffsetStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int e = 0; e < cfg.n_envs; ++e) {
        Eigen::VectorXd best;
        double best_min_dist = -1.0;
        for (int attempt = 0; attempt < 64; ++attempt) {
            Eigen::VectorXd u(cfg.d_noise);
            for (int j = 0; j < cfg.d_noise; ++j) u(j) = normal(rng);
            const double norm = u.norm();
            if (norm == 0.0) continue;
            u /= norm;
            double min_dist = std::numeric_limits<double>::infinity();
            for (const auto& v : dirs) min_dist = std::min(min_dist, (u - v).norm());
            if (min_dist > best_min_dist) {
                best_min_dist = min_dist;
                best = u;
            }
            if (min_dist >= 0.8) break;
        }
        dirs.push_back(best);
    }
    return dirs;
}

} // namespace

void GeneratorConfig::validate() const {
    if (n_per_env < 1) throw ConfigError("n_per_env must be >= 1");
    if (n_envs < 1) throw ConfigError("n_envs must be >= 1");
    if (d_inv < 1 || d_sp < 1) throw ConfigError("d_inv and d_sp must be >= 1");
    if (d_noise < 0) throw ConfigError("d_noise must be >= 0");
    if (mu_inv < 0.0 || mu_sp < 0.0 || env_offset < 0.0 || noise_sd < 0.0) {
        throw ConfigError("magnitudes must be >= 0");
    }
    if (static_cast<int>(spurious_signs.size()) != n_envs) {
        throw ConfigError("spurious_signs length must equal n_envs");
    }
    for (int s : spurious_signs) {
        if (s != 1 && s != -1) throw ConfigError("spurious_signs entries must be +1 or -1");
    }
    if (static_cast<int>(class1_fractions.size()) != n_envs) {
        throw ConfigError("class1_fractions length must equal n_envs");
    }
    for (double f : class1_fractions) {
        if (!(f > 0.0 && f < 1.0)) throw ConfigError("class1_fractions must lie in (0, 1)");
    }
}

SyntheticDataset generate(const GeneratorConfig& config) {
    config.validate();
    const auto dirs = offset_directions(config);
    const int d = config.dim();
    const Index n_total = static_cast<Index>(config.n_per_env) * config.n_envs;

    SyntheticDataset out;
    out.dataset.features.values.resize(n_total, d);
    out.dataset.features.feature_names.reserve(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) out.dataset.features.feature_names.push_back("x" + std::to_string(j));
    out.dataset.labels.resize(static_cast<std::size_t>(n_total));
    out.dataset.sample_ids.reserve(static_cast<std::size_t>(n_total));
    for (Index i = 0; i < n_total; ++i) out.dataset.sample_ids.push_back(std::to_string(i));
    out.env_labels.resize(static_cast<std::size_t>(n_total));

    for (int e = 0; e < config.n_envs; ++e) {
        std::mt19937_64 rng = make_engine(config.seed, static_cast<std::uint64_t>(e));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double sign = static_cast<double>(config.spurious_signs[static_cast<std::size_t>(e)]);
        const double frac = config.class1_fractions[static_cast<std::size_t>(e)];
        const Eigen::VectorXd delta = config.d_noise > 0
                                          ? (config.env_offset * dirs[static_cast<std::size_t>(e)]).eval()
                                          : Eigen::VectorXd();
        for (int s = 0; s < config.n_per_env; ++s) {
            const Index row = static_cast<Index>(e) * config.n_per_env + s;
            const int y = unit(rng) < frac ? 1 : 0;
            const double pm = 2.0 * y - 1.0;
            out.dataset.labels[static_cast<std::size_t>(row)] = y;
            out.env_labels[static_cast<std::size_t>(row)] = e;
            int j = 0;
            for (int c = 0; c < config.d_inv; ++c, ++j) {
                out.dataset.features.values(row, j) =
                    pm * config.mu_inv + config.noise_sd * normal(rng);
            }
            for (int c = 0; c < config.d_sp; ++c, ++j) {
                out.dataset.features.values(row, j) =
                    pm * config.mu_sp * sign + config.noise_sd * normal(rng);
            }
            for (int c = 0; c < config.d_noise; ++c, ++j) {
                out.dataset.features.values(row, j) = delta(c) + config.noise_sd * normal(rng);
            }
        }
    }
    return out;
}

std::pair<SyntheticDataset, SyntheticDataset> ood_protocol(const GeneratorConfig& config,
                                                           int holdout_env) {
    config.validate();
    if (holdout_env < 0 || holdout_env >= config.n_envs) {
        throw ConfigError("holdout_env " + std::to_string(holdout_env) + " out of range");
    }
    bool differs = false;
    for (int e = 0; e < config.n_envs; ++e) {
        if (e != holdout_env &&
            config.spurious_signs[static_cast<std::size_t>(e)] !=
                config.spurious_signs[static_cast<std::size_t>(holdout_env)]) {
            differs = true;
        }
    }
    if (!differs && config.n_envs > 1) {
        throw ConfigError("held-out spurious sign must differ from at least one training sign");
    }

    const SyntheticDataset full = generate(config);
    std::vector<Index> train_rows, test_rows;
    for (Index i = 0; i < full.dataset.n(); ++i) {
        (full.env_labels[static_cast<std::size_t>(i)] == holdout_env ? test_rows : train_rows)
            .push_back(i);
    }
    if (train_rows.empty()) throw ConfigError("ood_protocol requires at least 2 environments");

    auto carve = [&](const std::vector<Index>& rows) {
        SyntheticDataset part;
        part.dataset = subset(full.dataset, rows);
        part.env_labels.reserve(rows.size());
        for (Index i : rows) part.env_labels.push_back(full.env_labels[static_cast<std::size_t>(i)]);
        return part;
    };
    return {carve(train_rows), carve(test_rows)};
}

void write_envs_csv(const SyntheticDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "sample_id,env\n";
    for (std::size_t i = 0; i < data.env_labels.size(); ++i) {
        out << data.dataset.sample_ids[i] << ',' << data.env_labels[i] << '\n';
    }
    if (!out) throw DataError("write failure: " + path);
}

nlohmann::json generator_config_to_json(const GeneratorConfig& config) {
    return {{"n_per_env", config.n_per_env},
            {"n_envs", config.n_envs},
            {"d_inv", config.d_inv},
            {"d_sp", config.d_sp},
            {"d_noise", config.d_noise},
            {"mu_inv", config.mu_inv},
            {"mu_sp", config.mu_sp},
            {"spurious_signs", config.spurious_signs},
            {"class1_fractions", config.class1_fractions},
            {"env_offset", config.env_offset},
            {"noise_sd", config.noise_sd},
            {"seed", config.seed}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.n_per_env = j.value("n_per_env", c.n_per_env);
    c.n_envs = j.value("n_envs", c.n_envs);
    c.d_inv = j.value("d_inv", c.d_inv);
    c.d_sp = j.value("d_sp", c.d_sp);
    c.d_noise = j.value("d_noise", c.d_noise);
    c.mu_inv = j.value("mu_inv", c.mu_inv);
    c.mu_sp = j.value("mu_sp", c.mu_sp);
    if (j.contains("spurious_signs")) c.spurious_signs = j.at("spurious_signs").get<std::vector<int>>();
    if (j.contains("class1_fractions")) {
        c.class1_fractions = j.at("class1_fractions").get<std::vector<double>>();
    } else if (j.contains("n_envs")) {
        c.class1_fractions.assign(static_cast<std::size_t>(c.n_envs), 0.5);
    }
    if (j.contains("n_envs") && !j.contains("spurious_signs")) {
        c.spurious_signs.assign(static_cast<std::size_t>(c.n_envs), 1);
        if (c.n_envs > 1) c.spurious_signs.back() = -1;
    }
    c.env_offset = j.value("env_offset", c.env_offset);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

} // namespace nireg
