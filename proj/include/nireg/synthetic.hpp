#pragma once

#include <cstdint>
#include <json.hpp>
#include <utility>
#include <vector>

#include "nireg/dataset.hpp"

namespace nireg {

/// Seeded generator of non-i.i.d. binary-classification data. Each
/// environment e (the latent variable) draws labels y with its own class-1
/// fraction, then per coordinate:
///   invariant:  N((2y-1) * mu_inv,          noise_sd^2)
///   spurious:   N((2y-1) * mu_sp * sign_e,  noise_sd^2)
///   noise:      N(delta_e[j],               noise_sd^2)
/// where delta_e is a fixed per-environment offset of norm env_offset.
/// Feature order is invariant block, spurious block, noise block.
struct GeneratorConfig {
    int n_per_env = 450;
    int n_envs = 7;
    int d_inv = 2;
    int d_sp = 2;
    int d_noise = 16;
    double mu_inv = 0.45;
    double mu_sp = 0.4;
    std::vector<int> spurious_signs = {+1, -1, +1, -1, +1, -1, -1};
    std::vector<double> class1_fractions = {0.15, 0.85, 0.15, 0.85, 0.15, 0.85, 0.5};
    double env_offset = 6.0;
    double noise_sd = 1.0;
    std::uint64_t seed = 1;

    int dim() const { return d_inv + d_sp + d_noise; }

    /// Throws ConfigError on invalid counts, magnitudes or vector lengths.
    void validate() const;
};

struct SyntheticDataset {
    LabeledDataset dataset;
    std::vector<int> env_labels;  // ground-truth latent variable; test use only
};

/// Deterministic given the config: environments draw from independent seed
/// streams and assemble in environment order.
SyntheticDataset generate(const GeneratorConfig& config);

/// Train = all environments except holdout_env, test = holdout_env. The
/// held-out spurious sign must differ from at least one training sign.
std::pair<SyntheticDataset, SyntheticDataset> ood_protocol(const GeneratorConfig& config,
                                                           int holdout_env);

/// CSV "sample_id,env" aligned with the dataset rows; harness use only.
void write_envs_csv(const SyntheticDataset& data, const std::string& path);

nlohmann::json generator_config_to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

} // namespace nireg
