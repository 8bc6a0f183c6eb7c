#include <doctest.h>

#include <cmath>

#include "nireg/errors.hpp"
#include "nireg/synthetic.hpp"
#include "test_support.hpp"

using namespace nireg;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig cfg;
    cfg.n_envs = 4;
    cfg.n_per_env = 500;
    cfg.d_inv = 2;
    cfg.d_sp = 2;
    cfg.d_noise = 4;
    cfg.mu_inv = 1.0;
    cfg.mu_sp = 2.0;
    cfg.spurious_signs = {1, 1, 1, -1};
    cfg.class1_fractions = {0.5, 0.5, 0.5, 0.5};
    cfg.env_offset = 8.0;
    cfg.noise_sd = 1.0;
    cfg.seed = 42;
    return cfg;
}

double env_corr(const SyntheticDataset& data, int env, Index col) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    Index n = 0;
    for (Index i = 0; i < data.dataset.n(); ++i) {
        if (data.env_labels[static_cast<std::size_t>(i)] != env) continue;
        const double x = data.dataset.features.values(i, col);
        const double y = 2.0 * data.dataset.labels[static_cast<std::size_t>(i)] - 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        ++n;
    }
    const double nd = static_cast<double>(n);
    const double cov = sxy / nd - (sx / nd) * (sy / nd);
    const double vx = sxx / nd - (sx / nd) * (sx / nd);
    const double vy = syy / nd - (sy / nd) * (sy / nd);
    return cov / std::sqrt(vx * vy);
}

} // namespace

TEST_CASE("generate is deterministic for a fixed config") {
    const auto cfg = small_config();
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    CHECK((a.dataset.features.values - b.dataset.features.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.dataset.labels == b.dataset.labels);
    CHECK(a.env_labels == b.env_labels);
}

TEST_CASE("spurious coordinates correlate with the label per environment sign") {
    const auto data = generate(small_config());
    for (int env = 0; env < 4; ++env) {
        for (Index col = 2; col < 4; ++col) {  // spurious block
            const double corr = env_corr(data, env, col);
            if (env < 3) {
                CHECK(corr >= 0.5);
            } else {
                CHECK(corr <= -0.5);
            }
        }
    }
}

TEST_CASE("invariant class-conditional means sit at +/- mu_inv") {
    const auto cfg = small_config();
    const auto data = generate(cfg);
    const double tol =
        3.0 * cfg.noise_sd / std::sqrt(static_cast<double>(cfg.n_per_env) * cfg.n_envs);
    for (Index col = 0; col < cfg.d_inv; ++col) {
        double sum1 = 0, sum0 = 0;
        Index n1 = 0, n0 = 0;
        for (Index i = 0; i < data.dataset.n(); ++i) {
            if (data.dataset.labels[static_cast<std::size_t>(i)] == 1) {
                sum1 += data.dataset.features.values(i, col);
                ++n1;
            } else {
                sum0 += data.dataset.features.values(i, col);
                ++n0;
            }
        }
        CHECK(std::abs(sum1 / static_cast<double>(n1) - cfg.mu_inv) <= tol * 2.0);
        CHECK(std::abs(sum0 / static_cast<double>(n0) + cfg.mu_inv) <= tol * 2.0);
    }
}

TEST_CASE("environment sizes and fractions follow the config") {
    auto cfg = small_config();
    cfg.class1_fractions = {0.15, 0.85, 0.5, 0.5};
    const auto data = generate(cfg);
    std::vector<Index> env_count(4, 0), pos_count(4, 0);
    for (Index i = 0; i < data.dataset.n(); ++i) {
        const int e = data.env_labels[static_cast<std::size_t>(i)];
        ++env_count[static_cast<std::size_t>(e)];
        pos_count[static_cast<std::size_t>(e)] +=
            data.dataset.labels[static_cast<std::size_t>(i)];
    }
    for (int e = 0; e < 4; ++e) {
        CHECK(env_count[static_cast<std::size_t>(e)] == cfg.n_per_env);
        const double frac = static_cast<double>(pos_count[static_cast<std::size_t>(e)]) /
                            static_cast<double>(cfg.n_per_env);
        const double expect = cfg.class1_fractions[static_cast<std::size_t>(e)];
        const double sd = std::sqrt(expect * (1 - expect) / cfg.n_per_env);
        CHECK(std::abs(frac - expect) <= 4.0 * sd);
    }
}

TEST_CASE("degenerate single-environment config is plain iid data") {
    GeneratorConfig cfg;
    cfg.n_envs = 1;
    cfg.n_per_env = 300;
    cfg.d_inv = 2;
    cfg.d_sp = 2;
    cfg.d_noise = 3;
    cfg.mu_inv = 1.0;
    cfg.mu_sp = 0.0;
    cfg.spurious_signs = {1};
    cfg.class1_fractions = {0.5};
    cfg.env_offset = 0.0;
    cfg.noise_sd = 1.0;
    cfg.seed = 5;
    const auto data = generate(cfg);
    CHECK(data.dataset.n() == 300);
    // Spurious block carries no signal when mu_sp = 0.
    for (Index col = 2; col < 4; ++col) {
        CHECK(std::abs(env_corr(data, 0, col)) <= 0.15);
    }
}

TEST_CASE("ood_protocol splits train and test by environment") {
    GeneratorConfig cfg = small_config();
    cfg.n_envs = 2;
    cfg.n_per_env = 100;
    cfg.spurious_signs = {1, -1};
    cfg.class1_fractions = {0.5, 0.5};
    const auto [train, test] = ood_protocol(cfg, 1);
    CHECK(train.dataset.n() == 100);
    CHECK(test.dataset.n() == 100);
    CHECK(train.dataset.n() + test.dataset.n() == cfg.n_envs * cfg.n_per_env);
    for (int e : train.env_labels) CHECK(e == 0);
    for (int e : test.env_labels) CHECK(e == 1);
    // No row overlap: ids are disjoint.
    for (const auto& id : test.dataset.sample_ids) {
        CHECK(std::find(train.dataset.sample_ids.begin(), train.dataset.sample_ids.end(), id) ==
              train.dataset.sample_ids.end());
    }
}

TEST_CASE("ood_protocol validates its preconditions") {
    auto cfg = small_config();
    CHECK_THROWS_AS(ood_protocol(cfg, 7), ConfigError);
    CHECK_THROWS_AS(ood_protocol(cfg, -1), ConfigError);
    cfg.spurious_signs = {1, 1, 1, 1};
    CHECK_THROWS_AS(ood_protocol(cfg, 3), ConfigError);
}

TEST_CASE("generator config validation") {
    auto cfg = small_config();
    cfg.class1_fractions = {0.5, 0.5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.spurious_signs = {1, 1, 2, -1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.n_per_env = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.class1_fractions[0] = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("generator config json round-trip") {
    const auto cfg = small_config();
    const auto back = generator_config_from_json(generator_config_to_json(cfg));
    CHECK(back.n_envs == cfg.n_envs);
    CHECK(back.spurious_signs == cfg.spurious_signs);
    CHECK(back.class1_fractions == cfg.class1_fractions);
    CHECK(back.seed == cfg.seed);
    const auto a = generate(cfg);
    const auto b = generate(back);
    CHECK((a.dataset.features.values - b.dataset.features.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("envs csv lists every sample") {
    test::TempDir tmp("envs");
    auto cfg = small_config();
    cfg.n_per_env = 20;
    const auto data = generate(cfg);
    write_envs_csv(data, tmp.file("envs.csv"));
    std::ifstream in(tmp.file("envs.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_id,env");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == static_cast<std::size_t>(data.dataset.n()));
}
