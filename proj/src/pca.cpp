#include "nireg/pca.hpp"

#include <Eigen/SVD>
#include <cstdio>

#include "nireg/errors.hpp"

namespace nireg {

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace

std::string PcaTransform::id() const {
    const std::uint64_t h = fnv1a(pca_to_json(*this).dump());
    char buf[24];
    std::snprintf(buf, sizeof buf, "pca-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PcaTransform fit_pca(const FeatureMatrix& train, double rank_tolerance) {
    const Index n = train.rows();
    const Index d = train.cols();
    if (n < 2) throw DataError("fit_pca requires at least 2 rows");
    if (!(rank_tolerance > 0.0 && rank_tolerance < 1.0)) {
        throw ConfigError("rank_tolerance must lie in (0, 1)");
    }
    if (!train.values.allFinite()) throw DataError("fit_pca input contains non-finite values");

    PcaTransform t;
    t.mean = train.values.colwise().mean();
    Eigen::MatrixXd centered = train.values.rowwise() - t.mean.transpose();
    t.scale = (centered.array().square().colwise().sum() / static_cast<double>(n))
                  .sqrt()
                  .max(kScaleFloor)
                  .matrix()
                  .transpose();
    Eigen::MatrixXd z = centered.array().rowwise() / t.scale.transpose().array();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) throw DataError("fit_pca: no variance in input");

    const Index max_k = std::min(n - 1, d);
    Index k = 0;
    while (k < sv.size() && k < max_k && sv(k) > rank_tolerance * sv(0)) ++k;
    if (k == 0) throw DataError("fit_pca: no variance in input");

    t.k = k;
    t.singular_values = sv.head(k);
    t.components = svd.matrixV().leftCols(k).transpose();
    // Deterministic sign: largest-magnitude entry of each component positive.
    for (Index r = 0; r < k; ++r) {
        Index arg = 0;
        t.components.row(r).cwiseAbs().maxCoeff(&arg);
        if (t.components(r, arg) < 0.0) t.components.row(r) *= -1.0;
    }
    return t;
}

FeatureMatrix apply_pca(const PcaTransform& t, const FeatureMatrix& data) {
    if (data.cols() != t.input_dim()) {
        throw ConfigError("apply_pca: dimension mismatch (" + std::to_string(data.cols()) +
                          " columns vs transform dimension " + std::to_string(t.input_dim()) + ")");
    }
    FeatureMatrix out;
    Eigen::MatrixXd z = (data.values.rowwise() - t.mean.transpose()).array().rowwise() /
                        t.scale.transpose().array();
    out.values = z * t.components.transpose();
    out.feature_names.reserve(static_cast<std::size_t>(t.k));
    for (Index j = 0; j < t.k; ++j) out.feature_names.push_back("PC" + std::to_string(j + 1));
    return out;
}

nlohmann::json pca_to_json(const PcaTransform& t) {
    nlohmann::json j;
    j["k"] = t.k;
    j["mean"] = std::vector<double>(t.mean.begin(), t.mean.end());
    j["scale"] = std::vector<double>(t.scale.begin(), t.scale.end());
    j["singular_values"] =
        std::vector<double>(t.singular_values.begin(), t.singular_values.end());
    auto rows = nlohmann::json::array();
    for (Index r = 0; r < t.components.rows(); ++r) {
        rows.push_back(std::vector<double>(t.components.row(r).begin(), t.components.row(r).end()));
    }
    j["components"] = std::move(rows);
    return j;
}

PcaTransform pca_from_json(const nlohmann::json& j) {
    PcaTransform t;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    const auto sv = j.at("singular_values").get<std::vector<double>>();
    t.k = j.at("k").get<Index>();
    t.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Index>(mean.size()));
    t.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Index>(scale.size()));
    t.singular_values = Eigen::Map<const Eigen::VectorXd>(sv.data(), static_cast<Index>(sv.size()));
    const auto& rows = j.at("components");
    t.components.resize(t.k, t.mean.size());
    for (Index r = 0; r < t.k; ++r) {
        const auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
        t.components.row(r) =
            Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Index>(row.size()));
    }
    return t;
}

} // namespace nireg
