#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <string>

#include "nireg/dataset.hpp"

namespace nireg {

/// Standardization plus orthonormal principal-component projection, fit on
/// training data and applied before every model fit. Immutable once built.
struct PcaTransform {
    Eigen::VectorXd mean;             // per-feature training mean (d)
    Eigen::VectorXd scale;            // per-feature training std dev, floored (d)
    Eigen::MatrixXd components;       // k x d orthonormal rows
    Eigen::VectorXd singular_values;  // k, positive, non-increasing
    Index k = 0;

    Index input_dim() const { return mean.size(); }

    /// Stable content hash used as the transform reference in models.
    std::string id() const;
};

/// Scale entries never drop below this floor, so constant features map to
/// (numerically) zero after centering instead of dividing by zero.
inline constexpr double kScaleFloor = 1e-12;

/// Centers by the training mean, divides by the floored training standard
/// deviation, and keeps the principal directions whose singular value
/// exceeds rank_tolerance times the largest one (k <= min(n-1, d)).
/// Component signs are fixed so each row's largest-magnitude entry is
/// positive. Throws DataError if the standardized matrix is identically
/// zero ("no variance").
PcaTransform fit_pca(const FeatureMatrix& train, double rank_tolerance = 1e-9);

/// Row i of the result is components * ((x_i - mean) / scale); columns are
/// named PC1..PCk.
FeatureMatrix apply_pca(const PcaTransform& t, const FeatureMatrix& data);

nlohmann::json pca_to_json(const PcaTransform& t);
PcaTransform pca_from_json(const nlohmann::json& j);

} // namespace nireg
