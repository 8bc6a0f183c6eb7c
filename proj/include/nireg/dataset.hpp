#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace nireg {

using Index = Eigen::Index;

/// Dense n x d sample-by-feature matrix. All values are finite; ingestion
/// rejects NaN/Inf so downstream code may assume finiteness.
struct FeatureMatrix {
    Eigen::MatrixXd values;                  // row i = sample i
    std::vector<std::string> feature_names;  // empty or size d

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }
};

/// Binary labels aligned with FeatureMatrix rows; entries are 0 or 1.
using LabelVector = std::vector<int>;

struct LabeledDataset {
    FeatureMatrix features;
    LabelVector labels;
    std::vector<std::string> sample_ids;  // unique, aligned with rows

    Index n() const { return features.rows(); }
    Index dim() const { return features.cols(); }
};

/// Disjoint train/test row index sets over one dataset.
struct SplitSpec {
    std::vector<Index> train_indices;
    std::vector<Index> test_indices;
};

/// Throws DataError unless the dataset satisfies its invariants
/// (aligned lengths, binary labels, finite values, unique ids).
void validate_dataset(const LabeledDataset& ds);

/// Throws ConfigError unless the split is disjoint, non-empty on both
/// sides, and within [0, n).
void validate_split(const SplitSpec& split, Index n);

/// Loads a CSV file with the label taken from the named column.
/// Requires a header row.
LabeledDataset load_csv(const std::string& path, const std::string& label_column);

/// Loads a CSV file with the label taken from a zero-based column index.
LabeledDataset load_csv(const std::string& path, int label_index, bool has_header);

/// Writes the dataset as CSV: feature columns first, label column last
/// (named "label"), values printed with 17 significant digits so that
/// load_csv reproduces the dataset exactly.
void save_csv(const LabeledDataset& ds, const std::string& path);

/// Rows selected in ascending index order; labels and ids follow rows.
/// Duplicate indices collapse (set semantics).
LabeledDataset subset(const LabeledDataset& ds, const std::vector<Index>& indices);

} // namespace nireg
