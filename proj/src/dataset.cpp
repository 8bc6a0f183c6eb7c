#include "nireg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "nireg/errors.hpp"

namespace nireg {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string s = strip(raw);
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) {
        throw DataError("csv parse failure at row " + std::to_string(row) +
                        ", column " + std::to_string(col) + ": '" + s + "'");
    }
    if (!std::isfinite(v)) {
        throw DataError("non-finite value at row " + std::to_string(row) +
                        ", column " + std::to_string(col));
    }
    return v;
}

int parse_label(const std::string& raw, std::size_t row, std::size_t col) {
    const double v = parse_double(raw, row, col);
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw DataError("non-binary label '" + strip(raw) + "' at row " +
                    std::to_string(row));
}

LabeledDataset load_csv_impl(const std::string& path, int label_index,
                             bool has_header, const std::string* label_name) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv file: " + path);

    std::string line;
    std::vector<std::string> header;
    if (has_header) {
        if (!std::getline(in, line)) throw DataError("empty csv file: " + path);
        header = split_fields(line);
        for (auto& h : header) h = strip(h);
    }
    if (label_name != nullptr) {
        auto it = std::find(header.begin(), header.end(), *label_name);
        if (it == header.end()) {
            throw DataError("label column '" + *label_name + "' not found in " + path);
        }
        label_index = static_cast<int>(it - header.begin());
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t line_no = has_header ? 1 : 0;
    std::size_t ncols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        auto fields = split_fields(line);
        if (rows.empty()) {
            ncols = fields.size();
            if (has_header && header.size() != ncols) {
                throw DataError("header has " + std::to_string(header.size()) +
                                " columns but data row has " + std::to_string(ncols));
            }
            if (label_index < 0 || static_cast<std::size_t>(label_index) >= ncols) {
                throw ConfigError("label column index " + std::to_string(label_index) +
                                  " out of range for " + std::to_string(ncols) + " columns");
            }
        } else if (fields.size() != ncols) {
            throw DataError("inconsistent column count at row " + std::to_string(line_no));
        }
        std::vector<double> feat;
        feat.reserve(ncols - 1);
        for (std::size_t c = 0; c < ncols; ++c) {
            if (static_cast<int>(c) == label_index) {
                labels.push_back(parse_label(fields[c], line_no, c));
            } else {
                feat.push_back(parse_double(fields[c], line_no, c));
            }
        }
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw DataError("no data rows in " + path);

    LabeledDataset ds;
    const Index n = static_cast<Index>(rows.size());
    const Index d = static_cast<Index>(ncols - 1);
    ds.features.values.resize(n, d);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) ds.features.values(i, j) = rows[i][j];
    }
    if (has_header) {
        for (std::size_t c = 0; c < ncols; ++c) {
            if (static_cast<int>(c) != label_index) ds.features.feature_names.push_back(header[c]);
        }
    }
    ds.labels = std::move(labels);
    ds.sample_ids.reserve(n);
    for (Index i = 0; i < n; ++i) ds.sample_ids.push_back(std::to_string(i));
    return ds;
}

} // namespace

void validate_dataset(const LabeledDataset& ds) {
    const Index n = ds.features.rows();
    if (n < 1 || ds.features.cols() < 1) throw DataError("dataset must have n >= 1 and d >= 1");
    if (static_cast<Index>(ds.labels.size()) != n) throw DataError("label count does not match rows");
    if (static_cast<Index>(ds.sample_ids.size()) != n) throw DataError("sample id count does not match rows");
    for (int y : ds.labels) {
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    }
    if (!ds.features.values.allFinite()) throw DataError("dataset contains non-finite values");
    std::set<std::string> seen(ds.sample_ids.begin(), ds.sample_ids.end());
    if (static_cast<Index>(seen.size()) != n) throw DataError("sample ids are not unique");
    if (!ds.features.feature_names.empty() &&
        static_cast<Index>(ds.features.feature_names.size()) != ds.features.cols()) {
        throw DataError("feature name count does not match columns");
    }
}

void validate_split(const SplitSpec& split, Index n) {
    if (split.train_indices.empty() || split.test_indices.empty()) {
        throw ConfigError("split must have non-empty train and test sets");
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto* part : {&split.train_indices, &split.test_indices}) {
        for (Index i : *part) {
            if (i < 0 || i >= n) throw ConfigError("split index out of range: " + std::to_string(i));
            if (seen[static_cast<std::size_t>(i)]) {
                throw ConfigError("split sets are not disjoint at index " + std::to_string(i));
            }
            seen[static_cast<std::size_t>(i)] = 1;
        }
    }
}

LabeledDataset load_csv(const std::string& path, const std::string& label_column) {
    return load_csv_impl(path, -1, true, &label_column);
}

LabeledDataset load_csv(const std::string& path, int label_index, bool has_header) {
    return load_csv_impl(path, label_index, has_header, nullptr);
}

void save_csv(const LabeledDataset& ds, const std::string& path) {
    if (ds.n() == 0) throw DataError("refusing to write empty dataset");
    validate_dataset(ds);
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);

    const Index d = ds.dim();
    for (Index j = 0; j < d; ++j) {
        if (!ds.features.feature_names.empty()) {
            out << ds.features.feature_names[static_cast<std::size_t>(j)];
        } else {
            out << 'x' << j;
        }
        out << ',';
    }
    out << "label\n";

    char buf[32];
    for (Index i = 0; i < ds.n(); ++i) {
        for (Index j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features.values(i, j));
            out << buf << ',';
        }
        out << ds.labels[static_cast<std::size_t>(i)] << '\n';
    }
    if (!out) throw DataError("write failure: " + path);
}

LabeledDataset subset(const LabeledDataset& ds, const std::vector<Index>& indices) {
    if (indices.empty()) throw ConfigError("subset requires a non-empty index set");
    std::vector<Index> idx = indices;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    if (idx.front() < 0 || idx.back() >= ds.n()) {
        throw ConfigError("subset index out of range");
    }
    LabeledDataset out;
    const Index m = static_cast<Index>(idx.size());
    out.features.values.resize(m, ds.dim());
    out.features.feature_names = ds.features.feature_names;
    out.labels.reserve(m);
    out.sample_ids.reserve(m);
    for (Index r = 0; r < m; ++r) {
        const Index i = idx[static_cast<std::size_t>(r)];
        out.features.values.row(r) = ds.features.values.row(i);
        out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
        out.sample_ids.push_back(ds.sample_ids[static_cast<std::size_t>(i)]);
    }
    return out;
}

} // namespace nireg
