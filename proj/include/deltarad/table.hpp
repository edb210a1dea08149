#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace deltarad {

inline double missing_value() {
  return std::numeric_limits<double>::quiet_NaN();
}

/// Rows = patients, columns = named features, plus a binary label per row.
/// Missing cells are NaN. `flags` marks rows assembled through a fallback
/// path (e.g. registration failure).
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::string> feature_names;
  std::vector<double> data;  // row-major
  std::vector<int> labels;
  std::vector<std::uint8_t> flags;

  std::size_t rows() const { return ids.size(); }
  std::size_t cols() const { return feature_names.size(); }

  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

  void add_row(std::string id, const std::vector<double>& values, int label,
               std::uint8_t flag = 0);

  FeatureTable subset_rows(const std::vector<std::size_t>& idx) const;
  FeatureTable subset_cols(const std::vector<std::size_t>& idx) const;

  /// Column index by name; throws if absent.
  std::size_t col_index(const std::string& name) const;
};

void save_csv(const FeatureTable& t, const std::string& path);
FeatureTable load_csv(const std::string& path);

}  // namespace deltarad
