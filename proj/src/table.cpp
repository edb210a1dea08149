#include "deltarad/table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace deltarad {

namespace {

std::string format_cell(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void FeatureTable::add_row(std::string id, const std::vector<double>& values,
                           int label, std::uint8_t flag) {
  if (values.size() != cols())
    throw std::invalid_argument("add_row: value count does not match schema");
  ids.push_back(std::move(id));
  data.insert(data.end(), values.begin(), values.end());
  labels.push_back(label);
  flags.push_back(flag);
}

FeatureTable FeatureTable::subset_rows(const std::vector<std::size_t>& idx) const {
  FeatureTable out;
  out.feature_names = feature_names;
  for (auto r : idx) {
    out.ids.push_back(ids[r]);
    out.labels.push_back(labels[r]);
    out.flags.push_back(flags[r]);
    out.data.insert(out.data.end(), data.begin() + r * cols(),
                    data.begin() + (r + 1) * cols());
  }
  return out;
}

FeatureTable FeatureTable::subset_cols(const std::vector<std::size_t>& idx) const {
  FeatureTable out;
  out.ids = ids;
  out.labels = labels;
  out.flags = flags;
  for (auto c : idx) out.feature_names.push_back(feature_names[c]);
  out.data.reserve(rows() * idx.size());
  for (std::size_t r = 0; r < rows(); ++r)
    for (auto c : idx) out.data.push_back(at(r, c));
  return out;
}

std::size_t FeatureTable::col_index(const std::string& name) const {
  for (std::size_t c = 0; c < feature_names.size(); ++c)
    if (feature_names[c] == name) return c;
  throw std::out_of_range("no such feature column: " + name);
}

void save_csv(const FeatureTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV: " + path);
  out << "id";
  for (const auto& n : t.feature_names) out << "," << n;
  out << ",label,reg_fallback\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    out << t.ids[r];
    for (std::size_t c = 0; c < t.cols(); ++c) out << "," << format_cell(t.at(r, c));
    out << "," << t.labels[r] << "," << static_cast<int>(t.flags[r]) << "\n";
  }
  if (!out) throw std::runtime_error("write failure on CSV: " + path);
}

FeatureTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV: " + path);

  FeatureTable t;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty CSV: " + path);
  auto header = split_csv_line(line);
  if (header.size() < 3 || header.front() != "id")
    throw std::runtime_error("CSV header must start with 'id': " + path);
  const bool has_flag = header.back() == "reg_fallback";
  const std::size_t label_col = has_flag ? header.size() - 2 : header.size() - 1;
  if (header[label_col] != "label")
    throw std::runtime_error("CSV header must contain a trailing 'label' column: " + path);
  for (std::size_t c = 1; c < label_col; ++c) t.feature_names.push_back(header[c]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) +
                               " cells, found " + std::to_string(cells.size()));
    t.ids.push_back(cells[0]);
    for (std::size_t c = 1; c < label_col; ++c) {
      const std::string& s = cells[c];
      if (s.empty()) {
        t.data.push_back(missing_value());
        continue;
      }
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": non-numeric cell '" + s + "'");
      t.data.push_back(v);
    }
    t.labels.push_back(std::stoi(cells[label_col]));
    t.flags.push_back(has_flag ? static_cast<std::uint8_t>(std::stoi(cells.back())) : 0);
  }
  return t;
}

}  // namespace deltarad
