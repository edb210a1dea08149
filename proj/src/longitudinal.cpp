#include "deltarad/longitudinal.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace deltarad {

namespace {

using nlohmann::json;

FeatureVector zero_shape() {
  FeatureVector f;
  f.append("shape_least_axis_length", 0.0);
  f.append("shape_flatness", 0.0);
  f.append("shape_max2d_diameter_row", 0.0);
  f.append("shape_max2d_diameter_column", 0.0);
  return f;
}

FeatureVector shape_or_zero(const Mask3D& m) {
  return m.empty_mask() ? zero_shape() : shape(m);
}

// Intensity features over the tight bounding cube of the mask (identical
// values, much less grid to scan).
FeatureVector intensity_over(const Volume3D& v, const Mask3D& m, int ng) {
  auto box = bounding_box(m);
  if (!box) return extract_intensity(v, m, ng);  // empty: zero-cube path
  Volume3D vc = crop(v, *box, 0);
  Mask3D mc = crop(m, *box, 0);
  return extract_intensity(vc, mc, ng);
}

FeatureVector rename_delta(const FeatureVector& d) {
  FeatureVector out;
  for (std::size_t i = 0; i < d.size(); ++i)
    out.append("delta_" + d.names[i], d.values[i]);
  return out;
}

FeatureVector assemble(const FeatureVector& geometry, const FeatureVector& mid,
                       const ClinicalFeatures& clinical) {
  FeatureVector row;
  row.append(geometry);
  row.append(mid);
  row.append(encode_clinical(clinical));
  return row;
}

}  // namespace

FeatureVector delta(const FeatureVector& a, const FeatureVector& b) {
  if (a.names != b.names)
    throw std::invalid_argument("delta: feature schemas differ");
  FeatureVector out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double av = a.values[i];
    const double bv = b.values[i];
    out.append(a.names[i], std::abs(av) < 1e-12 ? 0.0 : (av - bv) / av);
  }
  return out;
}

FeatureVector encode_clinical(const ClinicalFeatures& c) {
  auto check_binary = [](double v, const char* name) {
    if (!std::isnan(v) && v != 0.0 && v != 1.0)
      throw std::invalid_argument(std::string("clinical ") + name +
                                  " must be 0, 1, or missing");
  };
  check_binary(c.er, "er");
  check_binary(c.her2, "her2");
  check_binary(c.spag5, "spag5");
  if (!std::isnan(c.tnm_stage) && (c.tnm_stage < 1.0 || c.tnm_stage > 4.0))
    throw std::invalid_argument("clinical tnm_stage must be in 1..4 or missing");

  FeatureVector f;
  f.append("er", c.er);
  f.append("her2", c.her2);
  f.append("spag5", c.spag5);
  f.append("tnm_stage", c.tnm_stage);
  return f;
}

FeatureVector features_baseline(const PatientRecord& p, int ng) {
  return assemble(shape_or_zero(p.mask_a), intensity_over(p.volume_a, p.mask_a, ng),
                  p.clinical);
}

FeatureVector features_without_registration(const PatientRecord& p, int ng) {
  FeatureVector a = intensity_over(p.volume_a, p.mask_a, ng);
  FeatureVector b = intensity_over(p.volume_b, p.mask_b, ng);
  return assemble(shape_or_zero(p.mask_b), rename_delta(delta(a, b)), p.clinical);
}

Mask3D warp_site_mask(const PatientRecord& p, const DisplacementField& field) {
  Mask3D working = p.mask_a.dims == field.dims
                       ? p.mask_a
                       : resize_nearest(p.mask_a, field.dims);
  Mask3D warped = warp_nearest(working, field);
  if (warped.dims == p.volume_b.dims) return warped;
  return resize_nearest(warped, p.volume_b.dims);
}

AssembledRow features_with_registration(const PatientRecord& p,
                                        const DisplacementField& field,
                                        int ng) {
  Mask3D site = warp_site_mask(p, field);
  if (site.empty_mask()) {
    // registration failure: keep the patient, mark the row
    AssembledRow row;
    row.features = features_without_registration(p, ng);
    row.reg_fallback = true;
    return row;
  }
  FeatureVector a = intensity_over(p.volume_a, p.mask_a, ng);
  FeatureVector b = intensity_over(p.volume_b, site, ng);
  AssembledRow row;
  row.features =
      assemble(shape_or_zero(p.mask_b), rename_delta(delta(a, b)), p.clinical);
  return row;
}

std::vector<std::string> longitudinal_row_schema() {
  std::vector<std::string> names = {
      "shape_least_axis_length", "shape_flatness", "shape_max2d_diameter_row",
      "shape_max2d_diameter_column"};
  for (const auto& n : intensity_feature_schema()) names.push_back("delta_" + n);
  names.insert(names.end(), {"er", "her2", "spag5", "tnm_stage"});
  return names;
}

std::vector<std::string> baseline_row_schema() {
  std::vector<std::string> names = feature_schema();
  names.insert(names.end(), {"er", "her2", "spag5", "tnm_stage"});
  return names;
}

// --- manifest ---------------------------------------------------------------

namespace {

double clinical_from_json(const json& j, const std::string& key) {
  if (!j.contains(key) || j[key].is_null()) return missing_value();
  return j[key].get<double>();
}

json clinical_to_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest is not valid JSON (" + path + "): " + e.what());
  }
  if (!j.is_array()) throw std::runtime_error("manifest must be a JSON array: " + path);

  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  for (const auto& e : j) {
    ManifestEntry m;
    try {
      m.id = e.at("id").get<std::string>();
      m.volume_a = e.at("volume_A").get<std::string>();
      m.mask_a = e.at("mask_A").get<std::string>();
      m.volume_b = e.at("volume_B").get<std::string>();
      m.mask_b = e.at("mask_B").get<std::string>();
      m.label = e.at("label").get<int>();
    } catch (const json::exception& ex) {
      throw std::runtime_error("manifest entry missing a required field (" +
                               path + "): " + ex.what());
    }
    if (!seen.insert(m.id).second)
      throw std::runtime_error("duplicate patient id in manifest: " + m.id);
    if (e.contains("breast_A")) m.breast_a = e["breast_A"].get<std::string>();
    if (e.contains("breast_B")) m.breast_b = e["breast_B"].get<std::string>();
    m.clinical.er = clinical_from_json(e, "er");
    m.clinical.her2 = clinical_from_json(e, "her2");
    m.clinical.spag5 = clinical_from_json(e, "spag5");
    m.clinical.tnm_stage = clinical_from_json(e, "tnm_stage");
    out.push_back(std::move(m));
  }
  return out;
}

void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::string& path) {
  json j = json::array();
  for (const auto& m : entries) {
    json e;
    e["id"] = m.id;
    e["volume_A"] = m.volume_a;
    e["mask_A"] = m.mask_a;
    e["volume_B"] = m.volume_b;
    e["mask_B"] = m.mask_b;
    if (!m.breast_a.empty()) e["breast_A"] = m.breast_a;
    if (!m.breast_b.empty()) e["breast_B"] = m.breast_b;
    e["er"] = clinical_to_json(m.clinical.er);
    e["her2"] = clinical_to_json(m.clinical.her2);
    e["spag5"] = clinical_to_json(m.clinical.spag5);
    e["tnm_stage"] = clinical_to_json(m.clinical.tnm_stage);
    e["label"] = m.label;
    j.push_back(e);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

PatientRecord load_patient(const ManifestEntry& e, const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  PatientRecord p;
  p.id = e.id;
  p.volume_a = load_volume(resolve(e.volume_a));
  p.mask_a = load_mask(resolve(e.mask_a));
  p.volume_b = load_volume(resolve(e.volume_b));
  p.mask_b = load_mask(resolve(e.mask_b));
  if (!e.breast_a.empty()) p.breast_a = load_mask(resolve(e.breast_a));
  if (!e.breast_b.empty()) p.breast_b = load_mask(resolve(e.breast_b));
  p.clinical = e.clinical;
  p.label = e.label;
  if (!(p.volume_a.dims == p.mask_a.dims) || !(p.volume_b.dims == p.mask_b.dims))
    throw std::runtime_error("volume/mask dims mismatch for patient " + p.id);
  return p;
}

// --- embeddings ---------------------------------------------------------------

FeatureTable import_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings CSV: " + path);

  auto split = [](const std::string& line) {
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
  };
  auto parse_cell = [&path](const std::string& s, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": non-numeric embedding cell '" + s + "'");
    return v;
  };

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty embeddings CSV: " + path);
  auto first = split(line);
  if (first.size() < 2)
    throw std::runtime_error("embeddings CSV needs an id column plus data: " + path);

  FeatureTable t;
  std::size_t width = first.size() - 1;
  std::size_t line_no = 1;
  // header sniffing: a non-numeric second cell means the first line is a header
  bool has_header = false;
  {
    double v;
    auto res = std::from_chars(first[1].data(), first[1].data() + first[1].size(), v);
    has_header = res.ec != std::errc() || res.ptr != first[1].data() + first[1].size();
  }
  if (has_header) {
    for (std::size_t c = 1; c < first.size(); ++c) t.feature_names.push_back(first[c]);
  } else {
    for (std::size_t c = 0; c < width; ++c)
      t.feature_names.push_back("emb_" + std::to_string(c));
  }

  std::set<std::string> seen;
  auto consume = [&](const std::vector<std::string>& cells) {
    if (cells.size() != width + 1)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": ragged row (expected " + std::to_string(width + 1) +
                               " cells, found " + std::to_string(cells.size()) + ")");
    if (!seen.insert(cells[0]).second)
      throw std::runtime_error("duplicate id in embeddings CSV: " + cells[0]);
    t.ids.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c)
      t.data.push_back(parse_cell(cells[c], line_no));
    t.labels.push_back(0);
    t.flags.push_back(0);
  };

  if (!has_header) consume(first);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    consume(split(line));
  }
  return t;
}

}  // namespace deltarad
