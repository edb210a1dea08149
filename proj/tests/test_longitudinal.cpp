#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "deltarad/longitudinal.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace deltarad;
namespace fs = std::filesystem;

namespace {

FeatureVector fv(std::initializer_list<std::pair<const char*, double>> items) {
  FeatureVector f;
  for (auto& [n, v] : items) f.append(n, v);
  return f;
}

// small synthetic patient: textured tumour at A, shrunken copy at B
PatientRecord make_patient(bool empty_b, std::uint64_t seed = 5) {
  PatientRecord p;
  p.id = "t1";
  const Dims d{24, 24, 24};
  p.volume_a = testutil::random_volume(d, seed, 40.0, 160.0);
  p.mask_a = testutil::ball_mask(d, 12, 12, 12, 6);
  p.volume_b = testutil::random_volume(d, seed + 1, 40.0, 160.0);
  p.mask_b = empty_b ? Mask3D(d, Spacing{})
                     : testutil::ball_mask(d, 12, 12, 12, 3.5);
  p.clinical = {1.0, 0.0, 1.0, 2.0};
  p.label = 1;
  return p;
}

}  // namespace

TEST_CASE("delta") {
  SUBCASE("simple ratios") {
    auto d = delta(fv({{"x", 2.0}}), fv({{"x", 1.0}}));
    CHECK(d.values[0] == doctest::Approx(0.5));
  }

  SUBCASE("equal vectors give zero") {
    auto a = fv({{"x", 3.0}, {"y", -7.0}});
    auto d = delta(a, a);
    for (double v : d.values) CHECK(v == 0.0);
  }

  SUBCASE("zero baseline is guarded to 0") {
    auto d = delta(fv({{"x", 0.0}}), fv({{"x", 5.0}}));
    CHECK(d.values[0] == 0.0);
  }

  SUBCASE("never emits non-finite values") {
    auto d = delta(fv({{"x", 1e-300}}), fv({{"x", 5.0}}));
    for (double v : d.values) CHECK(std::isfinite(v));
  }

  SUBCASE("schema mismatch throws") {
    CHECK_THROWS_AS(delta(fv({{"x", 1.0}}), fv({{"y", 1.0}})),
                    std::invalid_argument);
  }
}

TEST_CASE("encode_clinical") {
  SUBCASE("values pass through in order") {
    auto f = encode_clinical({1.0, 0.0, 1.0, 2.0});
    CHECK(f.names == std::vector<std::string>{"er", "her2", "spag5", "tnm_stage"});
    CHECK(f.values == std::vector<double>{1.0, 0.0, 1.0, 2.0});
  }

  SUBCASE("missing marker propagates") {
    ClinicalFeatures c{1.0, 0.0, missing_value(), 2.0};
    auto f = encode_clinical(c);
    CHECK(std::isnan(f.values[2]));
    CHECK(f.values[0] == 1.0);
  }

  SUBCASE("out-of-range stage throws") {
    CHECK_THROWS_AS(encode_clinical({0.0, 0.0, 0.0, 7.0}), std::invalid_argument);
    CHECK_THROWS_AS(encode_clinical({0.5, 0.0, 0.0, 2.0}), std::invalid_argument);
  }
}

TEST_CASE("features_without_registration") {
  SUBCASE("identical timepoints give all-zero deltas") {
    PatientRecord p = make_patient(false);
    p.volume_b = p.volume_a;
    p.mask_b = p.mask_a;
    auto row = features_without_registration(p);
    for (std::size_t i = 0; i < row.size(); ++i)
      if (row.names[i].rfind("delta_", 0) == 0) CHECK(row.values[i] == 0.0);
  }

  SUBCASE("empty endpoint mask: deltas are exactly 1 where baseline is nonzero") {
    PatientRecord p = make_patient(true);
    auto row = features_without_registration(p);
    auto base = features_baseline(p);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row.names[i].rfind("delta_", 0) != 0) continue;
      const std::string raw = row.names[i].substr(6);
      if (base.get(raw) != 0.0) CHECK(row.values[i] == 1.0);
    }
  }

  SUBCASE("deltas match a hand-composed oracle on a shrunken phantom") {
    PatientRecord p = make_patient(false, 9);
    p.volume_b = p.volume_a;  // same image, smaller endpoint region
    auto row = features_without_registration(p, 16);

    auto a = oracles::naive_intensity_features(p.volume_a, p.mask_a, 16);
    auto b = oracles::naive_intensity_features(p.volume_b, p.mask_b, 16);
    for (const auto& [name, av] : a) {
      const double bv = b.at(name);
      const double want = std::abs(av) < 1e-12 ? 0.0 : (av - bv) / av;
      const double got = row.get("delta_" + name);
      CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
  }

  SUBCASE("schema matches the declared row schema") {
    auto row = features_without_registration(make_patient(false));
    CHECK(row.names == longitudinal_row_schema());
  }
}

TEST_CASE("features_with_registration") {
  SUBCASE("identity field with equal masks reproduces the without path") {
    PatientRecord p = make_patient(false);
    p.mask_b = p.mask_a;
    DisplacementField zero(p.volume_a.dims);
    auto with = features_with_registration(p, zero);
    auto without = features_without_registration(p);
    CHECK_FALSE(with.reg_fallback);
    REQUIRE(with.features.names == without.names);
    for (std::size_t i = 0; i < without.size(); ++i)
      CHECK(with.features.values[i] == doctest::Approx(without.values[i]));
  }

  SUBCASE("empty endpoint mask but nonempty warped site: deltas differ from 1") {
    PatientRecord p = make_patient(true);
    DisplacementField zero(p.volume_a.dims);
    auto with = features_with_registration(p, zero);
    CHECK_FALSE(with.reg_fallback);
    int differ = 0, total = 0;
    for (std::size_t i = 0; i < with.features.size(); ++i) {
      if (with.features.names[i].rfind("delta_", 0) != 0) continue;
      ++total;
      if (with.features.values[i] != 1.0) ++differ;
    }
    CHECK(differ * 2 >= total);
  }

  SUBCASE("geometry columns are identical between the two paths") {
    PatientRecord p = make_patient(false, 21);
    DisplacementField zero(p.volume_a.dims);
    auto with = features_with_registration(p, zero);
    auto without = features_without_registration(p);
    for (std::size_t i = 0; i < without.size(); ++i)
      if (without.names[i].rfind("shape_", 0) == 0)
        CHECK(with.features.values[i] == without.values[i]);
  }

  SUBCASE("a field that empties the warped mask falls back and flags the row") {
    PatientRecord p = make_patient(false);
    DisplacementField off(p.volume_a.dims);
    // push every sample far outside the tumour
    std::fill(off.ux.begin(), off.ux.end(), 500.0);
    auto with = features_with_registration(p, off);
    CHECK(with.reg_fallback);
    auto without = features_without_registration(p);
    for (std::size_t i = 0; i < without.size(); ++i)
      CHECK(with.features.values[i] == doctest::Approx(without.values[i]));
  }
}

TEST_CASE("manifest io") {
  auto dir = fs::temp_directory_path() / "deltarad_manifest_tests";
  fs::create_directories(dir);

  std::vector<ManifestEntry> entries(2);
  entries[0].id = "p1";
  entries[0].volume_a = "p1_va.mhd";
  entries[0].mask_a = "p1_ma.mhd";
  entries[0].volume_b = "p1_vb.mhd";
  entries[0].mask_b = "p1_mb.mhd";
  entries[0].clinical = {1.0, 0.0, missing_value(), 3.0};
  entries[0].label = 1;
  entries[1] = entries[0];
  entries[1].id = "p2";
  entries[1].label = 0;

  const auto path = (dir / "manifest.json").string();
  save_manifest(entries, path);
  auto back = load_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "p1");
  CHECK(std::isnan(back[0].clinical.spag5));
  CHECK(back[0].clinical.tnm_stage == 3.0);
  CHECK(back[1].label == 0);

  SUBCASE("duplicate ids are rejected") {
    entries[1].id = "p1";
    save_manifest(entries, path);
    CHECK_THROWS_AS(load_manifest(path), std::runtime_error);
  }
}

TEST_CASE("import_embeddings") {
  auto dir = fs::temp_directory_path() / "deltarad_emb_tests";
  fs::create_directories(dir);

  SUBCASE("3 patients x 384 columns") {
    auto p = (dir / "e384.csv").string();
    std::ofstream out(p);
    for (int r = 0; r < 3; ++r) {
      out << "p" << r;
      for (int c = 0; c < 384; ++c) out << "," << (r + c * 0.5);
      out << "\n";
    }
    out.close();
    auto t = import_embeddings(p);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 384);
    CHECK(t.at(2, 1) == 2.5);
  }

  SUBCASE("2048-wide vectors are accepted") {
    auto p = (dir / "e2048.csv").string();
    std::ofstream out(p);
    for (int r = 0; r < 2; ++r) {
      out << "p" << r;
      for (int c = 0; c < 2048; ++c) out << "," << c;
      out << "\n";
    }
    out.close();
    CHECK(import_embeddings(p).cols() == 2048);
  }

  SUBCASE("duplicate id is an error") {
    auto p = (dir / "dup.csv").string();
    std::ofstream(p) << "p1,1,2\np1,3,4\n";
    CHECK_THROWS_AS(import_embeddings(p), std::runtime_error);
  }

  SUBCASE("ragged rows are an error") {
    auto p = (dir / "rag.csv").string();
    std::ofstream(p) << "p1,1,2\np2,3\n";
    CHECK_THROWS_AS(import_embeddings(p), std::runtime_error);
  }

  SUBCASE("non-numeric cell is an error") {
    auto p = (dir / "nn.csv").string();
    std::ofstream(p) << "p1,1,2\np2,3,x\n";
    CHECK_THROWS_AS(import_embeddings(p), std::runtime_error);
  }
}
