#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poseforge/errors.hpp"
#include "poseforge/screen.hpp"
#include "poseforge/train.hpp"
#include "test_util.hpp"

using namespace poseforge;
using namespace poseforge::testing;

namespace {

std::vector<SdfRecord> library_of(std::size_t n, std::uint64_t seed) {
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    MoleculeGraph g = synth_complex(seed + i).ligand;
    g.name = "lig" + std::to_string(i);
    text += write_sdf(g) + "$$$$\n";
  }
  return parse_sdf_library(text);
}

ModelConfig toy_model() { return ModelConfig::toy(); }

}  // namespace

TEST(Metrics, AucHandExample) {
  std::vector<int> y{1, 1, 0, 0};
  std::vector<double> s{0.9, 0.4, 0.6, 0.1};
  EXPECT_DOUBLE_EQ(roc_auc(y, s), 0.75);
}

TEST(Metrics, AucPerfectInvertedAndTies) {
  std::vector<int> y{0, 1, 0, 1};
  EXPECT_EQ(roc_auc(y, std::vector<double>{1, 2, 1.5, 3}), 1.0);
  EXPECT_EQ(roc_auc(y, std::vector<double>{3, 1, 2, 0}), 0.0);
  EXPECT_EQ(roc_auc(y, std::vector<double>{5, 5, 5, 5}), 0.5);
  // one tie between a positive and a negative counts a half
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<int>{1, 0}, std::vector<double>{2, 2}), 0.5);
}

TEST(Metrics, AucNeedsBothClasses) {
  EXPECT_THROW((void)roc_auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}), ContractError);
  EXPECT_THROW((void)roc_auc(std::vector<int>{0}, std::vector<double>{0.1}), ContractError);
}

TEST(Metrics, SuccessRateIsStrict) {
  EXPECT_EQ(success_rate(std::vector<double>{1.9, 2.1}), 50.0);
  EXPECT_EQ(success_rate(std::vector<double>{2.0}), 0.0);
  EXPECT_THROW((void)success_rate(std::vector<double>{}), ContractError);
  std::vector<std::vector<Vec3>> poses{{{0, 0, 0}}, {{3, 0, 0}}}, gts{{{1, 0, 0}}, {{0, 0, 0}}};
  EXPECT_EQ(success_rate(poses, gts), 50.0);
}

TEST(Metrics, RanksAverageTies) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Metrics, CorrelationsOnCollinearData) {
  std::vector<double> x{1, 2, 3, 4, 5}, up{3, 5, 7, 9, 11}, down{10, 8, 6, 4, 2};
  EXPECT_NEAR(pearson(x, up), 1.0, 1e-12);
  EXPECT_NEAR(pearson(x, down), -1.0, 1e-12);
  EXPECT_NEAR(spearman(x, std::vector<double>{1, 4, 9, 16, 25}), 1.0, 1e-12);
  Regression r = confidence_rmsd_regression(x, down);
  EXPECT_NEAR(r.slope, -2.0, 1e-12);
  EXPECT_NEAR(r.intercept, 12.0, 1e-12);
  EXPECT_NEAR(r.spearman, -1.0, 1e-12);
  EXPECT_FALSE(r.degenerate);
}

TEST(Metrics, ConstantConfidenceIsDegenerate) {
  Regression r = confidence_rmsd_regression(std::vector<double>{4, 4, 4}, std::vector<double>{1, 2, 3});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.slope, 0.0);
}

TEST(Screening, LibraryOfOne) {
  DockModel m(toy_model());
  SyntheticComplex c = synth_complex(3);
  auto lib = library_of(1, 40);
  auto res = screen_library(m, c.pocket, lib, {});
  ASSERT_EQ(res.size(), 1u);
  EXPECT_TRUE(res[0].ok());
  EXPECT_EQ(res[0].ligand_id, "lig0");
  EXPECT_EQ(res[0].pose.size(), lib[0].graph->size());
}

TEST(Screening, BadRecordIsolated) {
  DockModel m(toy_model());
  SyntheticComplex c = synth_complex(3);
  auto lib = parse_sdf_library(read_file(fixture_path("library_one_bad.sdf")));
  ASSERT_EQ(lib.size(), 5u);
  auto res = screen_library(m, c.pocket, lib, {});
  ASSERT_EQ(res.size(), 5u);
  std::size_t good = 0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (res[i].ok()) {
      ++good;
      EXPECT_LT(i, 4u);
    } else {
      EXPECT_EQ(i, 4u);
      EXPECT_NE(res[i].error.find("line"), std::string::npos);
    }
  }
  EXPECT_EQ(good, 4u);
}

TEST(Screening, SortedByConfidenceAndCsvRoundTrip) {
  DockModel m(toy_model());
  SyntheticComplex c = synth_complex(3);
  auto lib = library_of(6, 50);
  auto res = screen_library(m, c.pocket, lib, {});
  for (std::size_t i = 1; i < res.size(); ++i) EXPECT_GE(res[i - 1].confidence, res[i].confidence);
  std::stringstream ss;
  write_screen_csv(ss, res);
  auto rows = read_screen_csv(ss);
  ASSERT_EQ(rows.size(), res.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].ligand_id, res[i].ligand_id);
    ASSERT_TRUE(rows[i].confidence.has_value());
    EXPECT_NEAR(*rows[i].confidence, res[i].confidence, 1e-6);
  }
}

TEST(Screening, CsvQuotesAwkwardIds) {
  ScreenResult a;
  a.ligand_id = "x,\"y\"";
  a.confidence = 1.5;
  ScreenResult b;
  b.ligand_id = "bad";
  b.error = "line 4: broken, badly";
  std::stringstream ss;
  write_screen_csv(ss, {a, b});
  auto rows = read_screen_csv(ss);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].ligand_id, a.ligand_id);
  EXPECT_FALSE(rows[1].confidence.has_value());
  EXPECT_EQ(rows[1].error, b.error);
}

TEST(Screening, BatchSizeDoesNotChangeResults) {
  DockModel m(toy_model());
  SyntheticComplex c = synth_complex(3);
  auto lib = library_of(9, 60);
  ScreenOptions one, eight;
  one.batch_size = 1;
  eight.batch_size = 8;
  auto a = screen_library(m, c.pocket, lib, one);
  auto b = screen_library(m, c.pocket, lib, eight);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ligand_id, b[i].ligand_id);
    EXPECT_EQ(a[i].confidence, b[i].confidence);
    EXPECT_EQ(a[i].pose, b[i].pose);
  }
}

TEST(Screening, DecodeIterationsEqualStructureLayers) {
  ModelConfig cfg = toy_model();
  DockModel m(cfg);
  SyntheticComplex c = synth_complex(4);
  ScreenResult r = dock_ligand(m, c.ligand, c.pocket, {}, &c.gt_coords);
  EXPECT_EQ(r.decode_iterations, cfg.structure_layers);
  ASSERT_TRUE(r.rmsd.has_value());
  EXPECT_NEAR(*r.rmsd, rmsd(r.pose, c.gt_coords), 1e-12);

  cfg.end_to_end_decode = false;
  DockModel fit(cfg);
  ScreenOptions o;
  o.fit.iterations = 25;
  EXPECT_EQ(dock_ligand(fit, c.ligand, c.pocket, o).decode_iterations, 25u);
}

TEST(Screening, PostprocessingRestoresBondGeometry) {
  DockModel m(toy_model());
  SyntheticComplex c = synth_complex(5);
  ScreenOptions o;
  o.postprocess = PostProcess::kPcf;
  ScreenResult r = dock_ligand(m, c.ligand, c.pocket, o);
  EXPECT_LT(r.plausibility.bond_length_mae, 1e-9);
  EXPECT_EQ(parse_postprocess("em"), PostProcess::kEm);
  EXPECT_EQ(parse_postprocess("none"), PostProcess::kNone);
  EXPECT_THROW((void)parse_postprocess("md"), ContractError);
}

TEST(Screening, PosesWrittenForTopK) {
  DockModel m(toy_model());
  SyntheticComplex c = synth_complex(3);
  auto dir = std::filesystem::temp_directory_path() / "poseforge_test_poses";
  std::filesystem::remove_all(dir);
  ScreenOptions o;
  o.poses_dir = dir.string();
  o.top_k = 2;
  auto res = screen_library(m, c.pocket, library_of(4, 70), o);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".sdf" ? 1 : 0;
  EXPECT_EQ(files, 2u);
  EXPECT_FALSE(res[0].pose_path.empty());
  EXPECT_TRUE(res[3].pose_path.empty());
  std::filesystem::remove_all(dir);
}

TEST(Screening, EmptyPocketRejected) {
  DockModel m(toy_model());
  MoleculeGraph empty;
  empty.is_pocket = true;
  EXPECT_THROW((void)screen_library(m, empty, library_of(1, 80), {}), ContractError);
}

TEST(Reports, EvalJson) {
  std::vector<EvalEntry> e{{"a", 1.0, 80}, {"b", 3.0, 20}, {"c", 1.5, 60}, {"d", 4.0, 30}};
  auto j = nlohmann::json::parse(eval_report_json(e));
  EXPECT_EQ(j["count"], 4);
  EXPECT_EQ(j["success_rate"], 50.0);
  EXPECT_EQ(j["auc"], 1.0);
  EXPECT_LT(j["regression"]["spearman"].get<double>(), 0.0);
  EXPECT_EQ(j["entries"].size(), 4u);
  auto one = nlohmann::json::parse(eval_report_json({{"a", 1.0, 50}}));
  EXPECT_TRUE(one["auc"].is_null());
}

TEST(Reports, SvgHasOnePolylinePerSeries) {
  std::string svg = cumulative_rmsd_svg({{"full", {0.5, 1.0, 3.0}}, {"no-gpe", {1.0, 4.0}}});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t count = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++count;
    ++pos;
  }
  EXPECT_EQ(count, 2u);
  EXPECT_NE(svg.find("no-gpe"), std::string::npos);
}
