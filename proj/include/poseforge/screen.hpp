#pragma once

// Batch virtual screening and docking evaluation.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poseforge/geometry.hpp"
#include "poseforge/model.hpp"

namespace poseforge {

enum class PostProcess { kNone, kEm, kPcf };
PostProcess parse_postprocess(const std::string& name);

struct ScreenOptions {
  PostProcess postprocess = PostProcess::kNone;
  std::size_t batch_size = 8;   // ligands handed to the worker pool at once
  int threads = 0;              // 0 = OpenMP default
  std::string poses_dir;        // empty = do not write poses
  std::size_t top_k = 0;        // poses written for the best k only; 0 = all
  FitParams fit;                // used when end_to_end_decode is off
  EmParams em;
};

struct ScreenResult {
  std::string ligand_id;
  double confidence = 0.0;
  std::string pose_path;
  std::optional<double> rmsd;
  PlausibilityReport plausibility;
  double wall_time = 0.0;
  std::size_t decode_iterations = 0;  // structure layers or distance-fit steps
  std::vector<Vec3> pose;
  std::string error;  // non-empty for a failed ligand
  bool ok() const { return error.empty(); }
};

// Dock one ligand (its coords are the input conformer).
ScreenResult dock_ligand(const DockModel& model, const MoleculeGraph& ligand,
                         const MoleculeGraph& pocket, const ScreenOptions& options,
                         const std::vector<Vec3>* ground_truth = nullptr);

// Ranks every record; unparsable records become error rows at the end.
// `ground_truth` maps ligand ids to reference coordinates.
std::vector<ScreenResult> screen_library(
    const DockModel& model, const MoleculeGraph& pocket, const std::vector<SdfRecord>& library,
    const ScreenOptions& options,
    const std::map<std::string, std::vector<Vec3>>* ground_truth = nullptr);

// rank,ligand_id,confidence,rmsd,bond_length_mae,pass_distance,pass_overlap,error
void write_screen_csv(std::ostream& os, const std::vector<ScreenResult>& results);

struct CsvRow {
  std::string ligand_id;
  std::optional<double> confidence;
  std::string error;
};
std::vector<CsvRow> read_screen_csv(std::istream& is);

// Percentage of values strictly below `threshold`.
double success_rate(std::span<const double> rmsds, double threshold = 2.0);
double success_rate(const std::vector<std::vector<Vec3>>& poses,
                    const std::vector<std::vector<Vec3>>& gts, double threshold = 2.0);

// Mann-Whitney AUC with averaged ties; ContractError when a class is missing.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

std::vector<double> average_ranks(std::span<const double> v);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct Regression {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
  bool degenerate = false;  // constant confidence
};

// Least-squares fit of RMSD against confidence.
Regression confidence_rmsd_regression(std::span<const double> confidence,
                                      std::span<const double> rmsd);

struct EvalEntry {
  std::string id;
  double rmsd = 0.0;
  double confidence = 0.0;
};

// success_rate, auc (null with one class), regression and per-entry rows.
std::string eval_report_json(const std::vector<EvalEntry>& entries, double threshold = 2.0);

// Cumulative fraction of RMSD below x, one polyline per series.
std::string cumulative_rmsd_svg(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                                double x_max = 10.0);

}  // namespace poseforge
