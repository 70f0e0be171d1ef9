#pragma once

// Synthetic complexes, Adam, and the two-phase training loop.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "poseforge/model.hpp"

namespace poseforge {

// ---- synthetic data ----

struct SynthParams {
  std::size_t n_min = 8, n_max = 16;   // ligand heavy atoms
  std::size_t m_min = 20, m_max = 32;  // pocket atoms
  double ring_probability = 0.6;
  double max_rotation_deg = 60.0;      // input conformer vs planted pose
  double frame_offset = 10.0;          // random translation of the whole complex
};

struct SyntheticComplex {
  MoleculeGraph ligand;  // coords = input conformer (rotated planted pose)
  MoleculeGraph pocket;
  std::vector<Vec3> gt_coords;
  std::vector<double> gt_intra;  // N*N
  std::vector<double> gt_inter;  // N*M
};

// Deterministic per seed. Throws GenerationError when the constraints cannot
// be met after retries, ContractError for sizes outside 3..24 / 6..48.
SyntheticComplex synth_complex(std::uint64_t seed, const SynthParams& params = {});
std::vector<SyntheticComplex> synth_dataset(std::size_t count, std::uint64_t seed,
                                            const SynthParams& params = {});

// Pairwise distances of `a` (rows) against `b` (cols), row-major.
std::vector<double> distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b);

// 9:1 split (at least one validation complex when count >= 2).
struct Split {
  std::vector<SyntheticComplex> train;
  std::vector<SyntheticComplex> validation;
};
Split split_dataset(std::vector<SyntheticComplex> data);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// In-place bias-corrected Adam update of one buffer at step t (1-based).
void adam_update(std::span<double> x, std::span<const double> g, std::span<double> m,
                 std::span<double> v, std::size_t t, const AdamConfig& config);

class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig config);
  // One step over every parameter that has a gradient in `grads`, scaled by
  // `grad_scale`. Parameters without a gradient keep their moments.
  void step(ParameterStore& store, const ag::Gradients& grads, double grad_scale = 1.0);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---- losses on one complex ----

struct LossTerms {
  ag::Tensor intradist, interdist, coord, conf, total;
  LossBreakdown values;
  std::size_t conf_pairs = 0;
};

// phase 1: L_dist; phase 2: L_dist + L_coord + 0.01 L_conf.
LossTerms compute_losses(const ForwardResult& r, const SyntheticComplex& c, int phase);

// ---- training ----

struct TrainConfig {
  AdamConfig adam;
  std::size_t patience = 20;     // evaluations without validation improvement
  std::size_t batch_size = 1;    // complexes per optimizer step
  std::size_t phase1_steps = 0;
  std::size_t phase2_steps = 0;
  std::size_t eval_every = 0;    // steps between validation checks; 0 = one epoch
  double clip_norm = 0.0;        // global gradient norm clip, 0 = off
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepRecord {
  std::size_t step = 0;
  int phase = 1;
  LossBreakdown loss;  // mean over the batch
};

struct TrainReport {
  std::vector<StepRecord> history;
  std::size_t steps_run = 0;
  bool early_stopped = false;
  double best_validation = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Mean loss over `data` without recording gradients.
LossBreakdown mean_loss(const DockModel& model, std::span<const SyntheticComplex> data, int phase);

// Loss and leaf gradients of one complex.
struct ComplexGradient {
  LossBreakdown loss;
  ag::Gradients grads;
};
ComplexGradient complex_gradient(const DockModel& model, const SyntheticComplex& c, int phase);

TrainReport train_phase1(DockModel& model, std::span<const SyntheticComplex> train,
                         const TrainConfig& config, const StepCallback& on_step = {});

// Early stopping on validation L_total when `validation` is non-empty; the
// best validation weights are restored at the end.
TrainReport train_phase2(DockModel& model, std::span<const SyntheticComplex> train,
                         std::span<const SyntheticComplex> validation, const TrainConfig& config,
                         const StepCallback& on_step = {});

// Writes every record of `on_step` as a CSV row.
StepCallback csv_logger(std::ostream& os);

// Stops after `patience` consecutive non-improving values.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  // Returns true when training should stop.
  bool update(double value);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_ = 0;
  double best_;
  bool improved_ = false;
};

}  // namespace poseforge
