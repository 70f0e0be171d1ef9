#pragma once

// Training objectives and the DDT-based confidence system.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "poseforge/binding.hpp"

namespace poseforge {

inline constexpr std::array<double, 4> kDdtThresholds{0.5, 1.0, 2.0, 4.0};
inline constexpr std::size_t kDdtBins = 5;  // values 0, 25, 50, 75, 100
inline constexpr double kDdtCutoff = 8.0;
inline constexpr double kConfWeight = 0.01;

// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);

struct DistanceLoss {
  ag::Tensor intradist;
  ag::Tensor interdist;
};

// (1 / 2N^2) sum (sym(D_intra) - gt)^2 and (1 / NM) sum smooth_l1(D_inter - gt).
DistanceLoss dist_loss(const DistancePrediction& pred, std::span<const double> gt_intra,
                       std::span<const double> gt_inter);

// sqrt(mean_i |P_i - gt_i|^2) for coords [N, 3].
ag::Tensor coord_loss(const ag::Tensor& coords, std::span<const double> gt);

// 25 * #{t : |delta| < t}.
int ddt_value(double delta);

struct DdtTable {
  std::vector<int> bin;     // 0..4, one per pair
  std::vector<char> mask;   // predicted distance < cutoff
};

// Pairs with pred >= cutoff are masked out. `skip_diagonal` excludes (i, i)
// of a square table.
DdtTable ddt_true(std::span<const double> pred, std::span<const double> gt, std::size_t cols,
                  bool skip_diagonal, double cutoff = kDdtCutoff);

struct ConfidenceHeadWeights {
  std::vector<ag::LinearLayer> mlp;  // H -> hidden -> 5
};

ConfidenceHeadWeights make_confidence_weights(ParameterStore& store, const std::string& prefix,
                                              const ModelConfig& config);

// Per-pair bin logits [rows, cols, 5] from pair representations [rows, cols, H].
ag::Tensor confidence_logits(const ag::Tensor& pairs, const ConfidenceHeadWeights& w);

struct ConfLoss {
  ag::Tensor value;
  std::size_t pairs = 0;  // masked pairs that contributed; 0 means the term is 0
};

// Summed cross-entropy of every masked pair across the given blocks.
ConfLoss conf_loss(std::span<const ag::Tensor> logits, std::span<const DdtTable> tables);

struct ConfidenceReport {
  std::vector<double> p_ddt;  // rows * cols * 5
  std::vector<char> mask;     // rows * cols
  double scalar = 0.0;
  bool empty = true;
};

// Softmax of intermolecular logits, masked by predicted distance < cutoff.
ConfidenceReport confidence_report(const ag::Tensor& inter_logits,
                                   std::span<const double> pred_inter,
                                   double cutoff = kDdtCutoff);

// Masked mean of the expected DDT; 0 for an empty mask (report.empty set).
double confidence_score(const ConfidenceReport& report);

struct LossBreakdown {
  double intradist = 0.0;
  double interdist = 0.0;
  double coord = 0.0;
  double conf = 0.0;
  double total = 0.0;
};

double total_loss(const LossBreakdown& parts);

// CSV rows: step,phase,intradist,interdist,coord,conf,total
void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, std::size_t step, int phase, const LossBreakdown& parts);

}  // namespace poseforge
