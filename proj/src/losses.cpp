#include "poseforge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace poseforge {

using ag::Tensor;

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

DistanceLoss dist_loss(const DistancePrediction& pred, std::span<const double> gt_intra,
                       std::span<const double> gt_inter) {
  const std::size_t n = pred.intra.dim(0);
  const std::size_t m = pred.inter.dim(1);
  if (gt_intra.size() != n * n || gt_inter.size() != n * m) {
    throw ContractError("dist_loss: ground truth sizes " + std::to_string(gt_intra.size()) + "/" +
                        std::to_string(gt_inter.size()) + " do not match prediction " +
                        std::to_string(n) + "x" + std::to_string(n) + ", " + std::to_string(n) +
                        "x" + std::to_string(m));
  }
  Tensor gi = Tensor::constant({n, n}, {gt_intra.begin(), gt_intra.end()});
  Tensor ge = Tensor::constant({n, m}, {gt_inter.begin(), gt_inter.end()});
  DistanceLoss out;
  Tensor di = ag::sub(symmetrize(pred.intra), gi);
  out.intradist = ag::scale(ag::sum(ag::square(di)), 1.0 / (2.0 * static_cast<double>(n * n)));
  out.interdist = ag::mean(ag::smooth_l1(ag::sub(pred.inter, ge)));
  return out;
}

Tensor coord_loss(const Tensor& coords, std::span<const double> gt) {
  const std::size_t n = coords.dim(0);
  if (gt.size() != n * 3) throw ContractError("coord_loss: ground truth is not [N,3]");
  Tensor g = Tensor::constant({n, 3}, {gt.begin(), gt.end()});
  Tensor msd = ag::scale(ag::sum(ag::square(ag::sub(coords, g))), 1.0 / static_cast<double>(n));
  return ag::sqrt(msd);
}

int ddt_value(double delta) {
  int passed = 0;
  for (double t : kDdtThresholds) passed += std::abs(delta) < t ? 1 : 0;
  return 25 * passed;
}

DdtTable ddt_true(std::span<const double> pred, std::span<const double> gt, std::size_t cols,
                  bool skip_diagonal, double cutoff) {
  if (pred.size() != gt.size()) throw ContractError("ddt_true: prediction/truth size mismatch");
  DdtTable t;
  t.bin.resize(pred.size());
  t.mask.resize(pred.size());
  for (std::size_t p = 0; p < pred.size(); ++p) {
    t.bin[p] = ddt_value(pred[p] - gt[p]) / 25;
    const bool diagonal = skip_diagonal && cols > 0 && p / cols == p % cols;
    t.mask[p] = (pred[p] < cutoff && !diagonal) ? 1 : 0;
  }
  return t;
}

ConfidenceHeadWeights make_confidence_weights(ParameterStore& store, const std::string& prefix,
                                              const ModelConfig& config) {
  ConfidenceHeadWeights w;
  w.mlp.push_back(store.add_linear(prefix + ".conf0", config.heads, config.conf_hidden));
  w.mlp.push_back(store.add_linear(prefix + ".conf1", config.conf_hidden, kDdtBins));
  return w;
}

Tensor confidence_logits(const Tensor& pairs, const ConfidenceHeadWeights& w) {
  return ag::mlp(pairs, w.mlp, ag::Activation::kLeakyRelu);
}

ConfLoss conf_loss(std::span<const Tensor> logits, std::span<const DdtTable> tables) {
  if (logits.size() != tables.size()) throw ContractError("conf_loss: logits/table count mismatch");
  ConfLoss out;
  std::vector<Tensor> terms;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const std::size_t pairs = tables[b].bin.size();
    if (logits[b].size() != pairs * kDdtBins) {
      throw DimensionError("conf_loss: logits " + ag::shape_str(logits[b].shape()) + " for " +
                           std::to_string(pairs) + " pairs");
    }
    for (char c : tables[b].mask) out.pairs += c ? 1 : 0;
    Tensor flat = ag::reshape(logits[b], {pairs, kDdtBins});
    terms.push_back(ag::cross_entropy_sum(flat, tables[b].bin, tables[b].mask));
  }
  out.value = terms.empty() ? Tensor::scalar(0.0) : terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) out.value = ag::add(out.value, terms[i]);
  return out;
}

ConfidenceReport confidence_report(const Tensor& inter_logits, std::span<const double> pred_inter,
                                   double cutoff) {
  const std::size_t pairs = pred_inter.size();
  if (inter_logits.size() != pairs * kDdtBins) {
    throw DimensionError("confidence_report: logits " + ag::shape_str(inter_logits.shape()) +
                         " for " + std::to_string(pairs) + " pairs");
  }
  ConfidenceReport r;
  r.p_ddt.resize(pairs * kDdtBins);
  r.mask.resize(pairs);
  const auto z = inter_logits.values();
  for (std::size_t p = 0; p < pairs; ++p) {
    double mx = z[p * kDdtBins];
    for (std::size_t b = 1; b < kDdtBins; ++b) mx = std::max(mx, z[p * kDdtBins + b]);
    double s = 0.0;
    for (std::size_t b = 0; b < kDdtBins; ++b) {
      r.p_ddt[p * kDdtBins + b] = std::exp(z[p * kDdtBins + b] - mx);
      s += r.p_ddt[p * kDdtBins + b];
    }
    for (std::size_t b = 0; b < kDdtBins; ++b) r.p_ddt[p * kDdtBins + b] /= s;
    r.mask[p] = pred_inter[p] < cutoff ? 1 : 0;
  }
  r.empty = std::find(r.mask.begin(), r.mask.end(), 1) == r.mask.end();
  r.scalar = confidence_score(r);
  return r;
}

double confidence_score(const ConfidenceReport& report) {
  const std::size_t pairs = report.mask.size();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    if (!report.mask[p]) continue;
    double e = 0.0;
    for (std::size_t b = 0; b < kDdtBins; ++b) e += report.p_ddt[p * kDdtBins + b] * 25.0 * static_cast<double>(b);
    total += e;
    ++count;
  }
  if (count == 0) return 0.0;
  return total / static_cast<double>(count);
}

double total_loss(const LossBreakdown& parts) {
  return parts.intradist + parts.interdist + parts.coord + kConfWeight * parts.conf;
}

void write_loss_header(std::ostream& os) {
  os << "step,phase,intradist,interdist,coord,conf,total\n";
}

void write_loss_row(std::ostream& os, std::size_t step, int phase, const LossBreakdown& p) {
  os << fmt::format("{},{},{:.8g},{:.8g},{:.8g},{:.8g},{:.8g}\n", step, phase, p.intradist,
                    p.interdist, p.coord, p.conf, p.total);
}

}  // namespace poseforge
