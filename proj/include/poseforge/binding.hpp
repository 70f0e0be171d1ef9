#pragma once

// Joint ligand-pocket representation and the distance projection heads.

#include <vector>

#include "poseforge/encoder.hpp"

namespace poseforge {

struct ComplexState {
  ag::Tensor atoms;  // [N+M, d], ligand rows first
  ag::Tensor pairs;  // [N+M, N+M, H]
  std::size_t n_ligand = 0;
  std::size_t n_pocket = 0;
  std::size_t size() const { return n_ligand + n_pocket; }
};

// Concatenates ligand then pocket; cross-block pair entries start at zero.
ComplexState assemble_complex(const EmbeddingState& ligand, const EmbeddingState& pocket);

ComplexState binding_block(const ComplexState& c, const BlockWeights& w, const ModelConfig& config,
                           BlockTrace* trace = nullptr);

ComplexState run_binding(const ComplexState& c, const std::vector<BlockWeights>& blocks,
                         const ModelConfig& config);

struct DistanceHeadWeights {
  ag::Tensor intra_ln_gamma, intra_ln_beta;
  ag::LinearLayer intra1, intra2;  // (2d+H) -> hidden -> 1
  ag::LinearLayer lp1, lp2;        // ligand->pocket view
  ag::Tensor lp_ln_gamma, lp_ln_beta;
  ag::LinearLayer pl1, pl2;        // pocket->ligand view
  ag::Tensor pl_ln_gamma, pl_ln_beta;
};

DistanceHeadWeights make_distance_head_weights(ParameterStore& store, const std::string& prefix,
                                               const ModelConfig& config);

struct DistancePrediction {
  ag::Tensor intra;  // [N, N], raw head output
  ag::Tensor inter;  // [N, M]
};

DistancePrediction distance_heads(const ComplexState& c, const DistanceHeadWeights& w,
                                  double eps);

// (D + D^T) / 2 for a square [N, N] tensor.
ag::Tensor symmetrize(const ag::Tensor& d);

}  // namespace poseforge
