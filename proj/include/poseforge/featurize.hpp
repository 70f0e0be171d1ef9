#pragma once

// Initial atom and pair representations of one molecule (ligand or pocket).

#include <span>
#include <string>
#include <vector>

#include "poseforge/autograd.hpp"
#include "poseforge/model_config.hpp"
#include "poseforge/molio.hpp"
#include "poseforge/ops.hpp"
#include "poseforge/params.hpp"

namespace poseforge {

inline constexpr std::size_t kTypePairCount = kElementCount * (kElementCount + 1) / 2;

// Index of the unordered element pair (a, b).
int type_pair_index(int a, int b);

// Parameter-free inputs derived from a graph and its coordinates.
struct Featurization {
  std::size_t n = 0;
  std::vector<double> atom_onehot;    // n * kElementCount
  std::vector<double> gpe_sinusoids;  // n * 3 * axis_width
  std::vector<int> spd_raw;           // n * n
  std::vector<int> spd_index;         // n * n, clipped embedding buckets
  std::vector<double> edge_path;      // n * n * kBondTypeCount
  std::vector<double> distances;      // n * n
  std::vector<int> type_pair;         // n * n
};

Featurization featurize(const MoleculeGraph& g, std::span<const Vec3> coords,
                        const ModelConfig& config);

// Per-axis sinusoids: slot i of an axis holds sin(p / 10000^(2i/I)) for even i
// and cos(p / 10000^(2i/I)) for odd i, I = axis_width; axes concatenated x|y|z.
std::vector<double> gpe_sinusoids(std::span<const Vec3> coords, std::size_t axis_width);

struct GaussianBasis {
  ag::GaussianSpec spec;      // mu, sigma
  ag::Tensor u;               // [kTypePairCount]
  ag::Tensor v;               // [kTypePairCount]
  ag::Tensor w1;              // [K, K]
  ag::Tensor w2;              // [K, d_pair]
};

struct FeaturizerWeights {
  std::vector<ag::LinearLayer> gpe_mlp;  // 3*axis_width -> d -> d
  ag::LinearLayer atom_linear;           // kElementCount -> d
  ag::Tensor atom_ln_gamma, atom_ln_beta;
  ag::Tensor spd_table;                  // [spd_max + 2, d_pair / 2]
  ag::Tensor w_edge;                     // [kBondTypeCount, d_pair / 2]
  GaussianBasis basis;
};

FeaturizerWeights make_featurizer_weights(ParameterStore& store, const std::string& prefix,
                                          const ModelConfig& config);

ag::Tensor global_position_embedding(const Featurization& f, const FeaturizerWeights& w);

// Type-pair-modulated Gaussian distance features, [n, n, d_pair].
ag::Tensor gaussian_pair_features(const Featurization& f, const GaussianBasis& basis);

// LayerNorm(Linear(onehot) + gpe); gpe may be undefined (ablation).
ag::Tensor atom_init(const Featurization& f, const ag::Tensor& gpe, const FeaturizerWeights& w,
                     double eps);

ag::Tensor spd_embedding(const Featurization& f, const FeaturizerWeights& w);
ag::Tensor edge_projection(const Featurization& f, const FeaturizerWeights& w);

// Concat(spd, edge) + phi3d. Either 2D part may be undefined when the 2D
// modality is ablated.
ag::Tensor pair_init(const ag::Tensor& spd_emb, const ag::Tensor& edge_proj,
                     const ag::Tensor& phi3d);

}  // namespace poseforge
