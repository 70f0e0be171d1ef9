#pragma once

// Coordinate decoder: stacked complex blocks whose attention maps are turned
// into per-pair scalar scores that move ligand atoms along unit difference
// vectors. Pocket atoms are anchors and never move.

#include <span>
#include <string>
#include <vector>

#include "poseforge/binding.hpp"
#include "poseforge/molio.hpp"

namespace poseforge {

struct Pose {
  std::vector<std::vector<Vec3>> coords_per_layer;  // [0] = initial placement
  const std::vector<Vec3>& final() const { return coords_per_layer.back(); }
};

Vec3 centroid(std::span<const Vec3> points);

// Ligand input conformer translated so its centroid sits on the pocket
// heavy-atom centroid. Orientation unchanged.
Pose init_pose(const MoleculeGraph& ligand, const MoleculeGraph& pocket);

struct ScoreHead {
  ag::LinearLayer from_maps;  // H -> 1
  ag::LinearLayer carry;      // 1 -> 1, applied to the previous scores
  ag::LinearLayer out;        // 1 -> 1
};

struct StructureLayerWeights {
  BlockWeights block;
  ScoreHead intra;
  ScoreHead inter;
};

std::vector<StructureLayerWeights> make_structure_weights(ParameterStore& store,
                                                          const std::string& prefix,
                                                          const ModelConfig& config);

struct ScoreState {
  ag::Tensor a_intra;  // [N, N]
  ag::Tensor a_inter;  // [N, M]
};

ScoreState zero_scores(std::size_t n, std::size_t m);

// a = out(carry(a_prev) + from_maps(maps)) for maps [rows, cols, H].
ag::Tensor update_scores(const ag::Tensor& previous, const ag::Tensor& maps, const ScoreHead& head);

struct StructureState {
  ComplexState complex;
  ag::Tensor coords;  // [N, 3] ligand
  ScoreState scores;
};

// One decoder layer. `pocket` holds the M fixed anchor coordinates, row-major.
StructureState structure_layer(const StructureState& in, std::span<const double> pocket,
                               const StructureLayerWeights& w, const ModelConfig& config);

struct StructureTrace {
  std::vector<ag::Tensor> coords;  // per layer, [0] = input
  ScoreState final_scores;
};

StructureTrace run_structure(const ComplexState& c, const ag::Tensor& initial_coords,
                             std::span<const double> pocket,
                             const std::vector<StructureLayerWeights>& layers,
                             const ModelConfig& config);

// SDF block of `ligand` with `coords` substituted; bonds copied.
std::string pose_to_sdf(const MoleculeGraph& ligand, std::span<const Vec3> coords);
// {"name":..., "coords":[[x,y,z],...], "confidence":c, "rmsd":r?}
std::string pose_to_json(const std::string& name, std::span<const Vec3> coords, double confidence,
                         const double* rmsd = nullptr);

}  // namespace poseforge
