#pragma once

// The full docking network: two encoders, the binding module, distance heads,
// the structure decoder and the confidence head. All coordinates inside the
// network live in a frame centred on the pocket centroid.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "poseforge/binding.hpp"
#include "poseforge/losses.hpp"
#include "poseforge/structure.hpp"

namespace poseforge {

struct DockWeights {
  EncoderWeights ligand;
  EncoderWeights pocket;
  std::vector<BlockWeights> binding;
  DistanceHeadWeights heads;
  std::vector<StructureLayerWeights> structure;
  ConfidenceHeadWeights confidence;
};

// Parameter name prefixes of the trainable groups.
inline constexpr const char* kGroupPrefixes[] = {"lig.", "poc.", "bind.", "heads.", "struct.",
                                                 "conf."};

struct ForwardResult {
  Vec3 origin{};                     // pocket centroid (input frame)
  std::vector<Vec3> pocket_local;    // pocket coordinates minus origin
  std::vector<Vec3> init_local;      // placed ligand conformer minus origin
  ComplexState complex;              // after the binding module
  DistancePrediction distances;
  ag::Tensor intra_sym;              // symmetrized intra distances
  bool has_structure = false;
  StructureTrace structure;
  ag::Tensor conf_intra;             // [N, N, 5]
  ag::Tensor conf_inter;             // [N, M, 5]
  ConfidenceReport confidence;

  // Final structure-module pose in the input frame.
  std::vector<Vec3> pose() const;
  std::vector<Vec3> layer_pose(std::size_t layer) const;
  std::vector<double> intra_values() const;  // symmetrized, row-major
  std::vector<double> inter_values() const;
};

class DockModel {
 public:
  explicit DockModel(const ModelConfig& config);
  DockModel(const DockModel&) = delete;
  DockModel& operator=(const DockModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const DockWeights& weights() const { return weights_; }

  // `ligand.coords` is the input conformer; `with_structure` = false skips the
  // decoder (phase-1 training, distance-fit baseline).
  ForwardResult forward(const MoleculeGraph& ligand, const MoleculeGraph& pocket,
                        bool with_structure = true) const;

  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  static std::unique_ptr<DockModel> load(std::istream& is);
  static std::unique_ptr<DockModel> load(const std::string& path);

 private:
  ModelConfig config_;
  ParameterStore store_;
  DockWeights weights_;
};

// Coordinates as a row-major [n, 3] buffer.
std::vector<double> flatten(std::span<const Vec3> points);

}  // namespace poseforge
