#include "poseforge/structure.hpp"

#include <nlohmann/json.hpp>

namespace poseforge {

using ag::Tensor;

Vec3 centroid(std::span<const Vec3> points) {
  if (points.empty()) throw ContractError("centroid of an empty point set");
  Vec3 c{0.0, 0.0, 0.0};
  for (const auto& p : points)
    for (int k = 0; k < 3; ++k) c[k] += p[k];
  for (int k = 0; k < 3; ++k) c[k] /= static_cast<double>(points.size());
  return c;
}

Pose init_pose(const MoleculeGraph& ligand, const MoleculeGraph& pocket) {
  if (pocket.size() == 0) throw ContractError("init_pose: empty pocket");
  if (ligand.size() == 0) throw ContractError("init_pose: empty ligand");
  const Vec3 target = centroid(pocket.coords);
  const Vec3 current = centroid(ligand.coords);
  std::vector<Vec3> placed = ligand.coords;
  for (auto& p : placed)
    for (int k = 0; k < 3; ++k) p[k] += target[k] - current[k];
  Pose pose;
  pose.coords_per_layer.push_back(std::move(placed));
  return pose;
}

namespace {

ScoreHead make_score_head(ParameterStore& store, const std::string& prefix,
                          const ModelConfig& config) {
  ScoreHead h;
  h.from_maps = store.add_linear(prefix + ".maps", config.heads, 1);
  h.carry = {store.add_filled(prefix + ".carry.w", {1, 1}, 1.0),
             store.add_filled(prefix + ".carry.b", {1}, 0.0)};
  h.out = {store.add_filled(prefix + ".out.w", {1, 1}, config.score_scale_init),
           store.add_filled(prefix + ".out.b", {1}, 0.0)};
  return h;
}

}  // namespace

std::vector<StructureLayerWeights> make_structure_weights(ParameterStore& store,
                                                          const std::string& prefix,
                                                          const ModelConfig& config) {
  std::vector<StructureLayerWeights> layers;
  for (std::size_t l = 0; l < config.structure_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    StructureLayerWeights w;
    w.block = make_block_weights(store, p + ".block", config);
    w.intra = make_score_head(store, p + ".intra", config);
    w.inter = make_score_head(store, p + ".inter", config);
    layers.push_back(std::move(w));
  }
  return layers;
}

ScoreState zero_scores(std::size_t n, std::size_t m) {
  return {Tensor::zeros({n, n}), Tensor::zeros({n, m})};
}

Tensor update_scores(const Tensor& previous, const Tensor& maps, const ScoreHead& head) {
  const std::size_t rows = previous.dim(0), cols = previous.dim(1);
  Tensor carried = ag::linear(ag::reshape(previous, {rows, cols, 1}), head.carry.w, head.carry.b);
  Tensor from_maps = ag::linear(maps, head.from_maps.w, head.from_maps.b);
  Tensor a = ag::linear(ag::add(carried, from_maps), head.out.w, head.out.b);
  return ag::reshape(a, {rows, cols});
}

StructureState structure_layer(const StructureState& in, std::span<const double> pocket,
                               const StructureLayerWeights& w, const ModelConfig& config) {
  const std::size_t n = in.complex.n_ligand, t = in.complex.size();
  BlockTrace trace;
  StructureState out;
  out.complex = binding_block(in.complex, w.block, config, &trace);
  Tensor lig_rows = ag::slice(trace.attention, 0, 0, n);
  out.scores.a_intra = update_scores(in.scores.a_intra, ag::slice(lig_rows, 1, 0, n), w.intra);
  out.scores.a_inter = update_scores(in.scores.a_inter, ag::slice(lig_rows, 1, n, t), w.inter);
  out.coords = ag::coordinate_update(in.coords, pocket, out.scores.a_intra, out.scores.a_inter,
                                     config.coord_eps);
  return out;
}

StructureTrace run_structure(const ComplexState& c, const Tensor& initial_coords,
                             std::span<const double> pocket,
                             const std::vector<StructureLayerWeights>& layers,
                             const ModelConfig& config) {
  if (layers.size() != config.structure_layers) {
    throw LoadError("structure module has " + std::to_string(layers.size()) +
                    " layers, config expects " + std::to_string(config.structure_layers));
  }
  StructureState state{c, initial_coords, zero_scores(c.n_ligand, c.n_pocket)};
  StructureTrace trace;
  trace.coords.push_back(initial_coords);
  for (const auto& layer : layers) {
    state = structure_layer(state, pocket, layer, config);
    trace.coords.push_back(state.coords);
  }
  trace.final_scores = state.scores;
  return trace;
}

std::string pose_to_sdf(const MoleculeGraph& ligand, std::span<const Vec3> coords) {
  if (coords.size() != ligand.size()) {
    throw ContractError("pose_to_sdf: " + std::to_string(coords.size()) + " coordinates for " +
                        std::to_string(ligand.size()) + " atoms");
  }
  MoleculeGraph g = ligand;
  g.coords.assign(coords.begin(), coords.end());
  return write_sdf(g);
}

std::string pose_to_json(const std::string& name, std::span<const Vec3> coords, double confidence,
                         const double* rmsd) {
  nlohmann::json j;
  j["name"] = name;
  j["coords"] = nlohmann::json::array();
  for (const auto& p : coords) j["coords"].push_back({p[0], p[1], p[2]});
  j["confidence"] = confidence;
  if (rmsd) j["rmsd"] = *rmsd;
  return j.dump();
}

}  // namespace poseforge
