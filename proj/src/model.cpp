#include "poseforge/model.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace poseforge {

using ag::Tensor;

std::vector<double> flatten(std::span<const Vec3> points) {
  std::vector<double> out;
  out.reserve(points.size() * 3);
  for (const auto& p : points) out.insert(out.end(), p.begin(), p.end());
  return out;
}

namespace {

std::vector<Vec3> unflatten(std::span<const double> v, const Vec3& shift) {
  std::vector<Vec3> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int c = 0; c < 3; ++c) out[i][c] = v[i * 3 + c] + shift[c];
  return out;
}

std::vector<Vec3> shifted(std::span<const Vec3> points, const Vec3& by) {
  std::vector<Vec3> out(points.begin(), points.end());
  for (auto& p : out)
    for (int c = 0; c < 3; ++c) p[c] -= by[c];
  return out;
}

}  // namespace

std::vector<Vec3> ForwardResult::pose() const {
  if (!has_structure) throw ContractError("forward pass ran without the structure module");
  return unflatten(structure.coords.back().values(), origin);
}

std::vector<Vec3> ForwardResult::layer_pose(std::size_t layer) const {
  if (!has_structure) throw ContractError("forward pass ran without the structure module");
  return unflatten(structure.coords.at(layer).values(), origin);
}

std::vector<double> ForwardResult::intra_values() const {
  return {intra_sym.values().begin(), intra_sym.values().end()};
}

std::vector<double> ForwardResult::inter_values() const {
  return {distances.inter.values().begin(), distances.inter.values().end()};
}

DockModel::DockModel(const ModelConfig& config) : config_(config), store_(config.seed) {
  config_.validate();
  weights_.ligand = make_encoder_weights(store_, "lig", config_, config_.use_talking_head);
  weights_.pocket = make_encoder_weights(store_, "poc", config_,
                                         config_.use_talking_head && config_.talking_head_pocket);
  for (std::size_t l = 0; l < config_.binding_layers; ++l) {
    weights_.binding.push_back(make_block_weights(store_, "bind.block" + std::to_string(l), config_));
  }
  weights_.heads = make_distance_head_weights(store_, "heads", config_);
  weights_.structure = make_structure_weights(store_, "struct", config_);
  weights_.confidence = make_confidence_weights(store_, "conf", config_);
}

ForwardResult DockModel::forward(const MoleculeGraph& ligand, const MoleculeGraph& pocket,
                                 bool with_structure) const {
  ForwardResult r;
  const Pose placed = init_pose(ligand, pocket);
  r.origin = centroid(pocket.coords);
  r.pocket_local = shifted(pocket.coords, r.origin);
  r.init_local = shifted(placed.coords_per_layer[0], r.origin);

  const Featurization fl = featurize(ligand, r.init_local, config_);
  const Featurization fp = featurize(pocket, r.pocket_local, config_);
  const EmbeddingState lig = run_encoder(fl, weights_.ligand, config_);
  const EmbeddingState poc = run_encoder(fp, weights_.pocket, config_);
  r.complex = run_binding(assemble_complex(lig, poc), weights_.binding, config_);
  r.distances = distance_heads(r.complex, weights_.heads, config_.layer_norm_eps);
  r.intra_sym = symmetrize(r.distances.intra);

  const std::size_t n = r.complex.n_ligand, t = r.complex.size();
  Tensor logits = confidence_logits(r.complex.pairs, weights_.confidence);
  Tensor lig_rows = ag::slice(logits, 0, 0, n);
  r.conf_intra = ag::slice(lig_rows, 1, 0, n);
  r.conf_inter = ag::slice(lig_rows, 1, n, t);
  r.confidence = confidence_report(r.conf_inter, r.inter_values());

  if (with_structure) {
    const std::vector<double> anchors = flatten(r.pocket_local);
    Tensor init = Tensor::constant({n, 3}, flatten(r.init_local));
    r.structure = run_structure(r.complex, init, anchors, weights_.structure, config_);
    r.has_structure = true;
  }
  return r;
}

void DockModel::save(std::ostream& os) const {
  std::vector<WeightEntry> entries;
  nlohmann::json cfg = config_;
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    const double v = it.value().is_boolean() ? (it.value().get<bool>() ? 1.0 : 0.0)
                                             : it.value().get<double>();
    entries.push_back({"config." + it.key(), {1}, {v}});
  }
  for (const auto& [name, t] : store_.entries()) {
    entries.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  }
  write_weights(os, entries);
}

void DockModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  save(os);
}

std::unique_ptr<DockModel> DockModel::load(std::istream& is) {
  const auto entries = read_weights(is);
  const nlohmann::json defaults = ModelConfig{};
  nlohmann::json cfg = nlohmann::json::object();
  const std::string prefix = "config.";
  for (const auto& e : entries) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    const std::string key = e.name.substr(prefix.size());
    if (!defaults.contains(key)) throw LoadError("unknown config entry " + e.name);
    if (e.values.size() != 1) throw LoadError("config entry " + e.name + " is not a scalar");
    const auto& like = defaults.at(key);
    const double v = e.values[0];
    if (like.is_boolean()) cfg[key] = v != 0.0;
    else if (like.is_number_unsigned()) cfg[key] = static_cast<std::uint64_t>(v);
    else if (like.is_number_integer()) cfg[key] = static_cast<std::int64_t>(v);
    else cfg[key] = v;
  }
  ModelConfig config;
  try {
    config = cfg.get<ModelConfig>();
    config.validate();
  } catch (const ContractError& ex) {
    throw LoadError(std::string("weights carry an invalid config: ") + ex.what());
  }
  auto model = std::make_unique<DockModel>(config);
  std::size_t matched = 0;
  for (const auto& e : entries) {
    if (e.name.rfind(prefix, 0) == 0) continue;
    if (!model->store_.contains(e.name)) throw LoadError("unexpected parameter " + e.name);
    Tensor t = model->store_.get(e.name);
    if (t.shape() != e.shape) {
      throw LoadError("parameter " + e.name + " has shape " + ag::shape_str(e.shape) +
                      ", model expects " + ag::shape_str(t.shape()));
    }
    auto v = t.mutable_values();
    std::copy(e.values.begin(), e.values.end(), v.begin());
    ++matched;
  }
  if (matched != model->store_.size()) {
    throw LoadError("weights file has " + std::to_string(matched) + " parameters, model needs " +
                    std::to_string(model->store_.size()));
  }
  return model;
}

std::unique_ptr<DockModel> DockModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open weights file " + path);
  return load(is);
}

}  // namespace poseforge
