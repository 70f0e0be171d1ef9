#include "poseforge/binding.hpp"

namespace poseforge {

using ag::Tensor;

ComplexState assemble_complex(const EmbeddingState& ligand, const EmbeddingState& pocket) {
  if (ligand.atoms.dim(1) != pocket.atoms.dim(1) || ligand.pairs.dim(2) != pocket.pairs.dim(2)) {
    throw DimensionError("assemble_complex: ligand " + ag::shape_str(ligand.atoms.shape()) + "/" +
                         ag::shape_str(ligand.pairs.shape()) + " vs pocket " +
                         ag::shape_str(pocket.atoms.shape()) + "/" +
                         ag::shape_str(pocket.pairs.shape()));
  }
  ComplexState c;
  c.atoms = ag::concat({ligand.atoms, pocket.atoms}, 0);
  c.pairs = ag::block_diag_pairs(ligand.pairs, pocket.pairs);
  c.n_ligand = ligand.atoms.dim(0);
  c.n_pocket = pocket.atoms.dim(0);
  return c;
}

ComplexState binding_block(const ComplexState& c, const BlockWeights& w, const ModelConfig& config,
                           BlockTrace* trace) {
  EmbeddingState s = encoder_block({c.atoms, c.pairs}, w, config, config.use_talking_head, trace);
  ComplexState out = c;
  out.atoms = s.atoms;
  out.pairs = s.pairs;
  return out;
}

ComplexState run_binding(const ComplexState& c, const std::vector<BlockWeights>& blocks,
                         const ModelConfig& config) {
  if (blocks.size() != config.binding_layers) {
    throw LoadError("binding module has " + std::to_string(blocks.size()) +
                    " blocks, config expects " + std::to_string(config.binding_layers));
  }
  ComplexState state = c;
  for (const auto& b : blocks) state = binding_block(state, b, config);
  return state;
}

DistanceHeadWeights make_distance_head_weights(ParameterStore& store, const std::string& prefix,
                                               const ModelConfig& config) {
  DistanceHeadWeights w;
  const std::size_t in = 2 * config.d + config.heads, hid = config.head_hidden;
  w.intra_ln_gamma = store.add_filled(prefix + ".intra_ln.g", {in}, 1.0);
  w.intra_ln_beta = store.add_filled(prefix + ".intra_ln.b", {in}, 0.0);
  w.intra1 = store.add_linear(prefix + ".intra1", in, hid);
  w.intra2 = store.add_linear(prefix + ".intra2", hid, 1);
  w.intra2.b.mutable_values()[0] = config.intra_distance_init;
  w.lp1 = store.add_linear(prefix + ".lp1", in, hid);
  w.lp_ln_gamma = store.add_filled(prefix + ".lp_ln.g", {hid}, 1.0);
  w.lp_ln_beta = store.add_filled(prefix + ".lp_ln.b", {hid}, 0.0);
  w.lp2 = store.add_linear(prefix + ".lp2", hid, 1);
  w.lp2.b.mutable_values()[0] = config.inter_distance_init;
  w.pl1 = store.add_linear(prefix + ".pl1", in, hid);
  w.pl_ln_gamma = store.add_filled(prefix + ".pl_ln.g", {hid}, 1.0);
  w.pl_ln_beta = store.add_filled(prefix + ".pl_ln.b", {hid}, 0.0);
  w.pl2 = store.add_linear(prefix + ".pl2", hid, 1);
  w.pl2.b.mutable_values()[0] = config.inter_distance_init;
  return w;
}

namespace {

Tensor inter_view(const Tensor& rows, const Tensor& cols, const Tensor& pairs,
                  const ag::LinearLayer& l1, const Tensor& g, const Tensor& b,
                  const ag::LinearLayer& l2, double eps) {
  Tensor x = ag::pair_concat(rows, cols, pairs);
  x = ag::relu(ag::linear(x, l1.w, l1.b));
  x = ag::layer_norm(x, g, b, eps);
  x = ag::linear(x, l2.w, l2.b);
  return ag::reshape(x, {rows.dim(0), cols.dim(0)});
}

}  // namespace

DistancePrediction distance_heads(const ComplexState& c, const DistanceHeadWeights& w,
                                  double eps) {
  const std::size_t n = c.n_ligand, t = c.size();
  Tensor lig = ag::slice(c.atoms, 0, 0, n);
  Tensor poc = ag::slice(c.atoms, 0, n, t);
  Tensor lig_rows = ag::slice(c.pairs, 0, 0, n);
  Tensor poc_rows = ag::slice(c.pairs, 0, n, t);

  DistancePrediction out;
  Tensor x = ag::pair_concat(lig, lig, ag::slice(lig_rows, 1, 0, n));
  x = ag::layer_norm(x, w.intra_ln_gamma, w.intra_ln_beta, eps);
  x = ag::leaky_relu(ag::linear(x, w.intra1.w, w.intra1.b));
  x = ag::linear(x, w.intra2.w, w.intra2.b);
  out.intra = ag::reshape(x, {n, n});

  Tensor lp = inter_view(lig, poc, ag::slice(lig_rows, 1, n, t), w.lp1, w.lp_ln_gamma,
                         w.lp_ln_beta, w.lp2, eps);
  Tensor pl = inter_view(poc, lig, ag::slice(poc_rows, 1, 0, n), w.pl1, w.pl_ln_gamma,
                         w.pl_ln_beta, w.pl2, eps);
  out.inter = ag::scale(ag::add(lp, ag::transpose01(pl)), 0.5);
  return out;
}

Tensor symmetrize(const Tensor& d) {
  if (d.rank() != 2 || d.dim(0) != d.dim(1)) {
    throw DimensionError("symmetrize: expected a square matrix, got " + ag::shape_str(d.shape()));
  }
  return ag::scale(ag::add(d, ag::transpose01(d)), 0.5);
}

}  // namespace poseforge
