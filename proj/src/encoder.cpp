#include "poseforge/encoder.hpp"

#include <cmath>

namespace poseforge {

using ag::Tensor;

BlockWeights make_block_weights(ParameterStore& store, const std::string& prefix,
                                const ModelConfig& config) {
  BlockWeights w;
  const std::size_t d = config.d, h = config.heads;
  w.q = store.add_linear(prefix + ".q", d, d);
  w.k = store.add_linear(prefix + ".k", d, d);
  w.v = store.add_linear(prefix + ".v", d, d);
  w.o = store.add_linear(prefix + ".o", d, d);
  w.mlp.push_back(store.add_linear(prefix + ".mlp0", d, config.mlp_ratio * d));
  w.mlp.push_back(store.add_linear(prefix + ".mlp1", config.mlp_ratio * d, d));
  w.ln_gamma = store.add_filled(prefix + ".ln.g", {d}, 1.0);
  w.ln_beta = store.add_filled(prefix + ".ln.b", {d}, 0.0);
  w.talk1 = store.add_filled(prefix + ".talk1", {h, h}, 0.0);
  w.talk2 = store.add_filled(prefix + ".talk2", {h, h}, 0.0);
  for (Tensor t : {w.talk1, w.talk2}) {
    auto vals = t.mutable_values();
    for (std::size_t i = 0; i < h; ++i) vals[i * h + i] = 1.0;
  }
  w.pair_gain = store.add_filled(prefix + ".gain", {1}, config.pair_gain_init);
  return w;
}

Tensor attention_scores(const EmbeddingState& state, const BlockWeights& w, std::size_t heads) {
  const Tensor& a = state.atoms;
  Tensor q = ag::linear(a, w.q.w, w.q.b);
  Tensor k = ag::linear(a, w.k.w, w.k.b);
  const double head_width = static_cast<double>(a.dim(1) / heads);
  Tensor logits = ag::pair_logits(q, k, heads, 1.0 / std::sqrt(head_width));
  return ag::add(logits, ag::mul_scalar(state.pairs, w.pair_gain));
}

Tensor talking_head(const Tensor& scores, const Tensor& w1, const Tensor& w2, bool enabled) {
  if (!enabled) return ag::softmax(scores, 1);
  return ag::matmul(ag::softmax(ag::matmul(scores, w1), 1), w2);
}

EmbeddingState encoder_block(const EmbeddingState& state, const BlockWeights& w,
                             const ModelConfig& config, bool talking_head_on, BlockTrace* trace) {
  Tensor scores = attention_scores(state, w, config.heads);
  Tensor attn = talking_head(scores, w.talk1, w.talk2, talking_head_on);
  Tensor v = ag::linear(state.atoms, w.v.w, w.v.b);
  Tensor mixed = ag::linear(ag::attend(attn, v), w.o.w, w.o.b);
  Tensor update = ag::mlp(mixed, w.mlp, ag::Activation::kLeakyRelu);
  Tensor atoms = ag::layer_norm(ag::add(state.atoms, update), w.ln_gamma, w.ln_beta,
                                config.layer_norm_eps);
  if (trace) {
    trace->scores = scores;
    trace->attention = attn;
  }
  return {atoms, attn};
}

EncoderWeights make_encoder_weights(ParameterStore& store, const std::string& prefix,
                                    const ModelConfig& config, bool talking_head) {
  EncoderWeights w;
  w.featurizer = make_featurizer_weights(store, prefix, config);
  w.pair_proj = store.add_linear(prefix + ".pair_proj", config.d_pair, config.heads);
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    w.blocks.push_back(make_block_weights(store, prefix + ".block" + std::to_string(l), config));
  }
  w.talking_head = talking_head;
  return w;
}

EmbeddingState initial_state(const Featurization& f, const EncoderWeights& w,
                             const ModelConfig& config) {
  Tensor gpe;
  if (config.use_gpe) gpe = global_position_embedding(f, w.featurizer);
  Tensor atoms = atom_init(f, gpe, w.featurizer, config.layer_norm_eps);
  Tensor phi3d = gaussian_pair_features(f, w.featurizer.basis);
  Tensor spd, edge;
  if (config.use_2d) {
    spd = spd_embedding(f, w.featurizer);
    edge = edge_projection(f, w.featurizer);
  }
  Tensor pairs = pair_init(spd, edge, phi3d);
  pairs = ag::linear(pairs, w.pair_proj.w, w.pair_proj.b);
  return {atoms, pairs};
}

EmbeddingState run_encoder(const Featurization& f, const EncoderWeights& w,
                           const ModelConfig& config) {
  if (w.blocks.size() != config.encoder_layers) {
    throw LoadError("encoder has " + std::to_string(w.blocks.size()) + " blocks, config expects " +
                    std::to_string(config.encoder_layers));
  }
  EmbeddingState state = initial_state(f, w, config);
  for (const auto& block : w.blocks) {
    state = encoder_block(state, block, config, w.talking_head && config.use_talking_head);
  }
  return state;
}

}  // namespace poseforge
