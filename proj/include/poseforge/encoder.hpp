#pragma once

// Pair-biased multi-head self-attention blocks with talking-head refinement.
// The same block drives the ligand/pocket encoders, the binding module and
// the structure module.

#include <string>
#include <vector>

#include "poseforge/autograd.hpp"
#include "poseforge/featurize.hpp"
#include "poseforge/model_config.hpp"
#include "poseforge/ops.hpp"
#include "poseforge/params.hpp"

namespace poseforge {

struct EmbeddingState {
  ag::Tensor atoms;  // [n, d]
  ag::Tensor pairs;  // [n, n, H]
};

struct BlockWeights {
  ag::LinearLayer q, k, v, o;
  std::vector<ag::LinearLayer> mlp;  // d -> ratio*d -> d
  ag::Tensor ln_gamma, ln_beta;
  ag::Tensor talk1, talk2;  // [H, H], identity at init
  ag::Tensor pair_gain;     // [1], scales the incoming pair bias
};

BlockWeights make_block_weights(ParameterStore& store, const std::string& prefix,
                                const ModelConfig& config);

// M[i, j, h] = <Q_i^h, K_j^h> / sqrt(d_head) + gain * pairs[i, j, h]
ag::Tensor attention_scores(const EmbeddingState& state, const BlockWeights& w, std::size_t heads);

// softmax over keys of (M W1), then mixed by W2; plain per-head softmax when
// disabled. Head axis is the last one.
ag::Tensor talking_head(const ag::Tensor& scores, const ag::Tensor& w1, const ag::Tensor& w2,
                        bool enabled);

struct BlockTrace {
  ag::Tensor scores;     // pre-softmax logits
  ag::Tensor attention;  // post talking-head maps (the new pairs)
};

// A' = LayerNorm(A + MLP(Concat_h(M V) W_O)); pairs' = attention maps.
EmbeddingState encoder_block(const EmbeddingState& state, const BlockWeights& w,
                             const ModelConfig& config, bool talking_head_on,
                             BlockTrace* trace = nullptr);

struct EncoderWeights {
  FeaturizerWeights featurizer;
  ag::LinearLayer pair_proj;  // d_pair -> H
  std::vector<BlockWeights> blocks;
  bool talking_head = true;
};

EncoderWeights make_encoder_weights(ParameterStore& store, const std::string& prefix,
                                    const ModelConfig& config, bool talking_head);

// Initial state (A^1, projected Phi^1) from a featurization.
EmbeddingState initial_state(const Featurization& f, const EncoderWeights& w,
                             const ModelConfig& config);

EmbeddingState run_encoder(const Featurization& f, const EncoderWeights& w,
                           const ModelConfig& config);

}  // namespace poseforge
