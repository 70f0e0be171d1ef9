#include <gtest/gtest.h>

#include "dense.hpp"
#include "poseforge/encoder.hpp"
#include "poseforge/grad_check.hpp"
#include "test_util.hpp"

using namespace poseforge;
using namespace poseforge::testing;
using ag::Tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c = ModelConfig::toy();
  c.d = 8;
  c.heads = 2;
  c.d_pair = 2;
  c.encoder_layers = 2;
  return c;
}

void randomize(ParameterStore& store, std::uint64_t seed, double amp = 0.5) {
  std::uint64_t s = seed;
  for (auto& [name, t] : store.entries()) {
    auto v = random_values(t.size(), ++s, -amp, amp);
    auto dst = Tensor(t).mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) dst[i] += v[i];
  }
}

dense::BlockOut dense_block(const dense::Vec& atoms, const dense::Vec& pairs, std::size_t n,
                            const BlockWeights& w, const ModelConfig& c, bool talking) {
  return dense::block(atoms, pairs, n, c.d, c.heads, w.q.w, w.q.b, w.k.w, w.k.b, w.v.w, w.v.b,
                      w.o.w, w.o.b, w.mlp, w.ln_gamma, w.ln_beta, w.talk1, w.talk2, w.pair_gain[0],
                      talking, c.layer_norm_eps);
}

EmbeddingState random_state(std::size_t n, const ModelConfig& c, std::uint64_t seed) {
  return {random_tensor({n, c.d}, seed), random_tensor({n, n, c.heads}, seed + 1, 0, 1)};
}

MoleculeGraph test_ligand() {
  MoleculeGraph g = carbon_chain(6);
  g.atom_types = {0, 1, 0, 2, 0, 3};
  g.bonds.push_back({0, 5, BondType::kDouble});
  g.coords = {Vec3{0.0, 0.1, 0.2}, Vec3{1.3, 0.4, -0.2}, Vec3{2.1, 1.5, 0.3},
              Vec3{1.4, 2.7, 0.1}, Vec3{0.1, 2.6, -0.4}, Vec3{-0.6, 1.3, 0.0}};
  return g;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(AttentionScores, ZeroQueryKeyGivesUniformAttention) {
  ModelConfig c = small_config();
  ParameterStore store(1);
  BlockWeights w = make_block_weights(store, "b", c);
  for (Tensor t : {w.q.w, w.q.b, w.k.w, w.k.b}) for (double& v : t.mutable_values()) v = 0.0;
  EmbeddingState s{random_tensor({4, c.d}, 2), Tensor::zeros({4, 4, c.heads})};
  Tensor m = attention_scores(s, w, c.heads);
  for (double v : m.values()) EXPECT_EQ(v, 0.0);
  Tensor a = talking_head(m, w.talk1, w.talk2, false);
  for (double v : a.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(AttentionScores, LargePairBiasConcentratesMass) {
  ModelConfig c = small_config();
  ParameterStore store(1);
  BlockWeights w = make_block_weights(store, "b", c);
  EmbeddingState s = random_state(4, c, 3);
  std::vector<double> pairs(4 * 4 * c.heads, 0.0);
  pairs[(1 * 4 + 2) * c.heads + 0] = 1e9;
  s.pairs = Tensor::constant({4, 4, c.heads}, pairs);
  Tensor a = talking_head(attention_scores(s, w, c.heads), w.talk1, w.talk2, true);
  EXPECT_NEAR(a[(1 * 4 + 2) * c.heads + 0], 1.0, 1e-12);
}

TEST(AttentionScores, DenseOracle) {
  ModelConfig c = small_config();
  ParameterStore store(4);
  BlockWeights w = make_block_weights(store, "b", c);
  randomize(store, 40);
  EmbeddingState s = random_state(5, c, 5);
  Tensor m = attention_scores(s, w, c.heads);
  auto ref = dense_block(dense::vals(s.atoms), dense::vals(s.pairs), 5, w, c, true);
  EXPECT_LT(max_abs_diff(m.values(), ref.scores), 1e-10);
}

TEST(TalkingHead, IdentityEqualsPlainSoftmax) {
  Tensor m = random_tensor({4, 4, 3}, 6, -3, 3);
  Tensor eye = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = talking_head(m, eye, eye, true), b = talking_head(m, eye, eye, false);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(TalkingHead, SingleHeadScalesSoftmax) {
  Tensor m = random_tensor({3, 4, 1}, 7, -3, 3);
  Tensor w1 = Tensor::constant({1, 1}, {1.0}), w2 = Tensor::constant({1, 1}, {0.4});
  Tensor a = talking_head(m, w1, w2, true), p = ag::softmax(m, 1);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], 0.4 * p[i], 1e-15);
}

TEST(TalkingHead, TwoHeadDenseOracle) {
  Tensor m = random_tensor({3, 3, 2}, 8, -2, 2);
  Tensor w1 = random_tensor({2, 2}, 9), w2 = random_tensor({2, 2}, 10);
  Tensor a = talking_head(m, w1, w2, true);
  auto ref = dense::mix_heads(dense::softmax_keys(dense::mix_heads(dense::vals(m), w1, 2), 3, 3, 2), w2, 2);
  EXPECT_LT(max_abs_diff(a.values(), ref), 1e-10);
}

TEST(EncoderBlock, ZeroWeightsGiveLayerNormAndUniformMaps) {
  ModelConfig c = small_config();
  ParameterStore store(1);
  BlockWeights w = make_block_weights(store, "b", c);
  for (auto& [name, t] : store.entries()) {
    if (name.find("ln.g") != std::string::npos || name.find("talk") != std::string::npos) continue;
    for (double& v : Tensor(t).mutable_values()) v = 0.0;
  }
  EmbeddingState s = random_state(4, c, 11);
  EmbeddingState out = encoder_block(s, w, c, true);
  Tensor ln = ag::layer_norm(s.atoms, w.ln_gamma, w.ln_beta, c.layer_norm_eps);
  for (std::size_t i = 0; i < ln.size(); ++i) EXPECT_EQ(out.atoms[i], ln[i]);
  for (double v : out.pairs.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(EncoderBlock, DenseOracleN4D8H2) {
  ModelConfig c = small_config();
  ParameterStore store(12);
  BlockWeights w = make_block_weights(store, "b", c);
  randomize(store, 120);
  EmbeddingState s = random_state(4, c, 13);
  for (bool talking : {true, false}) {
    EmbeddingState out = encoder_block(s, w, c, talking);
    auto ref = dense_block(dense::vals(s.atoms), dense::vals(s.pairs), 4, w, c, talking);
    EXPECT_LT(max_abs_diff(out.atoms.values(), ref.atoms), 1e-9);
    EXPECT_LT(max_abs_diff(out.pairs.values(), ref.pairs), 1e-9);
  }
}

TEST(EncoderBlock, AttentionRowsSumToOne) {
  ModelConfig c = ModelConfig::toy();
  ParameterStore store(14);
  BlockWeights w = make_block_weights(store, "b", c);
  EmbeddingState out = encoder_block(random_state(7, c, 15), w, c, true);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t h = 0; h < c.heads; ++h) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) s += out.pairs[(i * 7 + j) * c.heads + h];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(EncoderBlock, PermutationEquivariant) {
  ModelConfig c = small_config();
  ParameterStore store(16);
  BlockWeights w = make_block_weights(store, "b", c);
  randomize(store, 160);
  const std::size_t n = 6;
  EmbeddingState s = random_state(n, c, 17);
  const auto perm = random_permutation(n, 18);
  std::vector<double> pa(n * c.d), pp(n * n * c.heads);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pi = static_cast<std::size_t>(perm[i]);
    for (std::size_t k = 0; k < c.d; ++k) pa[pi * c.d + k] = s.atoms[i * c.d + k];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t pj = static_cast<std::size_t>(perm[j]);
      for (std::size_t h = 0; h < c.heads; ++h) pp[(pi * n + pj) * c.heads + h] = s.pairs[(i * n + j) * c.heads + h];
    }
  }
  EmbeddingState a = encoder_block(s, w, c, true);
  EmbeddingState b = encoder_block({Tensor::constant({n, c.d}, pa), Tensor::constant({n, n, c.heads}, pp)}, w, c, true);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pi = static_cast<std::size_t>(perm[i]);
    for (std::size_t k = 0; k < c.d; ++k) EXPECT_NEAR(a.atoms[i * c.d + k], b.atoms[pi * c.d + k], 1e-9);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t pj = static_cast<std::size_t>(perm[j]);
      for (std::size_t h = 0; h < c.heads; ++h)
        EXPECT_NEAR(a.pairs[(i * n + j) * c.heads + h], b.pairs[(pi * n + pj) * c.heads + h], 1e-9);
    }
  }
}

TEST(RunEncoder, PermutationEquivariantFromGraph) {
  ModelConfig c = ModelConfig::toy();
  ParameterStore store(19);
  EncoderWeights w = make_encoder_weights(store, "lig", c, true);
  const MoleculeGraph g = test_ligand();
  const auto perm = random_permutation(g.size(), 20);
  const MoleculeGraph h = permute_graph(g, perm);
  EmbeddingState a = run_encoder(featurize(g, g.coords, c), w, c);
  EmbeddingState b = run_encoder(featurize(h, h.coords, c), w, c);
  const std::size_t n = g.size(), H = c.heads;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pi = static_cast<std::size_t>(perm[i]);
    for (std::size_t k = 0; k < c.d; ++k) EXPECT_NEAR(a.atoms[i * c.d + k], b.atoms[pi * c.d + k], 1e-9);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t pj = static_cast<std::size_t>(perm[j]);
      for (std::size_t q = 0; q < H; ++q) EXPECT_NEAR(a.pairs[(i * n + j) * H + q], b.pairs[(pi * n + pj) * H + q], 1e-9);
    }
  }
}

TEST(RunEncoder, OneLayerEqualsOneBlock) {
  ModelConfig c = ModelConfig::toy();
  c.encoder_layers = 1;
  ParameterStore store(21);
  EncoderWeights w = make_encoder_weights(store, "lig", c, true);
  const MoleculeGraph g = test_ligand();
  const auto f = featurize(g, g.coords, c);
  EmbeddingState a = run_encoder(f, w, c);
  EmbeddingState b = encoder_block(initial_state(f, w, c), w.blocks[0], c, true);
  for (std::size_t i = 0; i < a.atoms.size(); ++i) EXPECT_EQ(a.atoms[i], b.atoms[i]);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) EXPECT_EQ(a.pairs[i], b.pairs[i]);
}

TEST(RunEncoder, TwoLayersEqualExternalComposition) {
  ModelConfig c = ModelConfig::toy();
  ParameterStore store(22);
  EncoderWeights w = make_encoder_weights(store, "poc", c, false);
  const MoleculeGraph g = test_ligand();
  const auto f = featurize(g, g.coords, c);
  EmbeddingState a = run_encoder(f, w, c);
  EmbeddingState s = initial_state(f, w, c);
  s = encoder_block(s, w.blocks[0], c, false);
  s = encoder_block(s, w.blocks[1], c, false);
  for (std::size_t i = 0; i < a.atoms.size(); ++i) EXPECT_EQ(a.atoms[i], s.atoms[i]);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) EXPECT_EQ(a.pairs[i], s.pairs[i]);
}

TEST(RunEncoder, DeterministicPerSeed) {
  ModelConfig c = ModelConfig::toy();
  ParameterStore s1(23), s2(23);
  EncoderWeights w1 = make_encoder_weights(s1, "lig", c, true);
  EncoderWeights w2 = make_encoder_weights(s2, "lig", c, true);
  const MoleculeGraph g = test_ligand();
  const auto f = featurize(g, g.coords, c);
  EmbeddingState a = run_encoder(f, w1, c), b = run_encoder(f, w2, c);
  for (std::size_t i = 0; i < a.atoms.size(); ++i) EXPECT_EQ(a.atoms[i], b.atoms[i]);
}

TEST(RunEncoder, PureThreeDimensionalModeRuns) {
  ModelConfig c = ModelConfig::toy();
  c.use_gpe = false;
  c.use_2d = false;
  ParameterStore store(24);
  EncoderWeights w = make_encoder_weights(store, "lig", c, true);
  const MoleculeGraph g = test_ligand();
  EmbeddingState a = run_encoder(featurize(g, g.coords, c), w, c);
  for (double v : a.atoms.values()) EXPECT_TRUE(std::isfinite(v));
  for (double v : a.pairs.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(RunEncoder, BlockCountMismatchIsLoadError) {
  ModelConfig c = ModelConfig::toy();
  ParameterStore store(25);
  EncoderWeights w = make_encoder_weights(store, "lig", c, true);
  w.blocks.pop_back();
  const MoleculeGraph g = test_ligand();
  EXPECT_THROW((void)run_encoder(featurize(g, g.coords, c), w, c), LoadError);
}

TEST(RunEncoder, ParameterGradientsMatchFiniteDifferences) {
  ModelConfig c = ModelConfig::toy();
  ParameterStore store(26);
  EncoderWeights w = make_encoder_weights(store, "lig", c, true);
  // move talking-head matrices off the identity so their gradients are generic
  for (auto& b : w.blocks) {
    auto r = random_values(b.talk1.size(), 27, -0.2, 0.2);
    auto t1 = b.talk1.mutable_values();
    for (std::size_t i = 0; i < r.size(); ++i) t1[i] += r[i];
  }
  const MoleculeGraph g = test_ligand();
  const auto f = featurize(g, g.coords, c);
  const auto atom_weights = random_values(g.size() * c.d, 28);
  auto loss = [&] {
    EmbeddingState s = run_encoder(f, w, c);
    // atoms are layer-normed, so a plain sum would be constant
    return ag::add(ag::weighted_sum(s.atoms, atom_weights), ag::sum(ag::square(s.pairs)));
  };
  const auto checks = ag::grad_check_leaves(loss, store.entries(), 6, 1e-5);
  for (const auto& pc : checks) EXPECT_LT(pc.max_relative_error, 1e-3) << pc.name;
}
