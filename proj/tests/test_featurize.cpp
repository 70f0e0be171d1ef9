#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "poseforge/featurize.hpp"
#include "test_util.hpp"

using namespace poseforge;
using namespace poseforge::testing;
using ag::Tensor;

namespace {

struct Fixture {
  ModelConfig config = ModelConfig::toy();
  ParameterStore store{5};
  FeaturizerWeights w;
  MoleculeGraph g;
  Fixture() {
    w = make_featurizer_weights(store, "lig", config);
    g = carbon_chain(5);
    g.atom_types[1] = static_cast<int>(Element::N);
    g.atom_types[3] = static_cast<int>(Element::O);
    g.coords = {Vec3{0.1, 0.2, -0.3}, Vec3{1.4, 0.5, 0.1}, Vec3{2.2, 1.6, 0.4}, Vec3{3.5, 1.2, -0.7},
                Vec3{4.4, 2.3, 0.2}};
  }
  Featurization feat() const { return featurize(g, g.coords, config); }
};

void zero_all(ParameterStore& store) {
  for (auto& [name, t] : store.entries()) {
    for (double& v : ag::Tensor(t).mutable_values()) v = 0.0;
  }
}

}  // namespace

TEST(Gpe, OriginAlternatesZeroOne) {
  std::vector<Vec3> c{{0, 0, 0}};
  const auto s = gpe_sinusoids(c, 8);
  ASSERT_EQ(s.size(), 24u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], (i % 2 == 0) ? 0.0 : 1.0);
}

TEST(Gpe, IdenticalCoordinatesIdenticalRows) {
  Fixture f;
  f.g.coords[2] = f.g.coords[0];
  const auto feat = f.feat();
  Tensor gpe = global_position_embedding(feat, f.w);
  const std::size_t d = f.config.d;
  for (std::size_t c = 0; c < d; ++c) EXPECT_EQ(gpe[0 * d + c], gpe[2 * d + c]);
}

TEST(Gpe, FirstEvenSlotAtPi) {
  std::vector<Vec3> c{{std::numbers::pi, 0, 0}};
  EXPECT_NEAR(gpe_sinusoids(c, 8)[0], 0.0, 1e-9);
}

TEST(Gpe, NonFiniteCoordinateThrows) {
  std::vector<Vec3> c{{std::nan(""), 0, 0}};
  EXPECT_THROW((void)gpe_sinusoids(c, 8), ContractError);
}

TEST(Gpe, InjectiveOnRandomPoints) {
  Fixture f;
  auto vals = random_values(300, 17, -10, 10);
  std::vector<Vec3> pts(100);
  for (std::size_t i = 0; i < 100; ++i) pts[i] = {vals[3 * i], vals[3 * i + 1], vals[3 * i + 2]};
  MoleculeGraph cloud = random_cloud(100, 3);
  cloud.coords = pts;
  const auto feat = featurize(cloud, pts, f.config);
  Tensor gpe = global_position_embedding(feat, f.w);
  const std::size_t d = f.config.d;
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = i + 1; j < 100; ++j) {
      bool differ = false;
      for (std::size_t c = 0; c < d && !differ; ++c) differ = gpe[i * d + c] != gpe[j * d + c];
      EXPECT_TRUE(differ) << i << " " << j;
    }
  }
}

TEST(Gaussian, KernelAtZeroDistance) {
  const std::vector<double> dist{0.0};
  const std::vector<int> type{0};
  ag::GaussianSpec spec{{0.0, 2.0, 5.0}, {1.0, 0.7, 1.3}, true};
  Tensor k = ag::gaussian_kernels(dist, type, 1, 1, Tensor::constant({1}, {1.0}),
                                  Tensor::constant({1}, {0.0}), spec);
  const double pi = std::numbers::pi;
  for (std::size_t i = 0; i < 3; ++i) {
    const double mu = spec.mu[i], s = spec.sigma[i];
    EXPECT_NEAR(k[i], 1.0 / std::sqrt(2 * pi * s) * std::exp(-mu * mu / (2 * pi * s * s)), 1e-15);
  }
}

TEST(Gaussian, PeakAtMean) {
  ag::GaussianSpec spec{{2.5}, {0.8}, true};
  const std::vector<double> dist{2.5};
  const std::vector<int> type{0};
  Tensor k = ag::gaussian_kernels(dist, type, 1, 1, Tensor::constant({1}, {1.0}),
                                  Tensor::constant({1}, {0.0}), spec);
  EXPECT_NEAR(k[0], 1.0 / std::sqrt(2 * std::numbers::pi * 0.8), 1e-15);
}

TEST(Gaussian, TwoAtomsThreeAngstromsScalarOracle) {
  ag::GaussianSpec spec{{0.0, 4.0}, {1.0, 1.0}, true};
  const std::vector<double> dist{0.0, 3.0, 3.0, 0.0};
  const std::vector<int> type{0, 0, 0, 0};
  Tensor k = ag::gaussian_kernels(dist, type, 2, 2, Tensor::constant({1}, {1.0}),
                                  Tensor::constant({1}, {0.0}), spec);
  const double pre = 1.0 / std::sqrt(2 * std::numbers::pi);
  // index (0,1,k) = (0*2+1)*2+k
  EXPECT_NEAR(k[2], pre * std::exp(-9.0 / (2 * std::numbers::pi)), 1e-15);
  EXPECT_NEAR(k[3], pre * std::exp(-1.0 / (2 * std::numbers::pi)), 1e-15);
}

TEST(Gaussian, BasisWellFormed) {
  Fixture f;
  const auto& spec = f.w.basis.spec;
  ASSERT_EQ(spec.mu.size(), f.config.kernels);
  for (std::size_t i = 0; i < spec.mu.size(); ++i) {
    EXPECT_GT(spec.sigma[i], 0.0);
    if (i > 0) EXPECT_GT(spec.mu[i], spec.mu[i - 1]);
  }
  EXPECT_DOUBLE_EQ(spec.mu.front(), 0.0);
  EXPECT_DOUBLE_EQ(spec.mu.back(), f.config.kernel_mu_max);
}

TEST(Gaussian, PairFeaturesSymmetric) {
  Fixture f;
  // perturb the per-type affine so it is not trivially the identity
  auto u = f.w.basis.u.mutable_values();
  auto v = f.w.basis.v.mutable_values();
  auto r = random_values(u.size(), 9, 0.5, 1.5), s = random_values(v.size(), 10, -0.5, 0.5);
  std::copy(r.begin(), r.end(), u.begin());
  std::copy(s.begin(), s.end(), v.begin());
  Tensor phi = gaussian_pair_features(f.feat(), f.w.basis);
  const std::size_t n = f.g.size(), c = f.config.d_pair;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < c; ++k) EXPECT_EQ(phi[(i * n + j) * c + k], phi[(j * n + i) * c + k]);
}

TEST(Gaussian, TypePairIndexUnordered) {
  std::set<int> seen;
  for (int a = 0; a < static_cast<int>(kElementCount); ++a) {
    for (int b = a; b < static_cast<int>(kElementCount); ++b) {
      EXPECT_EQ(type_pair_index(a, b), type_pair_index(b, a));
      seen.insert(type_pair_index(a, b));
    }
  }
  EXPECT_EQ(seen.size(), kTypePairCount);
  EXPECT_EQ(*seen.rbegin(), static_cast<int>(kTypePairCount) - 1);
}

TEST(Translation, ChangesGpeKeepsPairFeatures) {
  Fixture f;
  const auto a = f.feat();
  auto moved = f.g;
  for (auto& p : moved.coords) p = {p[0] + 3.7, p[1] - 1.1, p[2] + 0.4};
  const auto b = featurize(moved, moved.coords, f.config);
  Tensor ga = global_position_embedding(a, f.w), gb = global_position_embedding(b, f.w);
  double diff = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) diff = std::max(diff, std::abs(ga[i] - gb[i]));
  EXPECT_GT(diff, 1e-3);
  Tensor pa = gaussian_pair_features(a, f.w.basis), pb = gaussian_pair_features(b, f.w.basis);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-12);
}

TEST(AtomInit, ZeroWeightsZeroGpe) {
  Fixture f;
  zero_all(f.store);
  for (double& v : f.w.atom_ln_gamma.mutable_values()) v = 1.0;
  Tensor a = atom_init(f.feat(), Tensor::zeros({f.g.size(), f.config.d}), f.w, 1e-5);
  for (double v : a.values()) EXPECT_EQ(v, 0.0);
}

TEST(AtomInit, PermutationPermutesRows) {
  Fixture f;
  const auto perm = random_permutation(f.g.size(), 4);
  const MoleculeGraph h = permute_graph(f.g, perm);
  const auto fa = f.feat();
  const auto fb = featurize(h, h.coords, f.config);
  Tensor a = atom_init(fa, global_position_embedding(fa, f.w), f.w, 1e-5);
  Tensor b = atom_init(fb, global_position_embedding(fb, f.w), f.w, 1e-5);
  const std::size_t d = f.config.d;
  for (std::size_t i = 0; i < f.g.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) EXPECT_EQ(a[i * d + c], b[static_cast<std::size_t>(perm[i]) * d + c]);
}

TEST(AtomInit, CompositionOracle) {
  Fixture f;
  const auto feat = f.feat();
  Tensor gpe = global_position_embedding(feat, f.w);
  Tensor a = atom_init(feat, gpe, f.w, 1e-5);
  // Independent recomputation: onehot @ W + b, + gpe, then row layer norm.
  const std::size_t n = f.g.size(), d = f.config.d;
  const auto W = f.w.atom_linear.w.values();
  const auto B = f.w.atom_linear.b.values();
  const auto gamma = f.w.atom_ln_gamma.values(), beta = f.w.atom_ln_beta.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> h(d);
    const std::size_t t = static_cast<std::size_t>(f.g.atom_types[i]);
    for (std::size_t c = 0; c < d; ++c) h[c] = W[t * d + c] + B[c] + gpe[i * d + c];
    double mean = 0, var = 0;
    for (double x : h) mean += x;
    mean /= static_cast<double>(d);
    for (double x : h) var += (x - mean) * (x - mean);
    var /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double expect = (h[c] - mean) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
      EXPECT_NEAR(a[i * d + c], expect, 1e-12);
    }
  }
}

TEST(PairInit, ZeroPartsAndWidthMismatch) {
  Tensor spd = random_tensor({3, 3, 2}, 1), edge = random_tensor({3, 3, 2}, 2);
  Tensor zero3d = Tensor::zeros({3, 3, 4});
  Tensor p = pair_init(spd, edge, zero3d);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(p[i * 4 + 0], spd[i * 2 + 0]);
    EXPECT_EQ(p[i * 4 + 1], spd[i * 2 + 1]);
    EXPECT_EQ(p[i * 4 + 2], edge[i * 2 + 0]);
    EXPECT_EQ(p[i * 4 + 3], edge[i * 2 + 1]);
  }
  Tensor phi = random_tensor({3, 3, 4}, 3);
  Tensor q = pair_init(Tensor::zeros({3, 3, 2}), Tensor::zeros({3, 3, 2}), phi);
  for (std::size_t i = 0; i < phi.size(); ++i) EXPECT_EQ(q[i], phi[i]);
  EXPECT_THROW((void)pair_init(spd, edge, random_tensor({3, 3, 6}, 4)), DimensionError);
}

TEST(PairInit, CompositionOracle) {
  Fixture f;
  const auto feat = f.feat();
  Tensor spd = spd_embedding(feat, f.w), edge = edge_projection(feat, f.w);
  Tensor phi = gaussian_pair_features(feat, f.w.basis);
  Tensor p = pair_init(spd, edge, phi);
  const std::size_t n = f.g.size(), half = f.config.d_pair / 2, c = f.config.d_pair;
  const auto table = f.w.spd_table.values(), wedge = f.w.w_edge.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t pij = i * n + j;
      for (std::size_t k = 0; k < half; ++k) {
        const double s = table[static_cast<std::size_t>(feat.spd_index[pij]) * half + k];
        double e = 0;
        for (std::size_t b = 0; b < kBondTypeCount; ++b) e += feat.edge_path[pij * kBondTypeCount + b] * wedge[b * half + k];
        EXPECT_NEAR(p[pij * c + k], s + phi[pij * c + k], 1e-12);
        EXPECT_NEAR(p[pij * c + half + k], e + phi[pij * c + half + k], 1e-12);
      }
    }
  }
}

TEST(Featurize, CoordinateCountMismatch) {
  Fixture f;
  std::vector<Vec3> short_coords(f.g.coords.begin(), f.g.coords.end() - 1);
  EXPECT_THROW((void)featurize(f.g, short_coords, f.config), DimensionError);
}
