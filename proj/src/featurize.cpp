#include "poseforge/featurize.hpp"

#include <cmath>

namespace poseforge {

using ag::Tensor;

int type_pair_index(int a, int b) {
  if (a > b) std::swap(a, b);
  const int v = static_cast<int>(kElementCount);
  return a * v - a * (a - 1) / 2 + (b - a);
}

std::vector<double> gpe_sinusoids(std::span<const Vec3> coords, std::size_t axis_width) {
  const std::size_t width = 3 * axis_width;
  std::vector<double> out(coords.size() * width);
  for (std::size_t n = 0; n < coords.size(); ++n) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const double p = coords[n][axis];
      if (!std::isfinite(p)) throw ContractError("non-finite coordinate in position embedding");
      for (std::size_t i = 0; i < axis_width; ++i) {
        const double wavelength =
            std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(axis_width));
        const double arg = p / wavelength;
        out[n * width + axis * axis_width + i] = (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
      }
    }
  }
  return out;
}

Featurization featurize(const MoleculeGraph& g, std::span<const Vec3> coords,
                        const ModelConfig& config) {
  const std::size_t n = g.size();
  if (coords.size() != n) throw DimensionError("featurize: coordinate count differs from atom count");
  Featurization f;
  f.n = n;
  f.atom_onehot.assign(n * kElementCount, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    f.atom_onehot[a * kElementCount + static_cast<std::size_t>(g.atom_types[a])] = 1.0;
  }
  f.gpe_sinusoids = gpe_sinusoids(coords, config.gpe_axis_width);
  const PathFeatures pf = path_features(g);
  f.spd_raw = pf.spd;
  f.edge_path = pf.edge_path;
  f.spd_index.resize(n * n);
  for (std::size_t i = 0; i < n * n; ++i) f.spd_index[i] = spd_bucket(pf.spd[i], config.spd_max);
  f.distances.resize(n * n);
  f.type_pair.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) s += (coords[i][c] - coords[j][c]) * (coords[i][c] - coords[j][c]);
      f.distances[i * n + j] = std::sqrt(s);
      f.type_pair[i * n + j] = type_pair_index(g.atom_types[i], g.atom_types[j]);
    }
  }
  return f;
}

FeaturizerWeights make_featurizer_weights(ParameterStore& store, const std::string& prefix,
                                          const ModelConfig& config) {
  FeaturizerWeights w;
  const std::size_t sin_width = 3 * config.gpe_axis_width;
  w.gpe_mlp.push_back(store.add_linear(prefix + ".gpe0", sin_width, config.d));
  w.gpe_mlp.push_back(store.add_linear(prefix + ".gpe1", config.d, config.d));
  w.atom_linear = store.add_linear(prefix + ".atom", kElementCount, config.d);
  w.atom_ln_gamma = store.add_filled(prefix + ".atom_ln.g", {config.d}, 1.0);
  w.atom_ln_beta = store.add_filled(prefix + ".atom_ln.b", {config.d}, 0.0);
  const std::size_t half = config.d_pair / 2;
  w.spd_table = store.add(prefix + ".spd", {static_cast<std::size_t>(config.spd_max) + 2, half}, 1);
  w.w_edge = store.add(prefix + ".edge", {kBondTypeCount, half}, kBondTypeCount);
  const std::size_t k = config.kernels;
  for (std::size_t i = 0; i < k; ++i) {
    const double mu = k == 1 ? 0.0 : config.kernel_mu_max * static_cast<double>(i) / static_cast<double>(k - 1);
    w.basis.spec.mu.push_back(mu);
    w.basis.spec.sigma.push_back(config.kernel_sigma);
  }
  w.basis.spec.verbatim = config.gaussian_verbatim;
  w.basis.u = store.add_filled(prefix + ".gauss.u", {kTypePairCount}, 1.0);
  w.basis.v = store.add_filled(prefix + ".gauss.v", {kTypePairCount}, 0.0);
  w.basis.w1 = store.add(prefix + ".gauss.w1", {k, k}, k);
  w.basis.w2 = store.add(prefix + ".gauss.w2", {k, config.d_pair}, k);
  return w;
}

Tensor global_position_embedding(const Featurization& f, const FeaturizerWeights& w) {
  const std::size_t width = f.n == 0 ? 0 : f.gpe_sinusoids.size() / f.n;
  Tensor sin = Tensor::constant({f.n, width}, f.gpe_sinusoids);
  return ag::mlp(sin, w.gpe_mlp, ag::Activation::kLeakyRelu);
}

Tensor gaussian_pair_features(const Featurization& f, const GaussianBasis& basis) {
  Tensor k = ag::gaussian_kernels(f.distances, f.type_pair, f.n, f.n, basis.u, basis.v, basis.spec);
  return ag::matmul(ag::leaky_relu(ag::matmul(k, basis.w1)), basis.w2);
}

Tensor atom_init(const Featurization& f, const Tensor& gpe, const FeaturizerWeights& w,
                 double eps) {
  Tensor onehot = Tensor::constant({f.n, kElementCount}, f.atom_onehot);
  Tensor h = ag::linear(onehot, w.atom_linear.w, w.atom_linear.b);
  if (gpe.defined()) h = ag::add(h, gpe);
  return ag::layer_norm(h, w.atom_ln_gamma, w.atom_ln_beta, eps);
}

Tensor spd_embedding(const Featurization& f, const FeaturizerWeights& w) {
  return ag::embedding(w.spd_table, f.spd_index, {f.n, f.n});
}

Tensor edge_projection(const Featurization& f, const FeaturizerWeights& w) {
  Tensor e = Tensor::constant({f.n, f.n, kBondTypeCount}, f.edge_path);
  return ag::matmul(e, w.w_edge);
}

Tensor pair_init(const Tensor& spd_emb, const Tensor& edge_proj, const Tensor& phi3d) {
  if (!spd_emb.defined() || !edge_proj.defined()) return phi3d;
  Tensor two_d = ag::concat({spd_emb, edge_proj}, 2);
  if (two_d.shape() != phi3d.shape()) {
    throw DimensionError("pair_init: 2D features " + ag::shape_str(two_d.shape()) +
                         " do not match 3D features " + ag::shape_str(phi3d.shape()));
  }
  return ag::add(two_d, phi3d);
}

}  // namespace poseforge
