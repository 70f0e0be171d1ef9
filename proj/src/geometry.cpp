#include "poseforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace poseforge {

namespace {

double dist(const Vec3& a, const Vec3& b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

double angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  Eigen::Vector3d u(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
  Eigen::Vector3d v(c[0] - b[0], c[1] - b[1], c[2] - b[2]);
  const double cosv = u.dot(v) / (u.norm() * v.norm());
  return std::acos(std::clamp(cosv, -1.0, 1.0));
}

Eigen::Matrix3Xd to_matrix(std::span<const Vec3> p) {
  Eigen::Matrix3Xd m(3, p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m.col(static_cast<Eigen::Index>(i)) << p[i][0], p[i][1], p[i][2];
  return m;
}

void require_not_collinear(const Eigen::Matrix3Xd& centered, const char* which) {
  Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto s = svd.singularValues();
  if (s(0) < 1e-8 || s(1) < 1e-6 * s(0)) {
    throw DegeneracyError(std::string("kabsch: ") + which + " points are coincident or collinear");
  }
}

// Angle triples (i, j, k) with j bonded to both i and k, i < k.
std::vector<std::array<int, 3>> angle_triples(const MoleculeGraph& g) {
  std::vector<std::array<int, 3>> out;
  const auto adj = g.adjacency();
  for (std::size_t j = 0; j < adj.size(); ++j) {
    for (std::size_t a = 0; a < adj[j].size(); ++a) {
      for (std::size_t b = a + 1; b < adj[j].size(); ++b) {
        out.push_back({adj[j][a].first, static_cast<int>(j), adj[j][b].first});
      }
    }
  }
  return out;
}

}  // namespace

Vec3 RigidTransform::apply(const Vec3& p) const {
  Vec3 out{};
  for (int r = 0; r < 3; ++r) {
    out[r] = translation[r];
    for (int c = 0; c < 3; ++c) out[r] += rotation[r][c] * p[c];
  }
  return out;
}

std::vector<Vec3> RigidTransform::apply(std::span<const Vec3> points) const {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(apply(p));
  return out;
}

double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

double rmsd(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) {
    throw ContractError("rmsd: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                        " atoms");
  }
  if (a.empty()) throw ContractError("rmsd: empty coordinate sets");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < 3; ++c) s += (a[i][c] - b[i][c]) * (a[i][c] - b[i][c]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

RigidTransform kabsch(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.size() != q.size()) throw ContractError("kabsch: point counts differ");
  if (p.size() < 3) throw DegeneracyError("kabsch: need at least 3 points");
  Eigen::Matrix3Xd P = to_matrix(p), Q = to_matrix(q);
  const Eigen::Vector3d cp = P.rowwise().mean(), cq = Q.rowwise().mean();
  P.colwise() -= cp;
  Q.colwise() -= cq;
  require_not_collinear(P, "source");
  require_not_collinear(Q, "target");
  const Eigen::Matrix3d h = P * Q.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  const Eigen::Vector3d t = cq - r * cp;
  RigidTransform out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.rotation[i][j] = r(i, j);
    out.translation[i] = t(i);
  }
  return out;
}

std::vector<Vec3> pcf_correct(std::span<const Vec3> pred, const MoleculeGraph& reference) {
  return kabsch(reference.coords, pred).apply(reference.coords);
}

double vdw_radius(int element) {
  static constexpr std::array<double, kElementCount> kRadii{
      1.70,  // C
      1.55,  // N
      1.52,  // O
      1.80,  // S
      1.80,  // P
      1.47,  // F
      1.75,  // Cl
      1.85,  // Br
      1.98,  // I
      1.92,  // B
      1.90,  // Se
      1.70,  // unknown
  };
  if (element < 0 || element >= static_cast<int>(kElementCount)) return kRadii[0];
  return kRadii[static_cast<std::size_t>(element)];
}

EmEnergy::EmEnergy(const MoleculeGraph& ligand, const MoleculeGraph& pocket,
                   const EmParams& params)
    : params_(params) {
  const auto& ref = ligand.coords;
  for (const auto& b : ligand.bonds) bonds_.push_back({b.i, b.j, dist(ref[b.i], ref[b.j])});
  for (const auto& t : angle_triples(ligand)) {
    angles_.push_back({t[0], t[1], t[2], angle(ref[t[0]], ref[t[1]], ref[t[2]])});
  }
  const auto spd = shortest_path_distances(ligand);
  const std::size_t n = ligand.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int s = spd[i * n + j];
      if (s != kUnreachable && s <= 3) continue;
      const double r_min =
          params.vdw_scale * (vdw_radius(ligand.atom_types[i]) + vdw_radius(ligand.atom_types[j]));
      clashes_.push_back({static_cast<int>(i), static_cast<int>(j), r_min});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < pocket.size(); ++k) {
      const double r_min =
          params.vdw_scale * (vdw_radius(ligand.atom_types[i]) + vdw_radius(pocket.atom_types[k]));
      pocket_.push_back({static_cast<int>(i), pocket.coords[k], r_min});
    }
  }
}

double EmEnergy::energy(std::span<const Vec3> x) const {
  std::vector<Vec3> unused;
  return energy_and_gradient(x, unused);
}

double EmEnergy::energy_and_gradient(std::span<const Vec3> x, std::vector<Vec3>& grad) const {
  grad.assign(x.size(), Vec3{0, 0, 0});
  double e = 0.0;
  auto pull = [&](int i, const Vec3& other, double coef) {
    // adds coef * d|x_i - other| / dx_i
    const double r = dist(x[i], other);
    if (r < 1e-12) return;
    for (int c = 0; c < 3; ++c) grad[i][c] += coef * (x[i][c] - other[c]) / r;
  };
  for (const auto& b : bonds_) {
    const double l = dist(x[b.i], x[b.j]);
    const double dl = l - b.l0;
    e += params_.k_bond * dl * dl;
    pull(b.i, x[b.j], 2.0 * params_.k_bond * dl);
    pull(b.j, x[b.i], 2.0 * params_.k_bond * dl);
  }
  for (const auto& a : angles_) {
    Eigen::Vector3d u(x[a.i][0] - x[a.j][0], x[a.i][1] - x[a.j][1], x[a.i][2] - x[a.j][2]);
    Eigen::Vector3d v(x[a.k][0] - x[a.j][0], x[a.k][1] - x[a.j][1], x[a.k][2] - x[a.j][2]);
    const double nu = u.norm(), nv = v.norm();
    if (nu < 1e-12 || nv < 1e-12) continue;
    const double cosv = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    const double theta = std::acos(cosv);
    const double dtheta = theta - a.theta0;
    e += params_.k_angle * dtheta * dtheta;
    const double sinv = std::sqrt(std::max(1.0 - cosv * cosv, 1e-12));
    const double coef = -2.0 * params_.k_angle * dtheta / sinv;  // dE/dcos
    const Eigen::Vector3d dcos_du = (v / (nu * nv)) - cosv * u / (nu * nu);
    const Eigen::Vector3d dcos_dv = (u / (nu * nv)) - cosv * v / (nv * nv);
    for (int c = 0; c < 3; ++c) {
      grad[a.i][c] += coef * dcos_du(c);
      grad[a.k][c] += coef * dcos_dv(c);
      grad[a.j][c] -= coef * (dcos_du(c) + dcos_dv(c));
    }
  }
  for (const auto& t : clashes_) {
    const double r = dist(x[t.i], x[t.j]);
    if (r >= t.r_min) continue;
    const double over = t.r_min - r;
    e += params_.k_clash * over * over;
    pull(t.i, x[t.j], -2.0 * params_.k_clash * over);
    pull(t.j, x[t.i], -2.0 * params_.k_clash * over);
  }
  for (const auto& t : pocket_) {
    const double r = dist(x[t.i], t.q);
    if (r >= t.r_min) continue;
    const double over = t.r_min - r;
    e += params_.k_clash * over * over;
    pull(t.i, t.q, -2.0 * params_.k_clash * over);
  }
  return e;
}

EmResult em_minimize(std::span<const Vec3> pose, const MoleculeGraph& ligand,
                     const MoleculeGraph& pocket, const EmParams& params) {
  if (pose.size() != ligand.size()) throw ContractError("em_minimize: pose/ligand size mismatch");
  const EmEnergy energy(ligand, pocket, params);
  EmResult r;
  r.coords.assign(pose.begin(), pose.end());
  std::vector<Vec3> grad, trial(pose.size()), trial_grad;
  double e = energy.energy_and_gradient(r.coords, grad);
  r.initial_energy = e;
  double step = params.step;
  for (; r.iterations < params.max_iterations; ++r.iterations) {
    if (e == 0.0) {
      r.converged = true;
      break;
    }
    bool accepted = false;
    while (step > 1e-14) {
      for (std::size_t i = 0; i < trial.size(); ++i)
        for (int c = 0; c < 3; ++c) trial[i][c] = r.coords[i][c] - step * grad[i][c];
      const double et = energy.energy_and_gradient(trial, trial_grad);
      if (et < e) {
        const double gain = e - et;
        r.coords.swap(trial);
        grad.swap(trial_grad);
        e = et;
        step *= 1.2;
        accepted = true;
        if (gain < params.tolerance) r.converged = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) r.converged = true;
    if (r.converged) break;
  }
  r.final_energy = e;
  return r;
}

double distance_fit_objective(std::span<const double> d_intra, std::span<const double> d_inter,
                              std::span<const Vec3> x, std::span<const Vec3> pocket) {
  const std::size_t n = x.size(), m = pocket.size();
  double f = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = dist(x[i], x[j]) - d_intra[i * n + j];
      f += r * r;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double r = dist(x[i], pocket[k]) - d_inter[i * m + k];
      f += r * r;
    }
  }
  return f;
}

namespace {

double fit_value_and_gradient(std::span<const double> d_intra, std::span<const double> d_inter,
                              std::span<const Vec3> x, std::span<const Vec3> pocket,
                              std::vector<Vec3>& g) {
  const std::size_t n = x.size(), m = pocket.size();
  g.assign(n, Vec3{0, 0, 0});
  double f = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = dist(x[i], x[j]);
      const double res = r - d_intra[i * n + j];
      f += res * res;
      if (r < 1e-12) continue;
      // the (i, j) and (j, i) terms both touch x_i and x_j
      for (int c = 0; c < 3; ++c) {
        const double dc = 2.0 * res * (x[i][c] - x[j][c]) / r;
        g[i][c] += dc;
        g[j][c] -= dc;
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double r = dist(x[i], pocket[k]);
      const double res = r - d_inter[i * m + k];
      f += res * res;
      if (r < 1e-12) continue;
      for (int c = 0; c < 3; ++c) g[i][c] += 2.0 * res * (x[i][c] - pocket[k][c]) / r;
    }
  }
  return f;
}

}  // namespace

std::vector<Vec3> distance_fit(std::span<const double> d_intra, std::span<const double> d_inter,
                               std::span<const Vec3> init, std::span<const Vec3> pocket,
                               const FitParams& params) {
  const std::size_t n = init.size(), m = pocket.size();
  if (d_intra.size() != n * n || d_inter.size() != n * m) {
    throw ContractError("distance_fit: distance matrices do not match " + std::to_string(n) +
                        " ligand / " + std::to_string(m) + " pocket atoms");
  }
  std::vector<Vec3> x(init.begin(), init.end()), trial(n), g, tg;
  double f = fit_value_and_gradient(d_intra, d_inter, x, pocket, g);
  double step = params.step;
  for (std::size_t it = 0; it < params.iterations; ++it) {
    double gg = 0.0;
    for (const auto& v : g) gg += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if (gg == 0.0) break;
    // Armijo backtracking; the iteration budget counts outer steps
    bool accepted = false;
    for (int tries = 0; tries < 30; ++tries) {
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) trial[i][c] = x[i][c] - step * g[i][c];
      const double ft = fit_value_and_gradient(d_intra, d_inter, trial, pocket, tg);
      if (ft <= f - 1e-4 * step * gg) {
        x.swap(trial);
        g.swap(tg);
        f = ft;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return x;
}

PlausibilityReport plausibility_report(std::span<const Vec3> pose, const MoleculeGraph& ligand,
                                       const MoleculeGraph& pocket) {
  if (pose.size() != ligand.size()) {
    throw ContractError("plausibility_report: pose/ligand size mismatch");
  }
  PlausibilityReport r;
  const auto& ref = ligand.coords;
  if (!ligand.bonds.empty()) {
    double s = 0.0;
    for (const auto& b : ligand.bonds) s += std::abs(dist(pose[b.i], pose[b.j]) - dist(ref[b.i], ref[b.j]));
    r.bond_length_mae = s / static_cast<double>(ligand.bonds.size());
  }
  const auto triples = angle_triples(ligand);
  if (!triples.empty()) {
    double s = 0.0;
    for (const auto& t : triples) {
      s += std::abs(angle(pose[t[0]], pose[t[1]], pose[t[2]]) - angle(ref[t[0]], ref[t[1]], ref[t[2]]));
    }
    r.bond_angle_mae = s / static_cast<double>(triples.size());
  }
  r.min_intermolecular_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pose.size(); ++i) {
    const double ri = vdw_radius(ligand.atom_types[i]);
    for (std::size_t k = 0; k < pocket.size(); ++k) {
      const double rk = vdw_radius(pocket.atom_types[k]);
      const double d = dist(pose[i], pocket.coords[k]);
      r.min_intermolecular_distance = std::min(r.min_intermolecular_distance, d);
      if (d < kDistanceRatio * (ri + rk)) ++r.clash_count;
      if (d < kOverlapRatio * rk) r.volume_overlap_flag = true;
    }
  }
  if (pocket.size() == 0) r.min_intermolecular_distance = 0.0;
  r.pass_distance = r.clash_count == 0;
  r.pass_overlap = !r.volume_overlap_flag;
  return r;
}

std::string to_json(const PlausibilityReport& r) {
  nlohmann::json j{{"bond_length_mae", r.bond_length_mae},
                   {"bond_angle_mae", r.bond_angle_mae},
                   {"min_intermolecular_distance", r.min_intermolecular_distance},
                   {"clash_count", r.clash_count},
                   {"volume_overlap_flag", r.volume_overlap_flag},
                   {"pass_distance", r.pass_distance},
                   {"pass_overlap", r.pass_overlap}};
  return j.dump();
}

std::vector<Vec3> ff_postprocess(std::span<const Vec3> pose) {
  return {pose.begin(), pose.end()};
}

}  // namespace poseforge
