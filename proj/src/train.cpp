#include "poseforge/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "poseforge/geometry.hpp"
#include "poseforge/kernels.hpp"

namespace poseforge {

using ag::Tensor;

// ---------------------------------------------------------------- synthesis

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> nd;
  for (;;) {
    Vec3 v{nd(rng), nd(rng), nd(rng)};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-6) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 axpy(const Vec3& a, double s, const Vec3& u) {
  return {a[0] + s * u[0], a[1] + s * u[1], a[2] + s * u[2]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Rotation by `angle` about unit `axis` (Rodrigues).
Mat3 axis_angle(const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {{{t * x * x + c, t * x * y - s * z, t * x * z + s * y},
           {t * x * y + s * z, t * y * y + c, t * y * z - s * x},
           {t * x * z - s * y, t * y * z + s * x, t * z * z + c}}};
}

Mat3 random_rotation(Rng& rng) {
  // Uniform over SO(3) via a random unit quaternion.
  std::normal_distribution<double> nd;
  double q[4];
  double n = 0.0;
  do {
    n = 0.0;
    for (double& x : q) {
      x = nd(rng);
      n += x * x;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

void rotate_about(std::vector<Vec3>& pts, const Mat3& r, const Vec3& center) {
  for (auto& p : pts) {
    const Vec3 d = sub(p, center);
    for (int i = 0; i < 3; ++i) p[i] = center[i] + r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2];
  }
}

int pick_element(Rng& rng, bool aromatic) {
  const double u = uniform(rng, 0.0, 1.0);
  using E = Element;
  if (aromatic) return static_cast<int>(u < 0.85 ? E::C : E::N);
  if (u < 0.64) return static_cast<int>(E::C);
  if (u < 0.78) return static_cast<int>(E::N);
  if (u < 0.91) return static_cast<int>(E::O);
  if (u < 0.95) return static_cast<int>(E::S);
  if (u < 0.975) return static_cast<int>(E::F);
  return static_cast<int>(E::Cl);
}

double bond_length(Rng& rng, BondType t) {
  switch (t) {
    case BondType::kSingle: return uniform(rng, 1.45, 1.6);
    case BondType::kDouble: return uniform(rng, 1.3, 1.4);
    case BondType::kTriple: return 1.3;
    case BondType::kAromatic: return 1.4;
  }
  return 1.5;
}

constexpr std::size_t kMaxDegree = 3;
constexpr double kNonbondedMin = 2.2;

std::optional<MoleculeGraph> grow_ligand(Rng& rng, std::size_t n, const SynthParams& p) {
  MoleculeGraph g;
  std::vector<std::size_t> degree;
  std::vector<char> in_ring;
  Vec3 ring_center{0, 0, 0};
  if (n >= 6 && uniform(rng, 0.0, 1.0) < p.ring_probability) {
    const std::size_t size = (n >= 7 && uniform(rng, 0.0, 1.0) < 0.6) ? 6 : 5;
    const BondType type = size == 6 ? BondType::kAromatic : BondType::kSingle;
    const double edge = size == 6 ? 1.4 : 1.5;
    const double radius = edge / (2.0 * std::sin(std::numbers::pi / static_cast<double>(size)));
    for (std::size_t k = 0; k < size; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
      g.coords.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
      g.atom_types.push_back(pick_element(rng, type == BondType::kAromatic));
      degree.push_back(2);
      in_ring.push_back(1);
    }
    for (std::size_t k = 0; k < size; ++k) {
      g.bonds.push_back({static_cast<int>(k), static_cast<int>((k + 1) % size), type});
    }
  } else {
    g.coords.push_back({0, 0, 0});
    g.atom_types.push_back(pick_element(rng, false));
    degree.push_back(0);
    in_ring.push_back(0);
  }
  while (g.size() < n) {
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      const std::size_t parent = uniform_int(rng, 0, g.size() - 1);
      if (degree[parent] >= kMaxDegree) continue;
      const double u = uniform(rng, 0.0, 1.0);
      BondType type = u < 0.75 ? BondType::kSingle : (u < 0.95 ? BondType::kDouble : BondType::kTriple);
      if (in_ring[parent] && type == BondType::kTriple) type = BondType::kSingle;
      const double len = bond_length(rng, type);
      Vec3 dir = random_unit(rng);
      if (in_ring[parent]) {
        Vec3 radial = sub(g.coords[parent], ring_center);
        const double rn = norm(radial);
        const Vec3 noise = random_unit(rng);
        for (int c = 0; c < 3; ++c) dir[c] = radial[c] / rn + 0.25 * noise[c];
        const double dn = norm(dir);
        for (double& x : dir) x /= dn;
      }
      const Vec3 cand = axpy(g.coords[parent], len, dir);
      bool ok = true;
      for (std::size_t a = 0; a < g.size() && ok; ++a) {
        if (a == parent) continue;
        if (norm(sub(cand, g.coords[a])) < kNonbondedMin) ok = false;
      }
      for (const auto& b : g.bonds) {
        if (!ok) break;
        const int other = b.i == static_cast<int>(parent) ? b.j : (b.j == static_cast<int>(parent) ? b.i : -1);
        if (other < 0) continue;
        const Vec3 u1 = sub(g.coords[other], g.coords[parent]);
        if (dot(u1, dir) / norm(u1) > std::cos(100.0 * std::numbers::pi / 180.0)) ok = false;
      }
      if (!ok) continue;
      g.coords.push_back(cand);
      g.atom_types.push_back(pick_element(rng, false));
      g.bonds.push_back({static_cast<int>(parent), static_cast<int>(g.size() - 1), type});
      ++degree[parent];
      degree.push_back(1);
      in_ring.push_back(0);
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  return g;
}

bool is_polar_anchor(const MoleculeGraph& g, std::size_t atom) {
  for (const auto& b : g.bonds) {
    if ((b.i == static_cast<int>(atom) || b.j == static_cast<int>(atom)) &&
        b.type != BondType::kSingle) {
      return true;
    }
  }
  return false;
}

std::optional<MoleculeGraph> build_pocket(Rng& rng, const MoleculeGraph& lig, std::size_t m) {
  MoleculeGraph pocket;
  pocket.is_pocket = true;
  const Vec3 open = random_unit(rng);
  using E = Element;
  for (std::size_t k = 0; k < m; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      const std::size_t anchor = uniform_int(rng, 0, lig.size() - 1);
      const bool polar_anchor = is_polar_anchor(lig, anchor);
      const double u = uniform(rng, 0.0, 1.0);
      int element;
      if (polar_anchor) element = static_cast<int>(u < 0.45 ? E::O : (u < 0.8 ? E::N : E::C));
      else element = static_cast<int>(u < 0.8 ? E::C : (u < 0.9 ? E::S : E::N));
      const bool polar_pair = polar_anchor && element != static_cast<int>(E::C);
      const double r = polar_pair ? uniform(rng, 3.0, 3.4) : uniform(rng, 3.6, 4.5);
      const Vec3 dir = random_unit(rng);
      if (dot(dir, open) > 0.2) continue;
      const Vec3 cand = axpy(lig.coords[anchor], r, dir);
      bool ok = true;
      for (const auto& x : lig.coords) {
        if (norm(sub(cand, x)) < 2.9) {
          ok = false;
          break;
        }
      }
      for (const auto& q : pocket.coords) {
        if (!ok) break;
        if (norm(sub(cand, q)) < 2.4) ok = false;
      }
      if (!ok) continue;
      pocket.coords.push_back(cand);
      pocket.atom_types.push_back(element);
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  infer_bonds_by_distance(pocket);
  return pocket;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<double> distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b) {
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = norm(sub(a[i], b[j]));
  return out;
}

SyntheticComplex synth_complex(std::uint64_t seed, const SynthParams& p) {
  if (p.n_min < 3 || p.n_max > 24 || p.n_min > p.n_max || p.m_min < 6 || p.m_max > 48 ||
      p.m_min > p.m_max) {
    throw ContractError(fmt::format("synth_complex: sizes N in [{},{}], M in [{},{}] outside 3..24 / 6..48",
                                    p.n_min, p.n_max, p.m_min, p.m_max));
  }
  Rng rng(splitmix64(seed));
  for (int attempt = 0; attempt < 50; ++attempt) {
    const std::size_t n = uniform_int(rng, p.n_min, p.n_max);
    const std::size_t m = uniform_int(rng, p.m_min, p.m_max);
    auto lig = grow_ligand(rng, n, p);
    if (!lig) continue;
    // planted pose: random orientation, centroid at a random offset
    rotate_about(lig->coords, random_rotation(rng), centroid(lig->coords));
    const Vec3 c = centroid(lig->coords);
    const Vec3 offset = random_unit(rng);
    const double shift = uniform(rng, 0.0, p.frame_offset);
    for (auto& x : lig->coords)
      for (int k = 0; k < 3; ++k) x[k] += shift * offset[k] - c[k];
    auto pocket = build_pocket(rng, *lig, m);
    if (!pocket) continue;

    SyntheticComplex out;
    out.gt_coords = lig->coords;
    const double angle = uniform(rng, 0.0, p.max_rotation_deg) * std::numbers::pi / 180.0;
    rotate_about(lig->coords, axis_angle(random_unit(rng), angle), centroid(lig->coords));
    const Vec3 jitter = random_unit(rng);
    for (auto& x : lig->coords)
      for (int k = 0; k < 3; ++k) x[k] += 5.0 * jitter[k];
    lig->name = fmt::format("synth-{}", seed);
    pocket->name = fmt::format("synth-{}-pocket", seed);
    out.ligand = std::move(*lig);
    out.pocket = std::move(*pocket);
    out.gt_intra = distance_matrix(out.gt_coords, out.gt_coords);
    out.gt_inter = distance_matrix(out.gt_coords, out.pocket.coords);
    const double closest = *std::min_element(out.gt_inter.begin(), out.gt_inter.end());
    if (closest < 2.5 || closest > 5.0) continue;
    out.ligand.validate();
    return out;
  }
  throw GenerationError(fmt::format("synth_complex: no valid complex for seed {} after 50 attempts", seed));
}

std::vector<SyntheticComplex> synth_dataset(std::size_t count, std::uint64_t seed,
                                            const SynthParams& params) {
  std::vector<SyntheticComplex> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_complex(splitmix64(seed) + i, params));
  return out;
}

Split split_dataset(std::vector<SyntheticComplex> data) {
  Split s;
  std::size_t n_val = data.size() / 10;
  if (n_val == 0 && data.size() >= 2) n_val = 1;
  const std::size_t n_train = data.size() - n_val;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (i < n_train ? s.train : s.validation).push_back(std::move(data[i]));
  }
  return s;
}

// ---------------------------------------------------------------- optimizer

void adam_update(std::span<double> x, std::span<const double> g, std::span<double> m,
                 std::span<double> v, std::size_t t, const AdamConfig& c) {
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    x[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
  if (!(config.lr > 0.0)) throw ContractError("learning rate must be positive");
  for (const auto& [_, t] : store.entries()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(ParameterStore& store, const ag::Gradients& grads, double grad_scale) {
  ++t_;
  std::vector<double> g;
  for (std::size_t k = 0; k < store.entries().size(); ++k) {
    Tensor t = store.entries()[k].second;
    if (!grads.has(t)) continue;
    const auto src = grads.of(t);
    g.assign(src.begin(), src.end());
    for (double& x : g) x *= grad_scale;
    adam_update(t.mutable_values(), g, m_[k], v_[k], t_, config_);
  }
}

// ---------------------------------------------------------------- losses

LossTerms compute_losses(const ForwardResult& r, const SyntheticComplex& c, int phase) {
  LossTerms out;
  const DistanceLoss dl = dist_loss(r.distances, c.gt_intra, c.gt_inter);
  out.intradist = dl.intradist;
  out.interdist = dl.interdist;
  out.values.intradist = dl.intradist.item();
  out.values.interdist = dl.interdist.item();
  Tensor total = ag::add(dl.intradist, dl.interdist);
  if (phase == 2) {
    if (!r.has_structure) throw ContractError("phase-2 loss needs the structure module output");
    std::vector<Vec3> gt_local = c.gt_coords;
    for (auto& p : gt_local)
      for (int k = 0; k < 3; ++k) p[k] -= r.origin[k];
    out.coord = coord_loss(r.structure.coords.back(), flatten(gt_local));
    const std::size_t n = r.complex.n_ligand;
    const DdtTable tables[2] = {ddt_true(r.intra_values(), c.gt_intra, n, true),
                                ddt_true(r.inter_values(), c.gt_inter, r.complex.n_pocket, false)};
    const Tensor logits[2] = {r.conf_intra, r.conf_inter};
    const ConfLoss cl = conf_loss(logits, tables);
    out.conf = cl.value;
    out.conf_pairs = cl.pairs;
    out.values.coord = out.coord.item();
    out.values.conf = out.conf.item();
    total = ag::add(ag::add(total, out.coord), ag::scale(out.conf, kConfWeight));
  }
  out.total = total;
  out.values.total = total.item();
  return out;
}

// ---------------------------------------------------------------- training

#define PF_TRAIN_FIELDS(X) \
  X(patience) X(batch_size) X(phase1_steps) X(phase2_steps) X(eval_every) X(clip_norm) X(seed)

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json::object();
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
#define PF_TO(f) j[#f] = c.f;
  PF_TRAIN_FIELDS(PF_TO)
#undef PF_TO
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = it.key() == "lr" || it.key() == "beta1" || it.key() == "beta2" ||
                 it.key() == "adam_eps";
#define PF_KNOWN(f) known = known || it.key() == #f;
    PF_TRAIN_FIELDS(PF_KNOWN)
#undef PF_KNOWN
    if (!known) throw ContractError("unknown train config field '" + it.key() + "'");
  }
  if (j.contains("lr")) j.at("lr").get_to(c.adam.lr);
  if (j.contains("beta1")) j.at("beta1").get_to(c.adam.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(c.adam.beta2);
  if (j.contains("adam_eps")) j.at("adam_eps").get_to(c.adam.eps);
#define PF_FROM(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
  PF_TRAIN_FIELDS(PF_FROM)
#undef PF_FROM
  if (!(c.adam.lr > 0.0)) throw ContractError("lr must be positive");
  if (c.patience < 1) throw ContractError("patience must be at least 1");
  if (c.batch_size < 1) throw ContractError("batch_size must be at least 1");
}

#undef PF_TRAIN_FIELDS

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ContractError("patience must be at least 1");
}

bool EarlyStopping::update(double value) {
  improved_ = value < best_;
  if (improved_) {
    best_ = value;
    bad_ = 0;
    return false;
  }
  ++bad_;
  return bad_ >= patience_;
}

LossBreakdown mean_loss(const DockModel& model, std::span<const SyntheticComplex> data, int phase) {
  ag::NoGradScope no_grad;
  LossBreakdown sum;
  for (const auto& c : data) {
    const LossTerms t = compute_losses(model.forward(c.ligand, c.pocket, phase == 2), c, phase);
    sum.intradist += t.values.intradist;
    sum.interdist += t.values.interdist;
    sum.coord += t.values.coord;
    sum.conf += t.values.conf;
    sum.total += t.values.total;
  }
  const double n = data.empty() ? 1.0 : static_cast<double>(data.size());
  sum.intradist /= n;
  sum.interdist /= n;
  sum.coord /= n;
  sum.conf /= n;
  sum.total /= n;
  return sum;
}

ComplexGradient complex_gradient(const DockModel& model, const SyntheticComplex& c, int phase) {
  ag::Tape tape;
  ag::TapeScope scope(tape);
  const ForwardResult r = model.forward(c.ligand, c.pocket, phase == 2);
  const LossTerms t = compute_losses(r, c, phase);
  if (!std::isfinite(t.values.total)) {
    throw DivergenceError(fmt::format(
        "non-finite phase-{} loss on {}: intradist={} interdist={} coord={} conf={}", phase,
        c.ligand.name, t.values.intradist, t.values.interdist, t.values.coord, t.values.conf));
  }
  return {t.values, ag::compute_gradients(tape, t.total)};
}

namespace {

double grad_norm(const ParameterStore& store, const ag::Gradients& g) {
  double s = 0.0;
  for (const auto& [_, t] : store.entries()) {
    if (!g.has(t)) continue;
    for (double x : g.of(t)) s += x * x;
  }
  return std::sqrt(s);
}

// Per-complex gradients are independent; they run in parallel and are merged
// in batch order so the result does not depend on the thread count.
StepRecord batch_step(DockModel& model, Adam& adam, std::span<const SyntheticComplex> data,
                      const std::vector<std::size_t>& batch, int phase, double clip_norm) {
  std::vector<std::optional<ComplexGradient>> parts(batch.size());
  std::vector<std::string> errors(batch.size());
#pragma omp parallel for schedule(dynamic) if (batch.size() > 1)
  for (std::size_t b = 0; b < batch.size(); ++b) {
    try {
      parts[b] = complex_gradient(model, data[batch[b]], phase);
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DivergenceError(e);
  }
  StepRecord rec;
  rec.phase = phase;
  ag::Gradients total = std::move(parts[0]->grads);
  for (std::size_t b = 1; b < parts.size(); ++b) total.merge(parts[b]->grads);
  for (const auto& p : parts) {
    rec.loss.intradist += p->loss.intradist;
    rec.loss.interdist += p->loss.interdist;
    rec.loss.coord += p->loss.coord;
    rec.loss.conf += p->loss.conf;
    rec.loss.total += p->loss.total;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  rec.loss.intradist *= inv;
  rec.loss.interdist *= inv;
  rec.loss.coord *= inv;
  rec.loss.conf *= inv;
  rec.loss.total *= inv;
  double scale = inv;
  if (clip_norm > 0.0) {
    const double gn = grad_norm(model.params(), total) * inv;
    if (gn > clip_norm) scale *= clip_norm / gn;
  }
  adam.step(model.params(), total, scale);
  return rec;
}

class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::size_t batch, std::uint64_t seed)
      : order_(count), batch_(batch), rng_(seed) {
    for (std::size_t i = 0; i < count; ++i) order_[i] = i;
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < std::min(batch_, order_.size())) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

std::vector<std::vector<double>> snapshot(const ParameterStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& [_, t] : store.entries()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void restore(ParameterStore& store, const std::vector<std::vector<double>>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    Tensor t = store.entries()[k].second;
    std::copy(values[k].begin(), values[k].end(), t.mutable_values().begin());
  }
}

}  // namespace

TrainReport train_phase1(DockModel& model, std::span<const SyntheticComplex> train,
                         const TrainConfig& config, const StepCallback& on_step) {
  TrainReport report;
  if (config.phase1_steps == 0) return report;
  if (train.empty()) throw ContractError("train_phase1: empty training set");
  Adam adam(model.params(), config.adam);
  BatchSampler sampler(train.size(), config.batch_size, config.seed);
  for (std::size_t step = 0; step < config.phase1_steps; ++step) {
    StepRecord rec = batch_step(model, adam, train, sampler.next(), 1, config.clip_norm);
    rec.step = step;
    report.history.push_back(rec);
    if (on_step) on_step(rec);
  }
  report.steps_run = config.phase1_steps;
  return report;
}

TrainReport train_phase2(DockModel& model, std::span<const SyntheticComplex> train,
                         std::span<const SyntheticComplex> validation, const TrainConfig& config,
                         const StepCallback& on_step) {
  TrainReport report;
  if (config.phase2_steps == 0) return report;
  if (train.empty()) throw ContractError("train_phase2: empty training set");
  Adam adam(model.params(), config.adam);
  BatchSampler sampler(train.size(), config.batch_size, config.seed + 1);
  EarlyStopping stopper(config.patience);
  const std::size_t eval_every =
      config.eval_every > 0 ? config.eval_every
                            : std::max<std::size_t>(1, train.size() / config.batch_size);
  std::vector<std::vector<double>> best;
  for (std::size_t step = 0; step < config.phase2_steps; ++step) {
    StepRecord rec = batch_step(model, adam, train, sampler.next(), 2, config.clip_norm);
    rec.step = step;
    report.history.push_back(rec);
    report.steps_run = step + 1;
    if (on_step) on_step(rec);
    if (!validation.empty() && (step + 1) % eval_every == 0) {
      const bool stop = stopper.update(mean_loss(model, validation, 2).total);
      if (stopper.improved()) best = snapshot(model.params());
      if (stop) {
        report.early_stopped = true;
        break;
      }
    }
  }
  if (!best.empty()) {
    restore(model.params(), best);
    report.best_validation = stopper.best();
  }
  return report;
}

StepCallback csv_logger(std::ostream& os) {
  write_loss_header(os);
  return [&os](const StepRecord& r) { write_loss_row(os, r.step, r.phase, r.loss); };
}

}  // namespace poseforge
