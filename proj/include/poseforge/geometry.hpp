#pragma once

// Pose evaluation and plausibility correction.

#include <array>
#include <span>
#include <vector>

#include "poseforge/molio.hpp"

namespace poseforge {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct RigidTransform {
  Mat3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation{0, 0, 0};
  Vec3 apply(const Vec3& p) const;
  std::vector<Vec3> apply(std::span<const Vec3> points) const;
};

double determinant(const Mat3& m);

// No superposition: pocket-frame docking RMSD.
double rmsd(std::span<const Vec3> a, std::span<const Vec3> b);

// Proper rotation + translation minimizing RMSD(R p + t, q). Throws
// DegeneracyError for fewer than 3 points or (near-)collinear sets.
RigidTransform kabsch(std::span<const Vec3> p, std::span<const Vec3> q);

// Reference conformer rigidly fitted onto the predicted coordinates.
std::vector<Vec3> pcf_correct(std::span<const Vec3> pred, const MoleculeGraph& reference);

// Bondi radii; unknown elements fall back to carbon.
double vdw_radius(int element);

struct EmParams {
  double step = 1e-3;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-10;  // stop when an accepted step lowers E by less
  double k_bond = 100.0;
  double k_angle = 10.0;
  double k_clash = 50.0;
  double vdw_scale = 0.8;
};

struct EmResult {
  std::vector<Vec3> coords;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Restraint energy of ligand coordinates against the reference geometry of
// `ligand` (its own coords) and a rigid pocket. Ligand pairs separated by
// three bonds or fewer are exempt from the clash term.
class EmEnergy {
 public:
  EmEnergy(const MoleculeGraph& ligand, const MoleculeGraph& pocket, const EmParams& params);
  double energy(std::span<const Vec3> x) const;
  double energy_and_gradient(std::span<const Vec3> x, std::vector<Vec3>& grad) const;

 private:
  struct BondTerm { int i, j; double l0; };
  struct AngleTerm { int i, j, k; double theta0; };
  struct ClashTerm { int i, j; double r_min; };           // ligand-ligand
  struct PocketTerm { int i; Vec3 q; double r_min; };     // ligand-pocket
  std::vector<BondTerm> bonds_;
  std::vector<AngleTerm> angles_;
  std::vector<ClashTerm> clashes_;
  std::vector<PocketTerm> pocket_;
  EmParams params_;
};

// Gradient descent with backtracking on EmEnergy, starting from `pose`.
EmResult em_minimize(std::span<const Vec3> pose, const MoleculeGraph& ligand,
                     const MoleculeGraph& pocket, const EmParams& params = {});

struct FitParams {
  std::size_t iterations = 500;
  double step = 0.01;
};

// Minimizes sum (|P_i - P_j| - D_ij)^2 + sum (|P_i - Q_k| - E_ik)^2 over the
// ligand coordinates, starting from `init`. Returns the best iterate.
std::vector<Vec3> distance_fit(std::span<const double> d_intra, std::span<const double> d_inter,
                               std::span<const Vec3> init, std::span<const Vec3> pocket,
                               const FitParams& params = {});

double distance_fit_objective(std::span<const double> d_intra, std::span<const double> d_inter,
                              std::span<const Vec3> x, std::span<const Vec3> pocket);

inline constexpr double kDistanceRatio = 0.75;
inline constexpr double kOverlapRatio = 0.8;

struct PlausibilityReport {
  double bond_length_mae = 0.0;
  double bond_angle_mae = 0.0;  // radians
  double min_intermolecular_distance = 0.0;
  std::size_t clash_count = 0;  // ligand-pocket pairs closer than 0.75 x vdW sum
  bool volume_overlap_flag = false;
  bool pass_distance = true;
  bool pass_overlap = true;
};

// Bond lengths and angles are compared against `ligand.coords`.
PlausibilityReport plausibility_report(std::span<const Vec3> pose, const MoleculeGraph& ligand,
                                       const MoleculeGraph& pocket);

std::string to_json(const PlausibilityReport& r);

// Stand-in for an external force-field relaxation: returns the pose unchanged.
std::vector<Vec3> ff_postprocess(std::span<const Vec3> pose);

}  // namespace poseforge
