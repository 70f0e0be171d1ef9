#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poseforge/errors.hpp"

namespace poseforge {

using Vec3 = std::array<double, 3>;

enum class BondType : int { kSingle = 0, kDouble = 1, kTriple = 2, kAromatic = 3 };
inline constexpr std::size_t kBondTypeCount = 4;

// Element vocabulary; everything else that is a real element maps to kUnknown.
enum class Element : int { C, N, O, S, P, F, Cl, Br, I, B, Se, kUnknown };
inline constexpr std::size_t kElementCount = 12;

std::string_view element_symbol(int type);
// Vocabulary index for a periodic-table symbol (case-insensitive on the
// second letter); nullopt if `symbol` is not an element at all.
std::optional<int> element_index(std::string_view symbol);
bool is_hydrogen_symbol(std::string_view symbol);

struct Bond {
  int i = 0;
  int j = 0;
  BondType type = BondType::kSingle;
  bool operator==(const Bond&) const = default;
};

struct MoleculeGraph {
  std::string name;
  std::vector<int> atom_types;
  std::vector<Vec3> coords;
  std::vector<Bond> bonds;
  bool is_pocket = false;

  std::size_t size() const { return atom_types.size(); }
  bool operator==(const MoleculeGraph&) const = default;

  // Throws ContractError on a broken invariant (bond range, self/duplicate
  // bonds, non-finite coordinates, disconnected ligand).
  void validate() const;
  // Neighbour lists sorted by atom index, with the bond type of each edge.
  std::vector<std::vector<std::pair<int, BondType>>> adjacency() const;
};

bool is_connected(const MoleculeGraph& g);

// SDF / MOL V2000. Hydrogens are dropped and bond indices remapped.
MoleculeGraph parse_ligand_sdf(std::string_view text);

struct SdfRecord {
  std::optional<MoleculeGraph> graph;
  std::string id;
  std::string error;  // set when the record failed to parse
  int first_line = 0;
};
// Splits a multi-record SDF on "$$$$" and parses every record independently;
// failures are reported per record.
std::vector<SdfRecord> parse_sdf_library(std::string_view text);

std::string write_sdf(const MoleculeGraph& g);

// Heavy atoms of residues with at least one atom within `radius` of any point
// of `centers`. Pocket bonds are inferred from interatomic distance.
MoleculeGraph parse_pocket_pdb(std::string_view text, std::span<const Vec3> centers,
                               double radius);
MoleculeGraph parse_pocket_pdb(std::string_view text, const Vec3& center, double radius);

// Minimal PDB writer (HETATM records, one residue per atom) used for synthetic pockets.
std::string write_pdb(const MoleculeGraph& g);

inline constexpr double kCovalentBondCutoff = 1.9;
void infer_bonds_by_distance(MoleculeGraph& g, double cutoff = kCovalentBondCutoff);

// {"atoms":[{"element":"C","xyz":[x,y,z]}],"bonds":[[i,j,"single"]]}
std::string to_json(const MoleculeGraph& g);
MoleculeGraph from_json(std::string_view text);

// ---- graph topology features ----

inline constexpr int kUnreachable = -1;

struct PathFeatures {
  std::size_t n = 0;
  std::vector<int> spd;              // n*n, kUnreachable when disconnected
  std::vector<double> edge_path;     // n*n*kBondTypeCount
};

// All-pairs unweighted BFS distances.
std::vector<int> shortest_path_distances(const MoleculeGraph& g);

// Mean bond-type one-hot along the shortest path between i and j. When several
// shortest paths exist the mean is averaged uniformly over all of them, so the
// result does not depend on atom numbering.
std::vector<double> edge_path_features(const MoleculeGraph& g, std::span<const int> spd);

PathFeatures path_features(const MoleculeGraph& g);

// Embedding index of a raw distance: min(spd, spd_max), spd_max + 1 when unreachable.
int spd_bucket(int spd, int spd_max);

std::string_view bond_type_name(BondType t);

}  // namespace poseforge
