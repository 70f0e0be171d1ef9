#include "poseforge/molio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

namespace poseforge {

namespace {

constexpr std::array<std::string_view, kElementCount> kVocab = {
    "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "Se", "UNK"};

// Periodic table symbols; anything outside this list is not an element.
constexpr std::string_view kPeriodic[] = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og", "D",  "T"};

std::string normalize_symbol(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) out.push_back(c);
  }
  if (out.empty()) return out;
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  for (std::size_t i = 1; i < out.size(); ++i) {
    out[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[i])));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view column(std::string_view line, std::size_t begin, std::size_t len) {
  if (begin >= line.size()) return {};
  return line.substr(begin, std::min(len, line.size() - begin));
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<int> to_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == text.size()) break;
    pos = nl + 1;
  }
  return lines;
}

double dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Parses one MOL block starting at lines[first]; line numbers reported are
// 1-based relative to the whole text (first + offset + 1).
MoleculeGraph parse_mol_block(std::span<const std::string_view> lines, int line_base) {
  auto line_no = [&](std::size_t idx) { return line_base + static_cast<int>(idx) + 1; };
  if (lines.size() < 4) throw ParseError("MOL block too short for header and counts line", line_no(lines.size()));
  MoleculeGraph g;
  g.name = std::string(trim(lines[0]));
  const std::string_view counts = lines[3];
  if (counts.find("V3000") != std::string_view::npos) {
    throw ParseError("V3000 MOL blocks are not supported", line_no(3));
  }
  const auto natoms = to_int(column(counts, 0, 3));
  const auto nbonds = to_int(column(counts, 3, 3));
  if (!natoms || !nbonds || *natoms < 0 || *nbonds < 0) {
    throw ParseError("malformed counts line", line_no(3));
  }
  if (lines.size() < 4 + static_cast<std::size_t>(*natoms + *nbonds)) {
    throw ParseError("file ends before atom/bond blocks are complete", line_no(lines.size()));
  }
  std::vector<int> remap(static_cast<std::size_t>(*natoms), -1);
  for (int a = 0; a < *natoms; ++a) {
    const std::size_t idx = 4 + static_cast<std::size_t>(a);
    const std::string_view line = lines[idx];
    auto x = to_double(column(line, 0, 10));
    auto y = to_double(column(line, 10, 10));
    auto z = to_double(column(line, 20, 10));
    const std::string sym = normalize_symbol(column(line, 31, 3));
    if (!x || !y || !z) throw ParseError("malformed atom coordinates", line_no(idx));
    if (sym.empty()) throw ParseError("missing element symbol", line_no(idx));
    if (is_hydrogen_symbol(sym)) continue;
    const auto type = element_index(sym);
    if (!type) throw ParseError("unsupported element '" + sym + "'", line_no(idx));
    remap[static_cast<std::size_t>(a)] = static_cast<int>(g.size());
    g.atom_types.push_back(*type);
    g.coords.push_back({*x, *y, *z});
  }
  std::set<std::pair<int, int>> seen;
  for (int b = 0; b < *nbonds; ++b) {
    const std::size_t idx = 4 + static_cast<std::size_t>(*natoms + b);
    const std::string_view line = lines[idx];
    const auto i = to_int(column(line, 0, 3));
    const auto j = to_int(column(line, 3, 3));
    const auto t = to_int(column(line, 6, 3));
    if (!i || !j || !t) throw ParseError("malformed bond line", line_no(idx));
    if (*i < 1 || *i > *natoms || *j < 1 || *j > *natoms || *i == *j) {
      throw ParseError("bond atom index out of range", line_no(idx));
    }
    if (*t < 1 || *t > 4) throw ParseError("unsupported bond type " + std::to_string(*t), line_no(idx));
    const int ri = remap[static_cast<std::size_t>(*i - 1)];
    const int rj = remap[static_cast<std::size_t>(*j - 1)];
    if (ri < 0 || rj < 0) continue;  // bond to a dropped hydrogen
    const auto key = std::minmax(ri, rj);
    if (!seen.insert(key).second) throw ParseError("duplicate bond", line_no(idx));
    g.bonds.push_back({ri, rj, static_cast<BondType>(*t - 1)});
  }
  return g;
}

}  // namespace

std::string_view element_symbol(int type) {
  if (type < 0 || static_cast<std::size_t>(type) >= kElementCount) return "UNK";
  return kVocab[static_cast<std::size_t>(type)];
}

std::optional<int> element_index(std::string_view symbol) {
  const std::string s = normalize_symbol(symbol);
  if (s == "Unk") return static_cast<int>(Element::kUnknown);
  for (std::size_t i = 0; i + 1 < kElementCount; ++i) {
    if (kVocab[i] == s) return static_cast<int>(i);
  }
  for (auto p : kPeriodic) {
    if (p == s) return static_cast<int>(Element::kUnknown);
  }
  return std::nullopt;
}

bool is_hydrogen_symbol(std::string_view symbol) {
  const std::string s = normalize_symbol(symbol);
  return s == "H" || s == "D" || s == "T";
}

std::string_view bond_type_name(BondType t) {
  switch (t) {
    case BondType::kSingle: return "single";
    case BondType::kDouble: return "double";
    case BondType::kTriple: return "triple";
    case BondType::kAromatic: return "aromatic";
  }
  return "single";
}

std::vector<std::vector<std::pair<int, BondType>>> MoleculeGraph::adjacency() const {
  std::vector<std::vector<std::pair<int, BondType>>> adj(size());
  for (const auto& b : bonds) {
    adj[static_cast<std::size_t>(b.i)].emplace_back(b.j, b.type);
    adj[static_cast<std::size_t>(b.j)].emplace_back(b.i, b.type);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

bool is_connected(const MoleculeGraph& g) {
  if (g.size() <= 1) return true;
  const auto spd = shortest_path_distances(g);
  return std::none_of(spd.begin(), spd.begin() + static_cast<std::ptrdiff_t>(g.size()),
                      [](int d) { return d == kUnreachable; });
}

void MoleculeGraph::validate() const {
  if (coords.size() != atom_types.size()) throw ContractError("coordinate count differs from atom count");
  for (const auto& c : coords) {
    for (double v : c) {
      if (!std::isfinite(v)) throw ContractError("non-finite coordinate");
    }
  }
  std::set<std::pair<int, int>> seen;
  const int n = static_cast<int>(size());
  for (const auto& b : bonds) {
    if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n) throw ContractError("bond index out of range");
    if (b.i == b.j) throw ContractError("self bond");
    if (!seen.insert(std::minmax(b.i, b.j)).second) throw ContractError("duplicate bond");
  }
  if (!is_pocket && !is_connected(*this)) throw ContractError("ligand graph is not connected");
}

MoleculeGraph parse_ligand_sdf(std::string_view text) {
  const auto lines = split_lines(text);
  return parse_mol_block(lines, 0);
}

std::vector<SdfRecord> parse_sdf_library(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<SdfRecord> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    // skip trailing blank-only chunks
    bool blank = true;
    for (std::size_t i = start; i < end; ++i) blank = blank && trim(lines[i]).empty();
    if (blank) return;
    SdfRecord rec;
    rec.first_line = static_cast<int>(start) + 1;
    rec.id = std::string(trim(lines[start]));
    try {
      rec.graph = parse_mol_block(std::span(lines).subspan(start, end - start), static_cast<int>(start));
      rec.graph->validate();
    } catch (const Error& e) {
      rec.graph.reset();
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]) == "$$$$") {
      flush(i);
      start = i + 1;
    }
  }
  if (start < lines.size()) flush(lines.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].id.empty()) out[k].id = "ligand_" + std::to_string(k + 1);
  }
  return out;
}

std::string write_sdf(const MoleculeGraph& g) {
  std::ostringstream os;
  os << g.name << "\n  poseforge\n\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%3zu%3zu  0  0  0  0  0  0  0  0999 V2000\n", g.size(),
                g.bonds.size());
  os << buf;
  for (std::size_t a = 0; a < g.size(); ++a) {
    const auto sym = element_symbol(g.atom_types[a]);
    std::snprintf(buf, sizeof buf, "%10.4f%10.4f%10.4f %-3s 0  0  0  0  0  0  0  0  0  0  0  0\n",
                  g.coords[a][0], g.coords[a][1], g.coords[a][2], std::string(sym).c_str());
    os << buf;
  }
  for (const auto& b : g.bonds) {
    std::snprintf(buf, sizeof buf, "%3d%3d%3d  0\n", b.i + 1, b.j + 1, static_cast<int>(b.type) + 1);
    os << buf;
  }
  os << "M  END\n";
  return os.str();
}

void infer_bonds_by_distance(MoleculeGraph& g, double cutoff) {
  g.bonds.clear();
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i + 1; j < g.size(); ++j) {
      if (dist(g.coords[i], g.coords[j]) < cutoff) {
        g.bonds.push_back({static_cast<int>(i), static_cast<int>(j), BondType::kSingle});
      }
    }
  }
}

MoleculeGraph parse_pocket_pdb(std::string_view text, std::span<const Vec3> centers,
                               double radius) {
  if (!(radius > 0)) throw ContractError("pocket radius must be positive");
  if (centers.empty()) throw ContractError("pocket selection needs at least one center");
  struct Atom {
    int type;
    Vec3 xyz;
  };
  using ResidueKey = std::tuple<char, int, char, std::string>;
  std::vector<ResidueKey> order;
  std::map<ResidueKey, std::vector<Atom>> residues;
  const auto lines = split_lines(text);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::string_view line = lines[k];
    const int line_no = static_cast<int>(k) + 1;
    if (line.rfind("ENDMDL", 0) == 0) break;
    if (line.rfind("ATOM", 0) != 0 && line.rfind("HETATM", 0) != 0) continue;
    if (line.size() < 54) throw ParseError("ATOM/HETATM record shorter than coordinate columns", line_no);
    auto x = to_double(column(line, 30, 8));
    auto y = to_double(column(line, 38, 8));
    auto z = to_double(column(line, 46, 8));
    const auto res_seq = to_int(column(line, 22, 4));
    if (!x || !y || !z) throw ParseError("malformed coordinates", line_no);
    if (!res_seq) throw ParseError("malformed residue sequence number", line_no);
    std::string sym = normalize_symbol(column(line, 76, 2));
    if (sym.empty()) {
      // Fall back to the atom name: leading letter(s) without digits.
      std::string nm = normalize_symbol(column(line, 12, 4));
      sym = nm.substr(0, 1);
      if (nm.size() >= 2 && column(line, 12, 1) != " " && element_index(nm.substr(0, 2))) {
        sym = nm.substr(0, 2);
      }
    }
    if (sym.empty()) throw ParseError("cannot determine element", line_no);
    if (is_hydrogen_symbol(sym)) continue;
    const auto type = element_index(sym);
    if (!type) throw ParseError("unsupported element '" + sym + "'", line_no);
    const char chain = line.size() > 21 ? line[21] : ' ';
    const char icode = line.size() > 26 ? line[26] : ' ';
    ResidueKey key{chain, *res_seq, icode, std::string(trim(column(line, 17, 3)))};
    auto [it, inserted] = residues.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back({*type, {*x, *y, *z}});
  }
  MoleculeGraph g;
  g.is_pocket = true;
  g.name = "pocket";
  for (const auto& key : order) {
    const auto& atoms = residues[key];
    const bool near = std::any_of(atoms.begin(), atoms.end(), [&](const Atom& a) {
      return std::any_of(centers.begin(), centers.end(),
                         [&](const Vec3& c) { return dist(a.xyz, c) <= radius; });
    });
    if (!near) continue;
    for (const auto& a : atoms) {
      g.atom_types.push_back(a.type);
      g.coords.push_back(a.xyz);
    }
  }
  if (g.size() == 0) {
    throw ContractError("empty pocket: no atom within " + std::to_string(radius) + " A of the center set");
  }
  infer_bonds_by_distance(g);
  return g;
}

MoleculeGraph parse_pocket_pdb(std::string_view text, const Vec3& center, double radius) {
  return parse_pocket_pdb(text, std::span<const Vec3>(&center, 1), radius);
}

std::string write_pdb(const MoleculeGraph& g) {
  std::ostringstream os;
  char buf[128];
  for (std::size_t a = 0; a < g.size(); ++a) {
    const std::string sym(element_symbol(g.atom_types[a]));
    const std::string el = sym == "UNK" ? "X" : sym;
    std::snprintf(buf, sizeof buf, "HETATM%5zu %-4s POC A%4zu    %8.3f%8.3f%8.3f  1.00  0.00          %2s\n",
                  a + 1, el.c_str(), a + 1, g.coords[a][0], g.coords[a][1], g.coords[a][2],
                  el.c_str());
    os << buf;
  }
  os << "END\n";
  return os.str();
}

std::string to_json(const MoleculeGraph& g) {
  nlohmann::json j;
  j["name"] = g.name;
  j["is_pocket"] = g.is_pocket;
  j["atoms"] = nlohmann::json::array();
  for (std::size_t a = 0; a < g.size(); ++a) {
    j["atoms"].push_back({{"element", std::string(element_symbol(g.atom_types[a]))},
                          {"xyz", {g.coords[a][0], g.coords[a][1], g.coords[a][2]}}});
  }
  j["bonds"] = nlohmann::json::array();
  for (const auto& b : g.bonds) {
    j["bonds"].push_back({b.i, b.j, std::string(bond_type_name(b.type))});
  }
  return j.dump();
}

namespace {

int line_at(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the first occurrence of `needle`, or 1 when absent.
int line_of(std::string_view text, std::string_view needle) {
  const auto pos = text.find(needle);
  return pos == std::string_view::npos ? 1 : line_at(text, pos);
}

}  // namespace

MoleculeGraph from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_at(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  MoleculeGraph g;
  try {
    g.name = j.value("name", "");
    g.is_pocket = j.value("is_pocket", false);
    for (const auto& atom : j.at("atoms")) {
      const auto sym = atom.at("element").get<std::string>();
      const auto type = element_index(sym);
      if (!type) throw ParseError("unsupported element '" + sym + "'", line_of(text, "\"" + sym + "\""));
      const auto& xyz = atom.at("xyz");
      g.atom_types.push_back(*type);
      g.coords.push_back({xyz.at(0).get<double>(), xyz.at(1).get<double>(), xyz.at(2).get<double>()});
    }
    for (const auto& b : j.at("bonds")) {
      const auto name = b.at(2).get<std::string>();
      BondType t = BondType::kSingle;
      if (name == "single") t = BondType::kSingle;
      else if (name == "double") t = BondType::kDouble;
      else if (name == "triple") t = BondType::kTriple;
      else if (name == "aromatic") t = BondType::kAromatic;
      else throw ParseError("unknown bond type '" + name + "'", line_of(text, "\"" + name + "\""));
      g.bonds.push_back({b.at(0).get<int>(), b.at(1).get<int>(), t});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed molecule JSON: ") + e.what(), 1);
  }
  try {
    g.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what(), line_of(text, "\"bonds\""));
  }
  return g;
}

std::vector<int> shortest_path_distances(const MoleculeGraph& g) {
  const std::size_t n = g.size();
  const auto adj = g.adjacency();
  std::vector<int> spd(n * n, kUnreachable);
  std::deque<int> queue;
  for (std::size_t s = 0; s < n; ++s) {
    int* row = spd.data() + s * n;
    row[s] = 0;
    queue.assign(1, static_cast<int>(s));
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (const auto& [v, _] : adj[static_cast<std::size_t>(u)]) {
        if (row[v] == kUnreachable) {
          row[v] = row[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return spd;
}

std::vector<double> edge_path_features(const MoleculeGraph& g, std::span<const int> spd) {
  const std::size_t n = g.size();
  if (spd.size() != n * n) throw DimensionError("edge_path_features: spd size mismatch");
  // Number of distinct shortest paths between every pair.
  std::vector<double> count(n * n, 0.0);
  const auto adj = g.adjacency();
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<int> order;
    for (std::size_t v = 0; v < n; ++v) {
      if (spd[s * n + v] != kUnreachable) order.push_back(static_cast<int>(v));
    }
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return spd[s * n + static_cast<std::size_t>(a)] < spd[s * n + static_cast<std::size_t>(b)]; });
    count[s * n + s] = 1.0;
    for (int v : order) {
      const auto vv = static_cast<std::size_t>(v);
      if (vv == s) continue;
      double c = 0.0;
      for (const auto& [u, _] : adj[vv]) {
        if (spd[s * n + static_cast<std::size_t>(u)] == spd[s * n + vv] - 1) {
          c += count[s * n + static_cast<std::size_t>(u)];
        }
      }
      count[s * n + vv] = c;
    }
  }
  std::vector<double> out(n * n * kBondTypeCount, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const int len = spd[i * n + j];
      if (len <= 0) continue;
      double* dst = out.data() + (i * n + j) * kBondTypeCount;
      const double total = count[i * n + j];
      for (const auto& b : g.bonds) {
        // The edge may be traversed in either direction.
        for (int dir = 0; dir < 2; ++dir) {
          const auto u = static_cast<std::size_t>(dir == 0 ? b.i : b.j);
          const auto v = static_cast<std::size_t>(dir == 0 ? b.j : b.i);
          const int a = spd[i * n + u], c = spd[v * n + j];
          if (a == kUnreachable || c == kUnreachable || a + 1 + c != len) continue;
          dst[static_cast<std::size_t>(b.type)] += count[i * n + u] * count[v * n + j];
        }
      }
      for (std::size_t t = 0; t < kBondTypeCount; ++t) dst[t] /= total * static_cast<double>(len);
    }
  }
  return out;
}

PathFeatures path_features(const MoleculeGraph& g) {
  PathFeatures f;
  f.n = g.size();
  f.spd = shortest_path_distances(g);
  f.edge_path = edge_path_features(g, f.spd);
  return f;
}

int spd_bucket(int spd, int spd_max) {
  if (spd == kUnreachable) return spd_max + 1;
  return std::min(spd, spd_max);
}

}  // namespace poseforge
