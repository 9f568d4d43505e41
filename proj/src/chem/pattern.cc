#include "moltailor/chem/pattern.h"

#include <algorithm>
#include <set>
#include <sstream>

#include "moltailor/bundled_data.h"
#include "moltailor/chem/elements.h"

namespace moltailor::chem {
namespace {

bool bond_matches(BondConstraint want, BondOrder have) {
  switch (want) {
    case BondConstraint::kAny: return true;
    case BondConstraint::kSingle: return have == BondOrder::kSingle;
    case BondConstraint::kDouble: return have == BondOrder::kDouble;
    case BondConstraint::kTriple: return have == BondOrder::kTriple;
    case BondConstraint::kAromatic: return have == BondOrder::kAromatic;
  }
  return false;
}

bool has_acyl_neighbor(const MolGraph& mol, int atom) {
  for (const Neighbor& n : mol.neighbors(atom)) {
    for (const Neighbor& m : mol.neighbors(n.atom)) {
      if (m.atom != atom && mol.atom(m.atom).atomic_number == kOxygen &&
          mol.bond(m.bond).order == BondOrder::kDouble) {
        return true;
      }
    }
  }
  return false;
}

bool atom_matches(const MolGraph& mol, int i, const PatternAtom& p) {
  const Atom& a = mol.atom(i);
  if (a.atomic_number != p.atomic_number) return false;
  if (p.aromatic == AromaticConstraint::kAromatic && !a.aromatic) return false;
  if (p.aromatic == AromaticConstraint::kAliphatic && a.aromatic) return false;
  if (p.charge && a.formal_charge != *p.charge) return false;
  if (p.h_exact && a.total_h() != *p.h_exact) return false;
  if (p.h_min && a.total_h() < *p.h_min) return false;
  if (p.heavy_degree && mol.heavy_degree(i) != *p.heavy_degree) return false;
  if (p.no_multiple_bonds && mol.has_multiple_bond(i)) return false;
  if (p.no_acyl_neighbor && has_acyl_neighbor(mol, i)) return false;
  return true;
}

class Matcher {
 public:
  Matcher(const MolGraph& mol, const Pattern& pattern) : mol_(mol), pat_(pattern) {
    // Visit order: BFS over the pattern so each atom after the first has an
    // already-mapped neighbour.
    const int k = static_cast<int>(pat_.atoms.size());
    std::vector<bool> seen(k, false);
    if (k > 0) {
      order_.push_back(0);
      seen[0] = true;
      for (std::size_t head = 0; head < order_.size(); ++head) {
        for (const PatternBond& b : pat_.bonds) {
          const int u = order_[head];
          const int v = b.a == u ? b.b : b.b == u ? b.a : -1;
          if (v >= 0 && !seen[v]) {
            seen[v] = true;
            order_.push_back(v);
          }
        }
      }
    }
    mapping_.assign(k, -1);
    used_.assign(mol.atom_count(), false);
  }

  std::vector<std::vector<int>> run() {
    if (!pat_.atoms.empty()) extend(0);
    return std::move(results_);
  }

 private:
  bool consistent(int pattern_atom, int mol_atom) const {
    for (const PatternBond& b : pat_.bonds) {
      int other = -1;
      if (b.a == pattern_atom) other = b.b;
      else if (b.b == pattern_atom) other = b.a;
      if (other < 0 || mapping_[other] < 0) continue;
      auto bond = mol_.find_bond(mol_atom, mapping_[other]);
      if (!bond || !bond_matches(b.order, mol_.bond(*bond).order)) return false;
    }
    return true;
  }

  void extend(std::size_t depth) {
    if (depth == order_.size()) {
      std::vector<int> key = mapping_;
      std::sort(key.begin(), key.end());
      if (seen_sets_.insert(key).second) results_.push_back(mapping_);
      return;
    }
    const int p = order_[depth];
    for (int i = 0; i < mol_.atom_count(); ++i) {
      if (used_[i] || !atom_matches(mol_, i, pat_.atoms[p]) || !consistent(p, i)) continue;
      mapping_[p] = i;
      used_[i] = true;
      extend(depth + 1);
      used_[i] = false;
      mapping_[p] = -1;
    }
  }

  const MolGraph& mol_;
  const Pattern& pat_;
  std::vector<int> order_;
  std::vector<int> mapping_;
  std::vector<bool> used_;
  std::set<std::vector<int>> seen_sets_;
  std::vector<std::vector<int>> results_;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

PatternAtom parse_atom_spec(const std::string& spec, const std::string& line) {
  std::istringstream in(spec);
  std::string part;
  std::getline(in, part, ':');
  const ElementInfo* e = find_element(part);
  if (e == nullptr) throw Error("unknown element '" + part + "' in pattern line: " + line);
  PatternAtom atom;
  atom.atomic_number = e->atomic_number;
  while (std::getline(in, part, ':')) {
    if (part == "ar") {
      atom.aromatic = AromaticConstraint::kAromatic;
    } else if (part == "al") {
      atom.aromatic = AromaticConstraint::kAliphatic;
    } else if (part == "nomult") {
      atom.no_multiple_bonds = true;
    } else if (part == "noacyl") {
      atom.no_acyl_neighbor = true;
    } else if (part.size() >= 2 && part[0] == 'q') {
      atom.charge = std::stoi(part.substr(1));
    } else if (part.size() >= 2 && part[0] == 'h') {
      if (part.back() == '+') {
        atom.h_min = std::stoi(part.substr(1, part.size() - 2));
      } else {
        atom.h_exact = std::stoi(part.substr(1));
      }
    } else if (part.size() >= 2 && part[0] == 'd') {
      atom.heavy_degree = std::stoi(part.substr(1));
    } else {
      throw Error("unknown atom flag '" + part + "' in pattern line: " + line);
    }
  }
  return atom;
}

BondConstraint parse_order(const std::string& s, const std::string& line) {
  if (s == "single") return BondConstraint::kSingle;
  if (s == "double") return BondConstraint::kDouble;
  if (s == "triple") return BondConstraint::kTriple;
  if (s == "aromatic") return BondConstraint::kAromatic;
  if (s == "any") return BondConstraint::kAny;
  throw Error("unknown bond order '" + s + "' in pattern line: " + line);
}

bool connected(const Pattern& p) {
  const int k = static_cast<int>(p.atoms.size());
  if (k <= 1) return true;
  std::vector<bool> seen(k, false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const PatternBond& b : p.bonds) {
      const int v = b.a == u ? b.b : b.b == u ? b.a : -1;
      if (v >= 0 && !seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
}

}  // namespace

std::vector<std::vector<int>> match_pattern(const MolGraph& mol, const Pattern& pattern) {
  if (static_cast<int>(pattern.atoms.size()) > kMaxPatternAtoms) {
    throw Error("pattern " + pattern.name + " exceeds " + std::to_string(kMaxPatternAtoms) +
                " atoms");
  }
  return Matcher(mol, pattern).run();
}

std::vector<Pattern> parse_pattern_table(std::string_view text) {
  std::vector<Pattern> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream cs(t);
    std::string col;
    while (std::getline(cs, col, '|')) cols.push_back(trim(col));
    if (cols.size() == 2) cols.emplace_back();
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty()) {
      throw Error("malformed pattern line: " + line);
    }
    Pattern p;
    p.name = cols[0];
    std::istringstream as(cols[1]);
    std::string spec;
    while (as >> spec) p.atoms.push_back(parse_atom_spec(spec, line));
    std::istringstream bs(cols[2]);
    while (bs >> spec) {
      const auto dash = spec.find('-');
      const auto colon = spec.find(':');
      if (dash == std::string::npos || colon == std::string::npos || colon < dash) {
        throw Error("malformed bond '" + spec + "' in pattern line: " + line);
      }
      PatternBond b;
      b.a = std::stoi(spec.substr(0, dash));
      b.b = std::stoi(spec.substr(dash + 1, colon - dash - 1));
      b.order = parse_order(spec.substr(colon + 1), line);
      const int k = static_cast<int>(p.atoms.size());
      if (b.a < 0 || b.b < 0 || b.a >= k || b.b >= k || b.a == b.b) {
        throw Error("bond index out of range in pattern line: " + line);
      }
      p.bonds.push_back(b);
    }
    if (static_cast<int>(p.atoms.size()) > kMaxPatternAtoms) {
      throw Error("pattern " + p.name + " exceeds " + std::to_string(kMaxPatternAtoms) + " atoms");
    }
    if (!connected(p)) throw Error("pattern " + p.name + " is not connected");
    out.push_back(std::move(p));
  }
  return out;
}

const std::vector<Pattern>& bundled_patterns() {
  static const std::vector<Pattern> patterns = parse_pattern_table(data::k_patterns);
  return patterns;
}

const Pattern& bundled_pattern(std::string_view name) {
  for (const Pattern& p : bundled_patterns()) {
    if (p.name == name) return p;
  }
  throw Error("no bundled pattern named " + std::string(name));
}

}  // namespace moltailor::chem
