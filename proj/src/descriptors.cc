#include "moltailor/descriptors.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "moltailor/bundled_data.h"
#include "moltailor/chem/elements.h"
#include "moltailor/chem/pattern.h"

namespace moltailor {

using chem::Atom;
using chem::BondOrder;
using chem::MolGraph;
using chem::Neighbor;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Summed from per-element counts so the result does not depend on atom order.
double molecular_mass(const MolGraph& mol, bool monoisotopic) {
  std::map<int, long> counts;
  long hydrogens = 0;
  long isotope_mass = 0;  // labelled atoms use their mass number
  for (const Atom& a : mol.atoms()) {
    if (a.isotope) isotope_mass += *a.isotope;
    else ++counts[a.atomic_number];
    hydrogens += a.total_h();
  }
  if (hydrogens > 0) counts[chem::kHydrogen] += hydrogens;
  double w = static_cast<double>(isotope_mass);
  for (const auto& [z, n] : counts) {
    const auto& e = chem::element(z);
    w += n * (monoisotopic ? e.monoisotopic : e.weight);
  }
  return w;
}

bool attached_to_acyl(const MolGraph& mol, int atom) {
  for (const Neighbor& n : mol.neighbors(atom)) {
    for (const Neighbor& m : mol.neighbors(n.atom)) {
      if (m.atom == atom) continue;
      const int z = mol.atom(m.atom).atomic_number;
      if (z == chem::kOxygen && mol.bond(m.bond).order == BondOrder::kDouble) return true;
    }
  }
  return false;
}

// C=O carbon
bool is_carbonyl_carbon(const MolGraph& mol, int atom) {
  if (mol.atom(atom).atomic_number != chem::kCarbon) return false;
  for (const Neighbor& n : mol.neighbors(atom)) {
    if (mol.atom(n.atom).atomic_number == chem::kOxygen &&
        mol.bond(n.bond).order == BondOrder::kDouble) {
      return true;
    }
  }
  return false;
}

// Longest path, in atoms, through acyclic aliphatic carbons. That subgraph is a
// forest, so the answer is the largest tree diameter.
int longest_carbon_chain(const MolGraph& mol) {
  const int n = mol.atom_count();
  auto eligible = [&](int i) {
    const Atom& a = mol.atom(i);
    return a.atomic_number == chem::kCarbon && !a.aromatic && !a.in_ring;
  };
  auto farthest = [&](int start, const std::vector<bool>& allowed, int& far) {
    std::vector<int> dist(n, -1);
    std::vector<int> queue{start};
    dist[start] = 1;
    far = start;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const int u = queue[h];
      if (dist[u] > dist[far]) far = u;
      for (const Neighbor& nb : mol.neighbors(u)) {
        if (allowed[nb.atom] && dist[nb.atom] < 0) {
          dist[nb.atom] = dist[u] + 1;
          queue.push_back(nb.atom);
        }
      }
    }
    return dist[far];
  };
  std::vector<bool> allowed(n);
  for (int i = 0; i < n; ++i) allowed[i] = eligible(i);
  std::vector<bool> done(n, false);
  int best = 0;
  for (int i = 0; i < n; ++i) {
    if (!allowed[i] || done[i]) continue;
    int a = i;
    farthest(i, allowed, a);
    int b = a;
    best = std::max(best, farthest(a, allowed, b));
    // mark the tree as processed
    std::vector<int> stack{i};
    done[i] = true;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const Neighbor& nb : mol.neighbors(u)) {
        if (allowed[nb.atom] && !done[nb.atom]) {
          done[nb.atom] = true;
          stack.push_back(nb.atom);
        }
      }
    }
  }
  return best;
}

using Rule = std::function<double(const MolGraph&)>;

template <typename Pred>
double count_atoms(const MolGraph& mol, Pred pred) {
  int c = 0;
  for (int i = 0; i < mol.atom_count(); ++i) c += pred(i) ? 1 : 0;
  return c;
}

double aromatic_ring_count(const MolGraph& mol) {
  int c = 0;
  for (const auto& ring : mol.rings()) {
    if (std::all_of(ring.begin(), ring.end(), [&](int a) { return mol.atom(a).aromatic; })) ++c;
  }
  return c;
}

const std::vector<std::pair<std::string, Rule>>& rules() {
  namespace r = descriptor_rules;
  static const std::vector<std::pair<std::string, Rule>> table = {
      {"MolWt", [](const MolGraph& m) { return molecular_mass(m, false); }},
      {"ExactMolWt", [](const MolGraph& m) { return molecular_mass(m, true); }},
      {"HeavyAtomCount", [](const MolGraph& m) { return double(m.atom_count()); }},
      {"NumHeteroatoms",
       [](const MolGraph& m) {
         return count_atoms(m, [&](int i) {
           const int z = m.atom(i).atomic_number;
           return z != chem::kCarbon && z != chem::kHydrogen;
         });
       }},
      {"NumHDonors", [](const MolGraph& m) { return count_atoms(m, [&](int i) { return r::is_h_donor(m, i); }); }},
      {"NumHAcceptors", [](const MolGraph& m) { return count_atoms(m, [&](int i) { return r::is_h_acceptor(m, i); }); }},
      {"NumRotatableBonds",
       [](const MolGraph& m) {
         int c = 0;
         for (int b = 0; b < m.bond_count(); ++b) c += r::is_rotatable(m, b) ? 1 : 0;
         return double(c);
       }},
      {"RingCount", [](const MolGraph& m) { return double(m.rings().size()); }},
      {"NumAromaticRings", aromatic_ring_count},
      {"NumAromaticAtoms", [](const MolGraph& m) { return count_atoms(m, [&](int i) { return m.atom(i).aromatic; }); }},
      {"FractionCSP3",
       [](const MolGraph& m) {
         const double carbons = count_atoms(m, [&](int i) { return m.atom(i).atomic_number == chem::kCarbon; });
         if (carbons == 0) return 0.0;
         return count_atoms(m, [&](int i) { return r::is_sp3_carbon(m, i); }) / carbons;
       }},
      {"NumValenceElectrons",
       [](const MolGraph& m) {
         double e = 0;
         for (const Atom& a : m.atoms()) {
           e += chem::element(a.atomic_number).valence_electrons + a.total_h() - a.formal_charge;
         }
         return e;
       }},
      {"HalogenCount", [](const MolGraph& m) { return count_atoms(m, [&](int i) { return chem::is_halogen(m.atom(i).atomic_number); }); }},
      {"FormalChargeSum",
       [](const MolGraph& m) {
         double q = 0;
         for (const Atom& a : m.atoms()) q += a.formal_charge;
         return q;
       }},
      {"MaxRingSize",
       [](const MolGraph& m) {
         std::size_t s = 0;
         for (const auto& ring : m.rings()) s = std::max(s, ring.size());
         return double(s);
       }},
      {"LongestCarbonChain", [](const MolGraph& m) { return double(longest_carbon_chain(m)); }},
  };
  return table;
}

Rule rule_for(const std::string& name) {
  for (const auto& [n, rule] : rules()) {
    if (n == name) return rule;
  }
  if (name.rfind("fr_", 0) == 0) {
    const chem::Pattern* p = nullptr;
    for (const auto& candidate : chem::bundled_patterns()) {
      if (candidate.name == name) p = &candidate;
    }
    if (p != nullptr) {
      return [p](const MolGraph& m) { return double(chem::count_matches(m, *p)); };
    }
  }
  return nullptr;
}

struct BoundRegistry {
  std::vector<DescriptorSpec> specs;
  std::vector<Rule> rules;
};

const BoundRegistry& bound_registry() {
  static const BoundRegistry reg = [] {
    BoundRegistry r;
    r.specs = parse_registry(data::k_descriptors);
    for (const auto& s : r.specs) {
      Rule rule = rule_for(s.name);
      if (!rule) throw Error("registry entry " + s.name + " has no implementation");
      r.rules.push_back(std::move(rule));
    }
    return r;
  }();
  return reg;
}

// Whole-word occurrences of `word` in `text` (word chars: alnum and '_').
int word_count(const std::string& text, const std::string& word) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  int c = 0;
  for (std::size_t pos = text.find(word); pos != std::string::npos; pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !is_word(text[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right = end >= text.size() || !is_word(text[end]);
    if (left && right) ++c;
  }
  return c;
}

}  // namespace

namespace descriptor_rules {

bool is_h_donor(const MolGraph& mol, int atom) {
  const Atom& a = mol.atom(atom);
  return (a.atomic_number == chem::kNitrogen || a.atomic_number == chem::kOxygen) && a.total_h() > 0;
}

// O: any oxygen without positive charge.
// N: uncharged; aliphatic N must not be an amide/sulfonamide N or carry a
// multiple bond to a non-carbon; aromatic n must be pyridine-like (two ring
// neighbours, no H).
bool is_h_acceptor(const MolGraph& mol, int atom) {
  const Atom& a = mol.atom(atom);
  if (a.atomic_number == chem::kOxygen) return a.formal_charge <= 0;
  if (a.atomic_number != chem::kNitrogen || a.formal_charge != 0) return false;
  if (a.aromatic) return a.total_h() == 0 && mol.heavy_degree(atom) == 2;
  return !attached_to_acyl(mol, atom);
}

// Non-ring single bond between heavy atoms that both have heavy degree >= 2,
// excluding the amide C-N bond.
bool is_rotatable(const MolGraph& mol, int bond) {
  const chem::Bond& b = mol.bond(bond);
  if (b.order != BondOrder::kSingle || b.in_ring) return false;
  if (mol.heavy_degree(b.a) < 2 || mol.heavy_degree(b.b) < 2) return false;
  const int za = mol.atom(b.a).atomic_number;
  const int zb = mol.atom(b.b).atomic_number;
  if (za == chem::kNitrogen && is_carbonyl_carbon(mol, b.b)) return false;
  if (zb == chem::kNitrogen && is_carbonyl_carbon(mol, b.a)) return false;
  return true;
}

bool is_sp3_carbon(const MolGraph& mol, int atom) {
  const Atom& a = mol.atom(atom);
  return a.atomic_number == chem::kCarbon && !a.aromatic && !mol.has_multiple_bond(atom);
}

}  // namespace descriptor_rules

std::vector<DescriptorSpec> parse_registry(std::string_view text) {
  std::vector<DescriptorSpec> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::set<std::string> names;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.rfind("descriptor ", 0) == 0) {
      std::istringstream fields(t.substr(11));
      DescriptorSpec spec;
      std::string kind;
      if (!(fields >> spec.name >> kind >> spec.sampling_weight)) {
        throw Error("malformed registry line: " + line);
      }
      if (kind == "continuous") spec.kind = DescriptorKind::kContinuous;
      else if (kind == "count") spec.kind = DescriptorKind::kCount;
      else throw Error("unknown descriptor kind '" + kind + "'");
      if (!(spec.sampling_weight > 0)) throw Error("non-positive sampling weight for " + spec.name);
      if (!names.insert(spec.name).second) throw Error("duplicate descriptor " + spec.name);
      out.push_back(std::move(spec));
    } else if (t.rfind("- ", 0) == 0) {
      if (out.empty()) throw Error("phrase before any descriptor: " + line);
      out.back().phrase_bank.push_back(trim(t.substr(2)));
    } else {
      throw Error("malformed registry line: " + line);
    }
  }
  for (const auto& spec : out) {
    if (spec.phrase_bank.size() < 2 || spec.phrase_bank.size() > 4) {
      throw Error("descriptor " + spec.name + " needs 2-4 phrases");
    }
    for (const auto& phrase : spec.phrase_bank) {
      for (const auto& other : out) {
        const int expected = other.name == spec.name ? 1 : 0;
        if (word_count(phrase, other.name) != expected) {
          throw Error("phrase \"" + phrase + "\" must name " + spec.name + " exactly once and no other descriptor");
        }
      }
    }
  }
  return out;
}

const std::vector<DescriptorSpec>& registry() { return bound_registry().specs; }

int descriptor_index(std::string_view name) {
  const auto& specs = registry();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return static_cast<int>(i);
  }
  throw UnknownDescriptor("unknown descriptor " + std::string(name));
}

double compute_descriptor(const MolGraph& mol, std::string_view name) {
  return bound_registry().rules[descriptor_index(name)](mol);
}

DescriptorVector compute_all(const MolGraph& mol) {
  const auto& reg = bound_registry();
  DescriptorVector v;
  v.values.reserve(reg.specs.size());
  for (std::size_t i = 0; i < reg.specs.size(); ++i) {
    const double x = reg.rules[i](mol);
    if (!std::isfinite(x)) {
      throw Error("descriptor " + reg.specs[i].name + " is not finite for " + mol.source());
    }
    v.values.push_back(x);
  }
  return v;
}

}  // namespace moltailor
