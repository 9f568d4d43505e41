#include "moltailor/chem/mol_graph.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moltailor/chem/elements.h"
#include "moltailor/chem/rings.h"

namespace moltailor::chem {

std::string_view Atom::symbol() const { return element(atomic_number).symbol; }

int MolGraph::add_atom(Atom atom) {
  atom.index = atom_count();
  atoms_.push_back(std::move(atom));
  adjacency_.emplace_back();
  return atoms_.back().index;
}

int MolGraph::add_bond(int a, int b, BondOrder order) {
  if (a == b) throw SmilesSyntaxError("bond from atom " + std::to_string(a) + " to itself");
  if (a < 0 || b < 0 || a >= atom_count() || b >= atom_count()) {
    throw SmilesSyntaxError("bond references a missing atom");
  }
  if (find_bond(a, b)) {
    throw SmilesSyntaxError("duplicate bond between atoms " + std::to_string(a) + " and " +
                            std::to_string(b));
  }
  const int id = bond_count();
  bonds_.push_back(Bond{a, b, order, false});
  adjacency_[a].push_back({b, id});
  adjacency_[b].push_back({a, id});
  return id;
}

std::optional<int> MolGraph::find_bond(int a, int b) const {
  for (const Neighbor& n : adjacency_[a]) {
    if (n.atom == b) return n.bond;
  }
  return std::nullopt;
}

std::vector<int> MolGraph::components() const {
  std::vector<int> comp(atoms_.size(), -1);
  int next = 0;
  std::vector<int> stack;
  for (int start = 0; start < atom_count(); ++start) {
    if (comp[start] >= 0) continue;
    comp[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const Neighbor& n : adjacency_[u]) {
        if (comp[n.atom] < 0) {
          comp[n.atom] = next;
          stack.push_back(n.atom);
        }
      }
    }
    ++next;
  }
  return comp;
}

int MolGraph::component_count() const {
  const auto comp = components();
  return comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
}

bool MolGraph::has_multiple_bond(int atom) const {
  for (const Neighbor& n : adjacency_[atom]) {
    const BondOrder o = bonds_[n.bond].order;
    if (o == BondOrder::kDouble || o == BondOrder::kTriple) return true;
  }
  return false;
}

void MolGraph::perceive() {
  RingInfo info = ring_info(*this);
  rings_ = std::move(info.cycles);
  for (int i = 0; i < atom_count(); ++i) atoms_[i].in_ring = info.atom_in_ring[i];
  for (int i = 0; i < bond_count(); ++i) bonds_[i].in_ring = info.bond_in_ring[i];

  for (const Atom& a : atoms_) {
    if (a.aromatic && !a.in_ring) {
      throw SmilesSyntaxError("aromatic atom " + std::to_string(a.index) + " (" +
                              std::string(a.symbol()) + ") is not in a ring");
    }
  }
  for (const Bond& b : bonds_) {
    if (b.order == BondOrder::kAromatic && !b.in_ring) {
      throw SmilesSyntaxError("aromatic bond outside a ring");
    }
  }
  for (int i = 0; i < atom_count(); ++i) {
    atoms_[i].implicit_h = implicit_hydrogen_count(atoms_[i], bonded_order_sum(*this, i));
  }
}

double bonded_order_sum(const MolGraph& mol, int atom) {
  return bonded_order_sum(mol, atom, mol.atom(atom).explicit_h.value_or(0));
}

double bonded_order_sum(const MolGraph& mol, int atom, int assumed_explicit_h) {
  int aromatic_bonds = 0;
  int other = 0;
  for (const Neighbor& n : mol.neighbors(atom)) {
    switch (mol.bond(n.bond).order) {
      case BondOrder::kSingle: other += 1; break;
      case BondOrder::kDouble: other += 2; break;
      case BondOrder::kTriple: other += 3; break;
      case BondOrder::kAromatic: ++aromatic_bonds; break;
    }
  }
  if (aromatic_bonds == 0) return other;

  const Atom& a = mol.atom(atom);
  const int z = a.atomic_number;
  const int donor_sum = aromatic_bonds + other;
  if (z == kOxygen || z == kSulfur || z == kSelenium) return donor_sum;

  const int rounded = static_cast<int>(std::floor(1.5 * aromatic_bonds)) + other;
  const auto valences = allowed_valences(z, a.formal_charge);
  if (!valences.empty() && rounded + assumed_explicit_h > valences.back()) return donor_sum;
  return rounded;
}

int implicit_hydrogen_count(const Atom& atom, double bonded_order_sum) {
  const int order = static_cast<int>(std::floor(bonded_order_sum));
  const auto valences = allowed_valences(atom.atomic_number, atom.formal_charge);
  if (atom.bracket()) {
    const int used = order + *atom.explicit_h;
    if (!valences.empty() && used > valences.back()) {
      throw ValenceError("bracket atom " + std::string(atom.symbol()) + " at index " +
                         std::to_string(atom.index) + " has valence " + std::to_string(used) +
                         " above the allowed maximum " + std::to_string(valences.back()));
    }
    return 0;
  }
  if (valences.empty()) {
    throw ValenceError("element " + std::string(atom.symbol()) + " must be written in brackets");
  }
  for (int v : valences) {
    if (v >= order) return std::max(0, v - order);
  }
  throw ValenceError("atom " + std::string(atom.symbol()) + " at index " +
                     std::to_string(atom.index) + " has bond order sum " +
                     std::to_string(order) + " above the allowed maximum " +
                     std::to_string(valences.back()));
}

MolGraph renumbered(const MolGraph& mol, std::span<const int> new_index) {
  const int n = mol.atom_count();
  std::vector<int> old_of(n);
  for (int i = 0; i < n; ++i) old_of[new_index[i]] = i;
  MolGraph out;
  for (int i = 0; i < n; ++i) out.add_atom(mol.atom(old_of[i]));
  std::vector<std::tuple<int, int, BondOrder>> bonds;
  for (const Bond& b : mol.bonds()) {
    int a = new_index[b.a];
    int c = new_index[b.b];
    if (a > c) std::swap(a, c);
    bonds.emplace_back(a, c, b.order);
  }
  std::sort(bonds.begin(), bonds.end());
  for (const auto& [a, c, o] : bonds) out.add_bond(a, c, o);
  out.set_source(mol.source());
  out.perceive();
  return out;
}

}  // namespace moltailor::chem
