#include <algorithm>
#include <numeric>
#include <string>

#include "moltailor/chem/elements.h"
#include "moltailor/chem/smiles.h"

namespace moltailor::chem {
namespace {

// Hydrogens a bare (unbracketed) spelling of the atom would receive, or -1
// when the atom cannot be written bare.
int bare_hydrogens(const MolGraph& mol, int i) {
  const Atom& a = mol.atom(i);
  if (a.isotope || a.formal_charge != 0 || !in_organic_subset(a.atomic_number)) return -1;
  if (a.aromatic && a.atomic_number != kBoron && a.atomic_number != kCarbon &&
      a.atomic_number != kNitrogen && a.atomic_number != kOxygen &&
      a.atomic_number != kPhosphorus && a.atomic_number != kSulfur) {
    return -1;
  }
  Atom bare = a;
  bare.explicit_h.reset();
  try {
    return implicit_hydrogen_count(bare, bonded_order_sum(mol, i, 0));
  } catch (const ValenceError&) {
    return -1;
  }
}

std::string atom_text(const MolGraph& mol, int i) {
  const Atom& a = mol.atom(i);
  std::string sym(a.symbol());
  if (a.aromatic) {
    for (char& c : sym) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (bare_hydrogens(mol, i) == a.total_h()) return sym;
  std::string out = "[";
  if (a.isotope) out += std::to_string(*a.isotope);
  out += sym;
  const int h = a.total_h();
  if (h > 0) {
    out += 'H';
    if (h > 1) out += std::to_string(h);
  }
  if (a.formal_charge != 0) {
    out += a.formal_charge > 0 ? '+' : '-';
    if (std::abs(a.formal_charge) > 1) out += std::to_string(std::abs(a.formal_charge));
  }
  out += ']';
  return out;
}

std::string bond_text(const MolGraph& mol, int bond) {
  const Bond& b = mol.bond(bond);
  switch (b.order) {
    case BondOrder::kAromatic: return "";
    case BondOrder::kDouble: return "=";
    case BondOrder::kTriple: return "#";
    case BondOrder::kSingle:
      return mol.atom(b.a).aromatic && mol.atom(b.b).aromatic ? "-" : "";
  }
  return "";
}

std::string ring_digit_text(int d) {
  return d < 10 ? std::string(1, static_cast<char>('0' + d)) : "%" + std::to_string(d);
}

struct RingEvent {
  int bond;
  bool opening;
};

class Writer {
 public:
  Writer(const MolGraph& mol, std::span<const int> priority)
      : mol_(mol),
        priority_(priority),
        visited_(mol.atom_count(), false),
        closure_(mol.bond_count(), false),
        children_(mol.atom_count()),
        events_(mol.atom_count()),
        digit_of_(mol.bond_count(), -1) {
    sorted_nbrs_.resize(mol.atom_count());
    for (int i = 0; i < mol.atom_count(); ++i) {
      auto nb = mol.neighbors(i);
      sorted_nbrs_[i].assign(nb.begin(), nb.end());
      std::sort(sorted_nbrs_[i].begin(), sorted_nbrs_[i].end(),
                [&](const Neighbor& x, const Neighbor& y) {
                  return priority_[x.atom] < priority_[y.atom];
                });
    }
  }

  std::string run() {
    std::vector<int> order(mol_.atom_count());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return priority_[x] < priority_[y]; });
    std::string out;
    for (int start : order) {
      if (visited_[start]) continue;
      plan(start, -1);
      if (!out.empty()) out += '.';
      emit(start, -1, out);
    }
    return out;
  }

 private:
  void plan(int u, int parent_bond) {
    visited_[u] = true;
    for (const Neighbor& nb : sorted_nbrs_[u]) {
      if (nb.bond == parent_bond) continue;
      if (visited_[nb.atom]) {
        if (!closure_[nb.bond]) {
          closure_[nb.bond] = true;
          events_[nb.atom].push_back({nb.bond, true});
          events_[u].push_back({nb.bond, false});
        }
        continue;
      }
      children_[u].push_back({nb.atom, nb.bond});
      plan(nb.atom, nb.bond);
    }
  }

  void emit(int u, int via_bond, std::string& out) {
    if (via_bond >= 0) out += bond_text(mol_, via_bond);
    out += atom_text(mol_, u);
    for (const RingEvent& e : events_[u]) {
      if (e.opening) {
        int d = 1;
        while (std::find(used_digits_.begin(), used_digits_.end(), d) != used_digits_.end()) ++d;
        used_digits_.push_back(d);
        digit_of_[e.bond] = d;
        out += bond_text(mol_, e.bond);
        out += ring_digit_text(d);
      } else {
        const int d = digit_of_[e.bond];
        used_digits_.erase(std::find(used_digits_.begin(), used_digits_.end(), d));
        out += ring_digit_text(d);
      }
    }
    const auto& kids = children_[u];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool branch = k + 1 < kids.size();
      if (branch) out += '(';
      emit(kids[k].atom, kids[k].bond, out);
      if (branch) out += ')';
    }
  }

  const MolGraph& mol_;
  std::span<const int> priority_;
  std::vector<std::vector<Neighbor>> sorted_nbrs_;
  std::vector<bool> visited_;
  std::vector<bool> closure_;
  std::vector<std::vector<Neighbor>> children_;
  std::vector<std::vector<RingEvent>> events_;
  std::vector<int> digit_of_;
  std::vector<int> used_digits_;
};

}  // namespace

std::string write_smiles(const MolGraph& mol, std::span<const int> priority) {
  return Writer(mol, priority).run();
}

std::string random_smiles(const MolGraph& mol, Rng& rng) {
  std::vector<int> priority(mol.atom_count());
  std::iota(priority.begin(), priority.end(), 0);
  rng.shuffle(std::span<int>(priority));
  return write_smiles(mol, priority);
}

}  // namespace moltailor::chem
