#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moltailor/error.h"

namespace moltailor::chem {

class SmilesSyntaxError : public Error {
 public:
  using Error::Error;
};

class ValenceError : public Error {
 public:
  using Error::Error;
};

enum class BondOrder : std::uint8_t {
  kSingle = 1,
  kDouble = 2,
  kTriple = 3,
  kAromatic = 4,
};

struct Atom {
  int atomic_number = 6;
  bool aromatic = false;
  int formal_charge = 0;
  std::optional<int> isotope;
  std::optional<int> explicit_h;  // set for bracket atoms only
  int implicit_h = 0;
  int index = 0;
  bool in_ring = false;

  bool bracket() const { return explicit_h.has_value(); }
  int total_h() const { return implicit_h + explicit_h.value_or(0); }
  std::string_view symbol() const;
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::kSingle;
  bool in_ring = false;

  int other(int atom) const { return atom == a ? b : a; }
};

struct Neighbor {
  int atom;
  int bond;
};

// Atoms, bonds, implicit hydrogens and a smallest cycle basis. Build with
// add_atom/add_bond and call perceive(); parse_smiles does both.
class MolGraph {
 public:
  MolGraph() = default;

  int add_atom(Atom atom);
  // Throws SmilesSyntaxError for self bonds and duplicate atom pairs.
  int add_bond(int a, int b, BondOrder order);

  // For parsers fixing up bond orders before perceive().
  void set_bond_order(int bond, BondOrder order) { bonds_[bond].order = order; }

  // Assigns implicit hydrogens, perceives rings and ring flags, and checks that
  // aromatic atoms and bonds sit in rings. Idempotent.
  void perceive();

  int atom_count() const { return static_cast<int>(atoms_.size()); }
  int bond_count() const { return static_cast<int>(bonds_.size()); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const Atom& atom(int i) const { return atoms_[i]; }
  const Bond& bond(int i) const { return bonds_[i]; }
  std::span<const Neighbor> neighbors(int atom) const { return adjacency_[atom]; }
  std::optional<int> find_bond(int a, int b) const;

  // Smallest cycle basis, each ring as an atom cycle in traversal order.
  const std::vector<std::vector<int>>& rings() const { return rings_; }
  int component_count() const;
  // Connected component id per atom, numbered in order of lowest atom index.
  std::vector<int> components() const;

  int heavy_degree(int atom) const { return static_cast<int>(adjacency_[atom].size()); }
  bool has_multiple_bond(int atom) const;  // any double or triple bond

  const std::string& source() const { return source_; }
  void set_source(std::string s) { source_ = std::move(s); }
  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<std::vector<int>> rings_;
  std::string source_;
  std::vector<std::string> warnings_;
};

// Sum of bond orders around `atom` used for hydrogen assignment. Aromatic bonds
// count 1.5 each and the total is rounded down. Aromatic O, S and Se, and
// aromatic atoms whose rounded sum would exceed every allowed valence, are
// treated as lone-pair donors: their aromatic bonds count 1 each.
double bonded_order_sum(const MolGraph& mol, int atom);
// Same, but as if the atom carried `assumed_explicit_h` bracket hydrogens.
double bonded_order_sum(const MolGraph& mol, int atom, int assumed_explicit_h);

// Implicit hydrogens from the valence table: the smallest allowed valence that
// is >= the rounded bond-order sum, minus that sum. Bracket atoms return 0 but
// are still validated against their explicit hydrogens. Throws ValenceError.
int implicit_hydrogen_count(const Atom& atom, double bonded_order_sum);

// Returns a copy with atom i moved to position new_index[i]; bond list order
// follows the new numbering.
MolGraph renumbered(const MolGraph& mol, std::span<const int> new_index);

}  // namespace moltailor::chem
