#pragma once

#include <string>
#include <vector>

#include "moltailor/chem/mol_graph.h"

namespace moltailor::chem {

class CanonicalizationLimit : public Error {
 public:
  using Error::Error;
};

// Canonical ranks: element/degree/charge/H/aromatic/ring invariants refined by
// neighbour rank multisets, with ties broken by branching over each member of
// the first tied class. Among all complete labelings the one whose SMILES is
// lexicographically smallest wins.
struct CanonicalResult {
  std::string smiles;
  std::vector<int> ranks;  // ranks[atom], a permutation of 0..n-1
};

CanonicalResult canonical_form(const MolGraph& mol);

inline std::string canonicalize(const MolGraph& mol) { return canonical_form(mol).smiles; }

// parse_smiles followed by canonicalize.
std::string canonical_smiles(std::string_view text);

// Number of complete labelings explored before giving up.
inline constexpr int kMaxCanonicalLeaves = 200000;

}  // namespace moltailor::chem
