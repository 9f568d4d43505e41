#pragma once

#include <vector>

namespace moltailor::chem {

class MolGraph;

struct RingInfo {
  std::vector<std::vector<int>> cycles;  // smallest cycle basis
  std::vector<bool> atom_in_ring;
  std::vector<bool> bond_in_ring;
};

// Smallest cycle basis from BFS shortest-path cycle candidates, selected
// greedily by size under GF(2) independence. Produces exactly
// |bonds| - |atoms| + |components| cycles. Only adjacency is read, so this can
// run before hydrogen assignment.
RingInfo ring_info(const MolGraph& mol);

}  // namespace moltailor::chem
