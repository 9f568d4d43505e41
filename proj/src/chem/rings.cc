#include "moltailor/chem/rings.h"

#include <algorithm>
#include <cstdint>
#include <queue>
#include <set>

#include "moltailor/chem/mol_graph.h"

namespace moltailor::chem {
namespace {

using EdgeSet = std::vector<std::uint64_t>;

struct Candidate {
  std::vector<int> atoms;  // cycle order
  EdgeSet edges;
  std::vector<int> sorted_bonds;
};

struct BfsTree {
  std::vector<int> parent;       // -1 for root / unreachable
  std::vector<int> parent_bond;
  std::vector<int> depth;        // -1 unreachable
};

BfsTree bfs(const MolGraph& mol, int root) {
  const int n = mol.atom_count();
  BfsTree t{std::vector<int>(n, -1), std::vector<int>(n, -1), std::vector<int>(n, -1)};
  std::queue<int> q;
  t.depth[root] = 0;
  q.push(root);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const Neighbor& nb : mol.neighbors(u)) {
      if (t.depth[nb.atom] >= 0) continue;
      t.depth[nb.atom] = t.depth[u] + 1;
      t.parent[nb.atom] = u;
      t.parent_bond[nb.atom] = nb.bond;
      q.push(nb.atom);
    }
  }
  return t;
}

// Path from root to v as atoms (root first) and bonds.
void path_to(const BfsTree& t, int v, std::vector<int>& atoms, std::vector<int>& bonds) {
  atoms.clear();
  bonds.clear();
  for (int x = v; x >= 0; x = t.parent[x]) {
    atoms.push_back(x);
    if (t.parent[x] >= 0) bonds.push_back(t.parent_bond[x]);
  }
  std::reverse(atoms.begin(), atoms.end());
}

bool eliminate(std::vector<EdgeSet>& basis, std::vector<int>& pivots, EdgeSet v) {
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const int p = pivots[i];
    if (v[p / 64] >> (p % 64) & 1ULL) {
      for (std::size_t w = 0; w < v.size(); ++w) v[w] ^= basis[i][w];
    }
  }
  for (std::size_t w = 0; w < v.size(); ++w) {
    if (v[w] != 0) {
      const int bit = static_cast<int>(w) * 64 + __builtin_ctzll(v[w]);
      basis.push_back(std::move(v));
      pivots.push_back(bit);
      return true;
    }
  }
  return false;
}

}  // namespace

RingInfo ring_info(const MolGraph& mol) {
  const int n = mol.atom_count();
  const int m = mol.bond_count();
  RingInfo info;
  info.atom_in_ring.assign(n, false);
  info.bond_in_ring.assign(m, false);
  const int wanted = m - n + mol.component_count();
  if (wanted <= 0) return info;

  const std::size_t words = (m + 63) / 64;
  std::vector<Candidate> candidates;
  std::set<std::vector<int>> seen;
  std::vector<int> pa, pb, ba, bb;
  for (int root = 0; root < n; ++root) {
    const BfsTree t = bfs(mol, root);
    for (int e = 0; e < m; ++e) {
      const Bond& bond = mol.bond(e);
      const int u = bond.a;
      const int v = bond.b;
      if (t.depth[u] < 0 || t.depth[v] < 0) continue;
      if (t.parent_bond[u] == e || t.parent_bond[v] == e) continue;
      path_to(t, u, pa, ba);
      path_to(t, v, pb, bb);
      // Paths must share only the root.
      bool disjoint = true;
      for (std::size_t i = 1; i < pa.size() && disjoint; ++i) {
        if (std::find(pb.begin() + 1, pb.end(), pa[i]) != pb.end()) disjoint = false;
      }
      if (!disjoint) continue;
      std::vector<int> bonds = ba;
      bonds.insert(bonds.end(), bb.begin(), bb.end());
      bonds.push_back(e);
      std::vector<int> sorted = bonds;
      std::sort(sorted.begin(), sorted.end());
      if (!seen.insert(sorted).second) continue;
      Candidate c;
      c.atoms = pa;
      for (auto it = pb.rbegin(); it != pb.rend() && *it != root; ++it) c.atoms.push_back(*it);
      c.edges.assign(words, 0);
      for (int b : bonds) c.edges[b / 64] |= 1ULL << (b % 64);
      c.sorted_bonds = std::move(sorted);
      candidates.push_back(std::move(c));
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.sorted_bonds.size() != y.sorted_bonds.size()) {
      return x.sorted_bonds.size() < y.sorted_bonds.size();
    }
    return x.sorted_bonds < y.sorted_bonds;
  });

  std::vector<EdgeSet> basis;
  std::vector<int> pivots;
  for (Candidate& c : candidates) {
    if (static_cast<int>(info.cycles.size()) == wanted) break;
    if (!eliminate(basis, pivots, c.edges)) continue;
    for (int a : c.atoms) info.atom_in_ring[a] = true;
    for (int b : c.sorted_bonds) info.bond_in_ring[b] = true;
    info.cycles.push_back(std::move(c.atoms));
  }
  return info;
}

}  // namespace moltailor::chem
