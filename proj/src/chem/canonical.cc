#include "moltailor/chem/canonical.h"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "moltailor/chem/smiles.h"

namespace moltailor::chem {
namespace {

// Competition ranking: rank = number of atoms with a strictly smaller key.
template <typename Key>
int rank_by(const std::vector<Key>& keys, std::vector<int>& ranks) {
  const int n = static_cast<int>(keys.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  ranks.assign(n, 0);
  int classes = 0;
  for (int i = 0; i < n; ++i) {
    if (i == 0 || keys[order[i - 1]] < keys[order[i]]) {
      ranks[order[i]] = i;
      ++classes;
    } else {
      ranks[order[i]] = ranks[order[i - 1]];
    }
  }
  return classes;
}

class Canonicalizer {
 public:
  explicit Canonicalizer(const MolGraph& mol) : mol_(mol) {}

  CanonicalResult run() {
    const int n = mol_.atom_count();
    if (n == 0) return {};
    using Invariant = std::tuple<int, int, int, int, int, bool, bool>;
    std::vector<Invariant> keys(n);
    for (int i = 0; i < n; ++i) {
      const Atom& a = mol_.atom(i);
      keys[i] = {a.atomic_number, a.isotope.value_or(0), mol_.heavy_degree(i), a.formal_charge,
                 a.total_h(), a.aromatic, a.in_ring};
    }
    std::vector<int> ranks;
    rank_by(keys, ranks);
    search(std::move(ranks));
    return {best_, best_ranks_};
  }

 private:
  int refine(std::vector<int>& ranks) const {
    const int n = mol_.atom_count();
    int classes = count_classes(ranks);
    while (true) {
      std::vector<std::pair<int, std::vector<int>>> keys(n);
      for (int i = 0; i < n; ++i) {
        keys[i].first = ranks[i];
        auto& nb = keys[i].second;
        for (const Neighbor& x : mol_.neighbors(i)) {
          nb.push_back(ranks[x.atom] * 8 + static_cast<int>(mol_.bond(x.bond).order));
        }
        std::sort(nb.begin(), nb.end());
      }
      std::vector<int> next;
      const int c = rank_by(keys, next);
      ranks = std::move(next);
      if (c == classes) return c;
      classes = c;
    }
  }

  static int count_classes(const std::vector<int>& ranks) {
    std::vector<int> r = ranks;
    std::sort(r.begin(), r.end());
    return static_cast<int>(std::unique(r.begin(), r.end()) - r.begin());
  }

  void search(std::vector<int> ranks) {
    const int n = mol_.atom_count();
    if (refine(ranks) == n) {
      if (++leaves_ > kMaxCanonicalLeaves) {
        throw CanonicalizationLimit("canonicalization exceeded " +
                                    std::to_string(kMaxCanonicalLeaves) + " labelings for " +
                                    mol_.source());
      }
      std::string s = write_smiles(mol_, ranks);
      if (best_ranks_.empty() || s < best_) {
        best_ = std::move(s);
        best_ranks_ = std::move(ranks);
      }
      return;
    }
    // Smallest rank value shared by more than one atom.
    std::vector<int> count(n, 0);
    for (int r : ranks) ++count[r];
    int target = -1;
    for (int r = 0; r < n; ++r) {
      if (count[r] > 1) {
        target = r;
        break;
      }
    }
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (ranks[i] == target) members.push_back(i);
    }
    for (int chosen : members) {
      std::vector<int> branch = ranks;
      for (int m : members) {
        if (m != chosen) branch[m] = target + 1;
      }
      search(std::move(branch));
    }
  }

  const MolGraph& mol_;
  std::string best_;
  std::vector<int> best_ranks_;
  int leaves_ = 0;
};

}  // namespace

CanonicalResult canonical_form(const MolGraph& mol) { return Canonicalizer(mol).run(); }

std::string canonical_smiles(std::string_view text) { return canonicalize(parse_smiles(text)); }

}  // namespace moltailor::chem
