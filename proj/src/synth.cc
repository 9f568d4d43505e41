#include "moltailor/synth.h"

#include <set>
#include <string_view>

#include "moltailor/chem/canonical.h"
#include "moltailor/error.h"
#include "moltailor/random.h"

namespace moltailor {
namespace {

// '{r}' marks a ring-closure label, '{s}' a side-group slot. Heads attach
// through their last atom, linkers enter at the first atom and leave at the
// last top-level atom, tails and side groups attach through their first atom.
constexpr std::string_view kHeads[] = {
    "C",        "CC",       "CC(C)",      "O",         "N",         "F",          "Cl",
    "Br",       "I",        "OC(=O)",     "CN(C)",     "NC(=O)",    "c{r}ccccc{r}", "C{r}CC{r}",
    "N#C",      "[O-]C(=O)", "[NH3+]",    "CO",        "C=C",       "c{r}ccncc{r}", "C{r}CCCCC{r}",
    "FC(F)(F)", "O=[N+]([O-])", "CC(C)(C)", "CCCC",
};

constexpr std::string_view kLinkers[] = {
    "C",           "CC",          "C({s})",        "C(C)",         "C(C)(C)",     "C=C",
    "C#C",         "O",           "N",             "NC(=O)",       "C(=O)O",      "C(=O)",
    "S(=O)(=O)N",  "c{r}ccc(cc{r})", "c{r}cccc(c{r})", "c{r}cc({s})c(cc{r})", "C{r}CCC(CC{r})",
    "c{r}ccc(s{r})", "c{r}ccc(nc{r})", "N{r}CCN(CC{r})", "C{r}CC(C{r})", "c{r}ccc(o{r})",
    "CCC",         "C(O)",        "CC({s})C",      "c{r}c[nH]c(c{r})", "C{r}CCCCC(C{r})",
    "c{r}ccc{q}cc(ccc{q}c{r})", "S",  "N(C)",      "C(=O)N",
};

constexpr std::string_view kTails[] = {
    "C",          "CC",         "O",          "N",           "F",           "Cl",
    "Br",         "I",          "C(=O)O",     "C(=O)OC",     "OC",          "C#N",
    "[N+](=O)[O-]", "S(=O)(=O)N", "C(=O)N",   "c{r}ccccc{r}", "C{r}CC{r}",  "C{r}CCCC{r}",
    "C{r}CCCCCC{r}", "c{r}ccco{r}", "c{r}cc[nH]c{r}", "c{r}ccncc{r}", "c{r}ccc{q}ccccc{q}c{r}",
    "[NH3+]",     "C(=O)[O-]",  "N(C)C",      "C(F)(F)F",    "C=O",         "C=C",
    "C(C)C",      "OC(C)=O",    "CO",         "CCO",         "S",           "CCCC",
    "C(=O)C",     "OCC",        "c{r}ccc(O)cc{r}", "c{r}ccc(Cl)cc{r}", "CC(=O)O",
};

constexpr std::string_view kSides[] = {
    "C", "O", "N", "F", "Cl", "Br", "C(=O)O", "OC", "C#N", "[N+](=O)[O-]", "CC", "C(F)(F)F", "C=O", "S",
};

class Builder {
 public:
  explicit Builder(Rng& rng) : rng_(rng) {}

  std::string molecule() {
    next_ring_ = 1;
    std::string s = expand(pick(kHeads));
    const int linkers = static_cast<int>(rng_.uniform_int(0, 5));
    for (int i = 0; i < linkers; ++i) s += expand(pick(kLinkers));
    if (rng_.bernoulli(0.85)) s += expand(pick(kTails));
    return s;
  }

 private:
  template <std::size_t N>
  std::string_view pick(const std::string_view (&table)[N]) {
    return table[rng_.uniform_int(0, static_cast<std::int64_t>(N) - 1)];
  }

  std::string ring_label() {
    const int d = next_ring_++;
    return d < 10 ? std::to_string(d) : "%" + std::to_string(d);
  }

  std::string expand(std::string_view frag) {
    std::string r;
    std::string q;
    std::string out;
    for (std::size_t i = 0; i < frag.size(); ++i) {
      if (frag.compare(i, 3, "{r}") == 0) {
        if (r.empty()) r = ring_label();
        out += r;
        i += 2;
      } else if (frag.compare(i, 3, "{q}") == 0) {
        if (q.empty()) q = ring_label();
        out += q;
        i += 2;
      } else if (frag.compare(i, 3, "{s}") == 0) {
        out += expand(pick(kSides));
        i += 2;
      } else {
        out += frag[i];
      }
    }
    return out;
  }

  Rng& rng_;
  int next_ring_ = 1;
};

}  // namespace

std::vector<std::string> synth_molecules(int count, std::uint64_t seed) {
  if (count < 1) throw Error("synth_molecules needs count >= 1");
  Rng rng(seed);
  Builder builder(rng);
  std::set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(count);
  const long long max_attempts = 200LL * count + 10000;
  for (long long attempt = 0; static_cast<int>(out.size()) < count; ++attempt) {
    if (attempt >= max_attempts) throw Error("synthetic generator could not reach the requested count");
    const std::string raw = builder.molecule();
    std::string canon;
    try {
      canon = chem::canonical_smiles(raw);
    } catch (const Error&) {
      continue;  // e.g. valence conflicts between adjacent fragments
    }
    if (seen.insert(canon).second) out.push_back(canon);
  }
  return out;
}

}  // namespace moltailor
