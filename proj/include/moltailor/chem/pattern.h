#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moltailor/chem/mol_graph.h"

namespace moltailor::chem {

enum class AromaticConstraint { kAny, kAromatic, kAliphatic };
enum class BondConstraint { kSingle, kDouble, kTriple, kAromatic, kAny };

struct PatternAtom {
  int atomic_number = 6;
  AromaticConstraint aromatic = AromaticConstraint::kAny;
  std::optional<int> charge;
  std::optional<int> h_exact;
  std::optional<int> h_min;
  std::optional<int> heavy_degree;
  bool no_multiple_bonds = false;
  bool no_acyl_neighbor = false;
};

struct PatternBond {
  int a = 0;
  int b = 0;
  BondConstraint order = BondConstraint::kSingle;
};

struct Pattern {
  std::string name;
  std::vector<PatternAtom> atoms;
  std::vector<PatternBond> bonds;
};

// One mapping per distinct matched atom set; mapping[k] is the molecule atom
// matched by pattern atom k.
std::vector<std::vector<int>> match_pattern(const MolGraph& mol, const Pattern& pattern);

inline int count_matches(const MolGraph& mol, const Pattern& pattern) {
  return static_cast<int>(match_pattern(mol, pattern).size());
}

// Parses the pattern table format (see data/patterns.txt). Throws
// moltailor::Error on malformed lines or disconnected patterns.
std::vector<Pattern> parse_pattern_table(std::string_view text);

// The bundled functional-group table.
const std::vector<Pattern>& bundled_patterns();
const Pattern& bundled_pattern(std::string_view name);

inline constexpr int kMaxPatternAtoms = 8;

}  // namespace moltailor::chem
