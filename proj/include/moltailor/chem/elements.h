#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace moltailor::chem {

struct ElementInfo {
  std::string symbol;
  int atomic_number = 0;
  double weight = 0.0;        // conventional standard atomic weight
  double monoisotopic = 0.0;  // most abundant isotope
  int valence_electrons = 0;
  std::vector<int> valences;  // ascending; empty for bracket-only elements
};

// Lookup by atomic number. Throws moltailor::Error for elements missing from
// the bundled table.
const ElementInfo& element(int atomic_number);

// nullptr when the symbol is not in the table. Case-sensitive ("Cl", not "CL").
const ElementInfo* find_element(std::string_view symbol);

// B, C, N, O, P, S, F, Cl, Br, I: the atoms that may be written without brackets.
bool in_organic_subset(int atomic_number);

// Atoms that may be written as lowercase aromatic symbols.
bool aromatic_capable(int atomic_number);

// Allowed valences after adjusting for formal charge. Group 15-17 atoms gain a
// valence per positive charge, group 13 loses one, carbon-group atoms lose one
// per unit of charge in either direction.
std::vector<int> allowed_valences(int atomic_number, int formal_charge);

constexpr int kHydrogen = 1;
constexpr int kBoron = 5;
constexpr int kCarbon = 6;
constexpr int kNitrogen = 7;
constexpr int kOxygen = 8;
constexpr int kFluorine = 9;
constexpr int kPhosphorus = 15;
constexpr int kSulfur = 16;
constexpr int kChlorine = 17;
constexpr int kSelenium = 34;
constexpr int kBromine = 35;
constexpr int kIodine = 53;

inline bool is_halogen(int z) {
  return z == kFluorine || z == kChlorine || z == kBromine || z == kIodine;
}

}  // namespace moltailor::chem
