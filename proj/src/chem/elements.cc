#include "moltailor/chem/elements.h"

#include <algorithm>
#include <sstream>
#include <string>
#include <unordered_map>

#include "moltailor/bundled_data.h"
#include "moltailor/error.h"

namespace moltailor::chem {
namespace {

struct ElementTable {
  std::vector<ElementInfo> by_number;  // index = atomic number
  std::unordered_map<std::string, int> by_symbol;
};

ElementTable load_table() {
  ElementTable table;
  table.by_number.resize(120);
  std::istringstream in{std::string(data::k_elements)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ElementInfo e;
    std::string valences;
    if (!(fields >> e.symbol >> e.atomic_number >> e.weight >> e.monoisotopic >>
          e.valence_electrons >> valences)) {
      throw Error("malformed element table line: " + line);
    }
    if (valences != "-") {
      std::istringstream vs(valences);
      std::string v;
      while (std::getline(vs, v, ',')) e.valences.push_back(std::stoi(v));
    }
    table.by_symbol[e.symbol] = e.atomic_number;
    table.by_number.at(e.atomic_number) = std::move(e);
  }
  return table;
}

const ElementTable& table() {
  static const ElementTable t = load_table();
  return t;
}

int group_of(int z) {
  switch (z) {
    case kBoron: return 13;
    case kCarbon: case 14: return 14;
    case kNitrogen: case kPhosphorus: return 15;
    case kOxygen: case kSulfur: case kSelenium: return 16;
    case kFluorine: case kChlorine: case kBromine: case kIodine: return 17;
    default: return 0;
  }
}

}  // namespace

const ElementInfo& element(int atomic_number) {
  const auto& t = table();
  if (atomic_number <= 0 || atomic_number >= static_cast<int>(t.by_number.size()) ||
      t.by_number[atomic_number].atomic_number == 0) {
    throw Error("element " + std::to_string(atomic_number) + " not in element table");
  }
  return t.by_number[atomic_number];
}

const ElementInfo* find_element(std::string_view symbol) {
  const auto& t = table();
  auto it = t.by_symbol.find(std::string(symbol));
  return it == t.by_symbol.end() ? nullptr : &t.by_number[it->second];
}

bool in_organic_subset(int z) {
  switch (z) {
    case kBoron: case kCarbon: case kNitrogen: case kOxygen: case kPhosphorus:
    case kSulfur: case kFluorine: case kChlorine: case kBromine: case kIodine:
      return true;
    default:
      return false;
  }
}

bool aromatic_capable(int z) {
  switch (z) {
    case kBoron: case kCarbon: case kNitrogen: case kOxygen: case kPhosphorus:
    case kSulfur: case kSelenium:
      return true;
    default:
      return false;
  }
}

std::vector<int> allowed_valences(int atomic_number, int formal_charge) {
  std::vector<int> out = element(atomic_number).valences;
  if (formal_charge == 0 || out.empty()) return out;
  int shift = 0;
  switch (group_of(atomic_number)) {
    case 13: shift = -formal_charge; break;
    case 14: shift = -std::abs(formal_charge); break;
    case 15: case 16: case 17: shift = formal_charge; break;
    default: return {};
  }
  std::vector<int> adjusted;
  for (int v : out) {
    if (v + shift >= 0) adjusted.push_back(v + shift);
  }
  return adjusted;
}

}  // namespace moltailor::chem
