#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace moltailor {

// `count` distinct canonical SMILES assembled from a fixed fragment grammar
// (head group, chain and ring linkers with side groups, tail group). Sorted by
// generation order. Deterministic in `seed`.
std::vector<std::string> synth_molecules(int count, std::uint64_t seed);

}  // namespace moltailor
