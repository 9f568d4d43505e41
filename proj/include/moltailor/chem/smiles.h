#pragma once

#include <span>
#include <string>
#include <string_view>

#include "moltailor/chem/mol_graph.h"
#include "moltailor/random.h"

namespace moltailor::chem {

// Parses the supported SMILES dialect: organic-subset and bracket atoms,
// aromatic lowercase atoms, bonds - = # :, branches, ring closures (digits and
// %nn) and '.' components. Stereo markers (/ \ @) are accepted and dropped
// with a warning recorded on the graph. Wildcards are rejected.
//
// Throws SmilesSyntaxError or ValenceError.
MolGraph parse_smiles(std::string_view text);

// Depth-first SMILES emission. Lower priority values are visited first; the
// traversal starts each component at its lowest-priority unvisited atom.
// Ring-closure digits are assigned in discovery order, reusing the lowest free
// digit.
std::string write_smiles(const MolGraph& mol, std::span<const int> priority);

// A valid but arbitrarily ordered SMILES for `mol` (random atom priorities).
std::string random_smiles(const MolGraph& mol, Rng& rng);

}  // namespace moltailor::chem
