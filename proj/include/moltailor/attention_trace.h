#pragma once

#include <string>
#include <vector>

#include "moltailor/model.h"

namespace moltailor {

// [CLS]-query attention from the last unimodal and last multimodal text layers,
// averaged over heads.
struct AttnTrace {
  std::string smiles;
  std::string description;
  std::vector<std::string> words;
  std::vector<double> unimodal_words;   // sums to 1
  std::vector<double> multimodal_words; // text part of the last multimodal layer, renormalized to 1
  std::vector<std::string> atoms;       // atom symbols in parse order
  std::vector<double> multimodal_atoms; // raw [CLS] -> atom-token mass, not renormalized
  double molecule_mass = 0.0;           // [CLS] mass on all molecule keys (lambda)
};

// Molecule keys can be masked out entirely to inspect the text-only path.
AttnTrace extract_cls_attention(const Model& model, const std::string& smiles, const std::string& description,
                                bool mask_molecule = false);

std::string trace_to_json(const AttnTrace& t);
// Word heatmaps for both layers and an atom-coloured 2D skeleton.
std::string trace_to_svg(const AttnTrace& t);

}  // namespace moltailor
