#pragma once

#include <filesystem>

#include "moltailor/model.h"

namespace moltailor {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Single-file tensor container:
//   "MTLRCKPT" | u64 LE header length | JSON header | little-endian doubles
// The header carries format_version, dtype, config, config_hash and one
// {name, shape, offset} entry per tensor (offset in doubles).
void write_tensor_file(const std::filesystem::path& path, const ModelConfig& cfg, const ParamStore& params);

// Checkpoint directory: model.ckpt, text_vocab.txt, smiles_vocab.txt.
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace moltailor
