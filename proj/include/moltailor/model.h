#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "moltailor/corpus.h"
#include "moltailor/tensor.h"
#include "moltailor/tokenizer.h"
#include "moltailor/transformer.h"

namespace moltailor {

class AllRecordsSkipped : public Error {
 public:
  using Error::Error;
};

enum class Architecture {
  kMolTailor,     // molecule tower + unimodal text layers + multimodal text layers
  kMoleculeOnly,  // molecule tower alone, no text input
  kSingleTower,   // one text stack over [SMILES tokens ; description tokens]
};
enum class Pooling { kCls, kMean };

struct ModelConfig {
  Architecture architecture = Architecture::kMolTailor;
  int d_t = 128, d_m = 128;
  int h_t = 4, h_m = 4;
  int L_text = 8, L_uni = 6, L_mol = 4;
  int ffn_mult = 4;
  int max_text_len = 96, max_smiles_len = 96;
  int num_outputs = 24;
  bool freeze_m_encoder = false;
  // out = LN2(x + FFN(MHA(x))) instead of two residual sublayers.
  bool single_sublayer = false;
  bool output_projection = true;
  Pooling pooling = Pooling::kCls;
  Activation activation = Activation::kGelu;
  // On embeddings, attention probabilities and sublayer outputs while
  // pretraining; inference never drops.
  double dropout = 0.1;

  // Throws Error naming the first bad field.
  void validate() const;
  // Representation width (d_m for the molecule-only model).
  int rep_dim() const { return architecture == Architecture::kMoleculeOnly ? d_m : d_t; }
};

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

// Stable JSON (sorted keys) and its FNV-1a 64 hash.
std::string config_to_json(const ModelConfig& c);
ModelConfig config_from_json(std::string_view text);
std::uint64_t config_hash(const ModelConfig& c);

// Padded ids and key masks for one mini-batch.
struct Batch {
  int size = 0;
  int text_len = 0, mol_len = 0;
  std::vector<int> text_ids, mol_ids;  // row-major (size, len), kPadId padding
  KeyMask text_mask, mol_mask;
  int truncated = 0;                    // sequences cut to the max length
};

Batch make_batch(const std::vector<std::string>& smiles, const std::vector<std::string>& texts,
                 const Vocab& text_vocab, const Vocab& smiles_vocab, const ModelConfig& cfg);

// Head-averaging is left to the caller; probs are (b, h, q, k).
struct AttentionCapture {
  Tensor last_unimodal;  // over text keys
  Tensor last_multimodal;  // over [text keys ; molecule keys]
};

class Model {
 public:
  Model(ModelConfig cfg, Vocab text_vocab, Vocab smiles_vocab, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocab& text_vocab() const { return text_vocab_; }
  const Vocab& smiles_vocab() const { return smiles_vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  // Parameters the optimizer updates (molecule tower left out when frozen).
  std::vector<std::pair<std::string, Tensor>> trainable() const;

  Batch batch(const std::vector<std::string>& smiles, const std::vector<std::string>& texts) const {
    return make_batch(smiles, texts, text_vocab_, smiles_vocab_, cfg_);
  }

  // (b, n_m, d_m)
  Tensor encode_molecule(const Batch& b) const;
  // (b, n_t, d_t) after the unimodal layers.
  Tensor encode_text_unimodal(const Batch& b, AttentionCapture* cap = nullptr) const;
  // Multimodal layers on x_t with x_m as context, then pooling: (b, d_t).
  Tensor fuse(const Tensor& x_t, const Tensor& x_m, const Batch& b, AttentionCapture* cap = nullptr) const;
  // Pooled representation for any architecture: (b, rep_dim).
  Tensor represent(const Batch& b, AttentionCapture* cap = nullptr) const;
  // Linear head on the representation: (b, num_outputs).
  Tensor pretrain_forward(const Batch& b) const;

 private:
  Tensor pool(const Tensor& x, const KeyMask& mask) const;
  Tensor embed(const Tensor& table, const Tensor& pos, const std::vector<int>& ids, int b, int n) const;

  ModelConfig cfg_;
  Vocab text_vocab_, smiles_vocab_;
  ParamStore params_;
  Tensor mol_tok_, mol_pos_, text_tok_, text_pos_, head_w_, head_b_;
  std::vector<BlockParams> mol_blocks_, uni_blocks_;
  std::vector<MtBlockParams> mt_blocks_;
};

struct LossReport {
  Tensor total;                  // scalar with history
  double value = 0.0;
  std::vector<int> valid_counts; // count(m_j) per record
  int skipped = 0;               // records with count(m_j) = 0
};

// (1/N) sum_j (1/count(m_j)) sum_i m_ij (y_ij - yhat_ij)^2 over records with at
// least one label. Throws AllRecordsSkipped when none has.
LossReport mtr_loss(const Tensor& yhat, const std::vector<double>& y, const std::vector<std::uint8_t>& m);

// Tokens for vocabulary building.
std::vector<std::vector<std::string>> text_token_lists(const std::vector<MtmtrRecord>& records);
std::vector<std::vector<std::string>> smiles_token_lists(const std::vector<MtmtrRecord>& records);

}  // namespace moltailor
