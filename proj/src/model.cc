#include "moltailor/model.h"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace moltailor {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("invalid model config: " + what);
}

std::string pooling_name(Pooling p) { return p == Pooling::kCls ? "cls" : "mean"; }
std::string activation_name(Activation a) { return a == Activation::kGelu ? "gelu" : "relu"; }

json config_json(const ModelConfig& c) {
  return json{{"architecture", to_string(c.architecture)},
              {"d_t", c.d_t},
              {"d_m", c.d_m},
              {"h_t", c.h_t},
              {"h_m", c.h_m},
              {"L_text", c.L_text},
              {"L_uni", c.L_uni},
              {"L_mol", c.L_mol},
              {"ffn_mult", c.ffn_mult},
              {"max_text_len", c.max_text_len},
              {"max_smiles_len", c.max_smiles_len},
              {"num_outputs", c.num_outputs},
              {"freeze_m_encoder", c.freeze_m_encoder},
              {"single_sublayer", c.single_sublayer},
              {"output_projection", c.output_projection},
              {"pooling", pooling_name(c.pooling)},
              {"activation", activation_name(c.activation)},
              {"dropout", c.dropout}};
}

std::vector<int> position_ids(int b, int n, int offset = 0) {
  std::vector<int> ids(static_cast<std::size_t>(b) * n);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < n; ++j) ids[i * n + j] = offset + j;
  return ids;
}

void pad_rows(const std::vector<std::vector<int>>& rows, int len, std::vector<int>& ids, KeyMask& mask) {
  const int b = static_cast<int>(rows.size());
  ids.assign(static_cast<std::size_t>(b) * len, kPadId);
  mask = KeyMask::none_valid(b, len);
  for (int i = 0; i < b; ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      ids[i * len + j] = rows[i][j];
      mask.valid[i * len + j] = 1;
    }
}

}  // namespace

void ModelConfig::validate() const {
  require(d_t > 0 && d_m > 0, "widths must be positive");
  require(h_t > 0 && d_t % h_t == 0, "d_t must be divisible by h_t");
  require(h_m > 0 && d_m % h_m == 0, "d_m must be divisible by h_m");
  require(L_mol >= 1, "L_mol must be at least 1");
  require(ffn_mult >= 1, "ffn_mult must be at least 1");
  require(max_text_len >= 2 && max_smiles_len >= 2, "max lengths must be at least 2");
  require(num_outputs >= 1, "num_outputs must be at least 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  if (architecture == Architecture::kMolTailor) require(0 < L_uni && L_uni < L_text, "need 0 < L_uni < L_text");
  if (architecture == Architecture::kSingleTower) require(L_text >= 1, "L_text must be at least 1");
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::kMolTailor: return "moltailor";
    case Architecture::kMoleculeOnly: return "molecule_only";
    case Architecture::kSingleTower: return "single_tower";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "moltailor") return Architecture::kMolTailor;
  if (s == "molecule_only") return Architecture::kMoleculeOnly;
  if (s == "single_tower") return Architecture::kSingleTower;
  throw Error("unknown architecture: " + s);
}

std::string config_to_json(const ModelConfig& c) { return config_json(c).dump(); }

ModelConfig config_from_json(std::string_view text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  c.d_t = j.at("d_t");
  c.d_m = j.at("d_m");
  c.h_t = j.at("h_t");
  c.h_m = j.at("h_m");
  c.L_text = j.at("L_text");
  c.L_uni = j.at("L_uni");
  c.L_mol = j.at("L_mol");
  c.ffn_mult = j.at("ffn_mult");
  c.max_text_len = j.at("max_text_len");
  c.max_smiles_len = j.at("max_smiles_len");
  c.num_outputs = j.at("num_outputs");
  c.freeze_m_encoder = j.at("freeze_m_encoder");
  c.single_sublayer = j.at("single_sublayer");
  c.output_projection = j.at("output_projection");
  const std::string pool = j.at("pooling");
  require(pool == "cls" || pool == "mean", "pooling must be cls or mean");
  c.pooling = pool == "cls" ? Pooling::kCls : Pooling::kMean;
  const std::string act = j.at("activation");
  require(act == "gelu" || act == "relu", "activation must be gelu or relu");
  c.activation = act == "gelu" ? Activation::kGelu : Activation::kRelu;
  c.dropout = j.at("dropout");
  c.validate();
  return c;
}

std::uint64_t config_hash(const ModelConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Batch make_batch(const std::vector<std::string>& smiles, const std::vector<std::string>& texts,
                 const Vocab& text_vocab, const Vocab& smiles_vocab, const ModelConfig& cfg) {
  const bool uses_text = cfg.architecture != Architecture::kMoleculeOnly;
  if (smiles.empty()) throw Error("empty batch");
  if (uses_text && texts.size() != smiles.size()) throw Error("batch needs one text per molecule");
  Batch b;
  b.size = static_cast<int>(smiles.size());
  std::vector<std::vector<int>> mol_rows, text_rows;
  for (const auto& s : smiles) {
    Encoded e = tokenize_smiles(s, smiles_vocab, cfg.max_smiles_len);
    b.truncated += e.truncated;
    b.mol_len = std::max(b.mol_len, static_cast<int>(e.ids.size()));
    mol_rows.push_back(std::move(e.ids));
  }
  pad_rows(mol_rows, b.mol_len, b.mol_ids, b.mol_mask);
  if (uses_text) {
    for (const auto& t : texts) {
      Encoded e = tokenize_text(t, text_vocab, cfg.max_text_len);
      b.truncated += e.truncated;
      // the single tower already opens with the SMILES [CLS]
      if (cfg.architecture == Architecture::kSingleTower) e.ids.erase(e.ids.begin());
      b.text_len = std::max(b.text_len, static_cast<int>(e.ids.size()));
      text_rows.push_back(std::move(e.ids));
    }
    pad_rows(text_rows, b.text_len, b.text_ids, b.text_mask);
  } else {
    b.text_mask = KeyMask::none_valid(b.size, 0);
  }
  return b;
}

Model::Model(ModelConfig cfg, Vocab text_vocab, Vocab smiles_vocab, std::uint64_t seed)
    : cfg_(cfg), text_vocab_(std::move(text_vocab)), smiles_vocab_(std::move(smiles_vocab)) {
  cfg_.validate();
  Rng rng(seed);
  BlockOptions opt;
  opt.ffn_mult = cfg_.ffn_mult;
  opt.activation = cfg_.activation;
  opt.wiring = cfg_.single_sublayer ? BlockWiring::kSingleSublayer : BlockWiring::kStandard;
  opt.output_projection = cfg_.output_projection;
  auto& P = params_;
  const int d_rep = cfg_.rep_dim();

  switch (cfg_.architecture) {
    case Architecture::kMolTailor:
    case Architecture::kMoleculeOnly:
      mol_tok_ = init_weight(P, "mol.tok_emb", {smiles_vocab_.size(), cfg_.d_m}, rng);
      mol_pos_ = init_weight(P, "mol.pos_emb", {cfg_.max_smiles_len, cfg_.d_m}, rng);
      for (int i = 0; i < cfg_.L_mol; ++i)
        mol_blocks_.push_back(make_block(P, "mol.layer" + std::to_string(i), cfg_.d_m, cfg_.h_m, opt, rng));
      if (cfg_.architecture == Architecture::kMoleculeOnly) break;
      text_tok_ = init_weight(P, "text.tok_emb", {text_vocab_.size(), cfg_.d_t}, rng);
      text_pos_ = init_weight(P, "text.pos_emb", {cfg_.max_text_len, cfg_.d_t}, rng);
      for (int i = 0; i < cfg_.L_uni; ++i)
        uni_blocks_.push_back(make_block(P, "text.layer" + std::to_string(i), cfg_.d_t, cfg_.h_t, opt, rng));
      for (int i = cfg_.L_uni; i < cfg_.L_text; ++i)
        mt_blocks_.push_back(
            make_mt_block(P, "text.layer" + std::to_string(i), cfg_.d_t, cfg_.d_m, cfg_.h_t, opt, rng));
      break;
    case Architecture::kSingleTower:
      mol_tok_ = init_weight(P, "single.smiles_emb", {smiles_vocab_.size(), cfg_.d_t}, rng);
      text_tok_ = init_weight(P, "single.text_emb", {text_vocab_.size(), cfg_.d_t}, rng);
      text_pos_ = init_weight(P, "single.pos_emb", {cfg_.max_smiles_len + cfg_.max_text_len, cfg_.d_t}, rng);
      for (int i = 0; i < cfg_.L_text; ++i)
        uni_blocks_.push_back(make_block(P, "single.layer" + std::to_string(i), cfg_.d_t, cfg_.h_t, opt, rng));
      break;
  }
  head_w_ = init_weight(P, "head.w", {d_rep, cfg_.num_outputs}, rng);
  head_b_ = init_constant(P, "head.b", {cfg_.num_outputs}, 0.0);
}

std::vector<std::pair<std::string, Tensor>> Model::trainable() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : params_.items())
    if (!(cfg_.freeze_m_encoder && name.rfind("mol.", 0) == 0)) out.emplace_back(name, t);
  return out;
}

Tensor Model::embed(const Tensor& table, const Tensor& pos, const std::vector<int>& ids, int b, int n) const {
  return ops::dropout(ops::add(ops::embedding(table, ids, {b, n}), ops::embedding(pos, position_ids(b, n), {b, n})));
}

Tensor Model::encode_molecule(const Batch& b) const {
  if (!mol_pos_.defined()) throw Error("model has no molecule tower");
  Tensor x = embed(mol_tok_, mol_pos_, b.mol_ids, b.size, b.mol_len);
  for (const auto& blk : mol_blocks_) x = teb(x, blk, b.mol_mask);
  return cfg_.freeze_m_encoder ? x.detach() : x;
}

Tensor Model::encode_text_unimodal(const Batch& b, AttentionCapture* cap) const {
  if (cfg_.architecture != Architecture::kMolTailor) throw Error("model has no unimodal text encoder");
  Tensor x = embed(text_tok_, text_pos_, b.text_ids, b.size, b.text_len);
  for (std::size_t i = 0; i < uni_blocks_.size(); ++i) {
    const bool last = cap && i + 1 == uni_blocks_.size();
    x = teb(x, uni_blocks_[i], b.text_mask, last ? &cap->last_unimodal : nullptr);
  }
  return x;
}

Tensor Model::fuse(const Tensor& x_t, const Tensor& x_m, const Batch& b, AttentionCapture* cap) const {
  Tensor x = x_t;
  for (std::size_t i = 0; i < mt_blocks_.size(); ++i) {
    const bool last = cap && i + 1 == mt_blocks_.size();
    x = mt_block(x, x_m, mt_blocks_[i], b.text_mask, b.mol_mask, last ? &cap->last_multimodal : nullptr);
  }
  return pool(x, b.text_mask);
}

Tensor Model::pool(const Tensor& x, const KeyMask& mask) const {
  const int b = x.dim(0), n = x.dim(1), d = x.dim(2);
  if (cfg_.pooling == Pooling::kCls) return ops::reshape(ops::slice(x, 1, 0, 1), {b, d});
  std::vector<double> w(static_cast<std::size_t>(b) * n, 0.0);
  for (int i = 0; i < b; ++i) {
    const int c = mask.count(i);
    for (int j = 0; j < n; ++j)
      if (mask.valid[i * n + j]) w[i * n + j] = 1.0 / c;
  }
  return ops::reshape(ops::matmul(Tensor::from({b, 1, n}, std::move(w)), x), {b, d});
}

Tensor Model::represent(const Batch& b, AttentionCapture* cap) const {
  switch (cfg_.architecture) {
    case Architecture::kMolTailor:
      return fuse(encode_text_unimodal(b, cap), encode_molecule(b), b, cap);
    case Architecture::kMoleculeOnly:
      return pool(encode_molecule(b), b.mol_mask);
    case Architecture::kSingleTower: {
      const int n = b.mol_len + b.text_len;
      std::vector<int> pos = position_ids(b.size, n);
      Tensor x = ops::dropout(ops::add(ops::concat({ops::embedding(mol_tok_, b.mol_ids, {b.size, b.mol_len}),
                                                    ops::embedding(text_tok_, b.text_ids, {b.size, b.text_len})},
                                                   1),
                                       ops::embedding(text_pos_, pos, {b.size, n})));
      const KeyMask mask = concat_masks(b.mol_mask, b.text_mask);
      for (std::size_t i = 0; i < uni_blocks_.size(); ++i) {
        const bool last = cap && i + 1 == uni_blocks_.size();
        x = teb(x, uni_blocks_[i], mask, last ? &cap->last_unimodal : nullptr);
      }
      return pool(x, mask);
    }
  }
  throw Error("unreachable");
}

Tensor Model::pretrain_forward(const Batch& b) const {
  return ops::add_bias(ops::matmul(represent(b), head_w_), head_b_);
}

LossReport mtr_loss(const Tensor& yhat, const std::vector<double>& y, const std::vector<std::uint8_t>& m) {
  if (yhat.rank() != 2) throw ShapeMismatch("predictions must be (N, M)");
  const int n = yhat.dim(0), cols = yhat.dim(1);
  if (y.size() != yhat.size() || m.size() != yhat.size()) throw ShapeMismatch("labels and mask must match predictions");
  LossReport r;
  r.valid_counts.resize(n);
  int used = 0;
  for (int j = 0; j < n; ++j) {
    int c = 0;
    for (int i = 0; i < cols; ++i) c += m[j * cols + i] != 0;
    r.valid_counts[j] = c;
    if (c == 0) ++r.skipped;
    else ++used;
  }
  if (used == 0) throw AllRecordsSkipped("every record in the batch has an empty label mask");
  std::vector<double> w(yhat.size(), 0.0), target(yhat.size(), 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < cols; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * cols + i;
      if (!m[k]) continue;
      w[k] = 1.0 / (static_cast<double>(used) * r.valid_counts[j]);
      target[k] = y[k];
    }
  const Tensor diff = ops::sub(yhat, Tensor::from({n, cols}, std::move(target)));
  r.total = ops::sum(ops::mul(ops::mul(diff, diff), Tensor::from({n, cols}, std::move(w))));
  r.value = r.total.item();
  return r;
}

std::vector<std::vector<std::string>> text_token_lists(const std::vector<MtmtrRecord>& records) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : records) out.push_back(split_text(r.description));
  return out;
}

std::vector<std::vector<std::string>> smiles_token_lists(const std::vector<MtmtrRecord>& records) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : records) out.push_back(split_smiles(r.smiles));
  return out;
}

}  // namespace moltailor
