#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moltailor/random.h"
#include "moltailor/tensor.h"

namespace moltailor {

class FullMask : public Error {
 public:
  using Error::Error;
};

// Named trainable tensors in creation order.
class ParamStore {
 public:
  // Registers a leaf that requires grad. Throws on duplicate names.
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// normal(0, 0.02) weights, zero biases, unit LN gains.
Tensor init_weight(ParamStore& store, const std::string& name, const Shape& shape, Rng& rng);
Tensor init_constant(ParamStore& store, const std::string& name, const Shape& shape, double value);

// Key validity per (batch, position); 1 marks a real token.
struct KeyMask {
  int batch = 0;
  int length = 0;
  std::vector<std::uint8_t> valid;

  static KeyMask all_valid(int batch, int length);
  static KeyMask none_valid(int batch, int length);
  // 0 for valid keys, -1e9 for padded ones.
  std::vector<double> bias() const;
  int count(int b) const;
};

KeyMask concat_masks(const KeyMask& a, const KeyMask& b);

inline constexpr double kMaskBias = -1e9;

enum class Activation { kRelu, kGelu };
enum class BlockWiring {
  kStandard,        // h = LN1(x + MHA(x)); out = LN2(h + FFN(h))
  kSingleSublayer,  // out = LN2(x + FFN(MHA(x))); LN1 unused
};

struct AttentionParams {
  Tensor wq, wk, wv;  // d x d
  Tensor wo;          // d x d, undefined when the output projection is off
  int heads = 1;
};

// Text-side queries, keys and values plus molecule-side keys and values that
// project d_m into the text width.
struct HybridAttentionParams {
  Tensor wq_t, wk_t, wv_t;  // d_t x d_t
  Tensor wk_m, wv_m;        // d_m x d_t
  Tensor wo;                // d_t x d_t or undefined
  int heads = 1;
};

struct FfnParams {
  Tensor w1, b1, w2, b2;  // d x (mult*d), mult*d, (mult*d) x d, d
  Activation activation = Activation::kRelu;
};

struct LayerNormParams {
  Tensor gamma, beta;
};

struct BlockParams {
  AttentionParams attn;
  FfnParams ffn;
  LayerNormParams ln1, ln2;
  BlockWiring wiring = BlockWiring::kStandard;
};

struct MtBlockParams {
  HybridAttentionParams attn;
  FfnParams ffn;
  LayerNormParams ln1, ln2;
  BlockWiring wiring = BlockWiring::kStandard;
};

struct BlockOptions {
  int ffn_mult = 4;
  Activation activation = Activation::kRelu;
  BlockWiring wiring = BlockWiring::kStandard;
  bool output_projection = true;
};

BlockParams make_block(ParamStore& store, const std::string& prefix, int d, int heads, const BlockOptions& opt,
                       Rng& rng);
MtBlockParams make_mt_block(ParamStore& store, const std::string& prefix, int d_t, int d_m, int heads,
                            const BlockOptions& opt, Rng& rng);

struct AttentionResult {
  Tensor context;  // (b, h, q, d/h)
  Tensor probs;    // (b, h, q, k)
};

// softmax(Q K^T / sqrt(d_k) + mask bias) V for Q (b,h,q,dk), K/V (b,h,k,dk).
// Throws FullMask when an item has no valid key.
AttentionResult attention(const Tensor& q, const Tensor& k, const Tensor& v, const KeyMask& mask);

// (b, n, d) <-> (b, h, n, d/h)
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);

// Optional capture of the attention probabilities of a call.
Tensor mha(const Tensor& x, const AttentionParams& p, const KeyMask& mask, Tensor* probs = nullptr);
Tensor mha_star(const Tensor& x_t, const Tensor& x_m, const HybridAttentionParams& p, const KeyMask& text_mask,
                const KeyMask& mol_mask, Tensor* probs = nullptr);

Tensor ffn(const Tensor& x, const FfnParams& p);

Tensor teb(const Tensor& x, const BlockParams& p, const KeyMask& mask, Tensor* probs = nullptr);
// x_m is read-only context.
Tensor mt_block(const Tensor& x_t, const Tensor& x_m, const MtBlockParams& p, const KeyMask& text_mask,
                const KeyMask& mol_mask, Tensor* probs = nullptr);

// Hybrid attention against separately normalised self (text keys) and cross
// (molecule keys) attention, per head and query. lambda is the hybrid softmax
// mass on molecule keys. Contexts are per head, before the output projection;
// cross rows of items without molecule keys are 0 (their lambda is 0).
struct DecompositionReport {
  std::vector<double> lambda;  // (b, h, n_t) row-major
  Tensor self_out, cross_out, hybrid_out;
  double max_residual = 0.0;
};

DecompositionReport verify_decomposition(const Tensor& x_t, const Tensor& x_m, const HybridAttentionParams& p,
                                         const KeyMask& text_mask, const KeyMask& mol_mask);

}  // namespace moltailor
