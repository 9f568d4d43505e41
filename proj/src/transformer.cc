#include "moltailor/transformer.h"

#include <algorithm>
#include <cmath>

namespace moltailor {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw Error("duplicate parameter " + name);
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw Error("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& it) { return it.first == name; });
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [n, t] : items_) out.push_back(t);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : items_) t.zero_grad();
}

Tensor init_weight(ParamStore& store, const std::string& name, const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, 0.02);
  return store.add(name, Tensor::from(shape, std::move(v)));
}

Tensor init_constant(ParamStore& store, const std::string& name, const Shape& shape, double value) {
  return store.add(name, Tensor::full(shape, value));
}

KeyMask KeyMask::all_valid(int batch, int length) {
  return {batch, length, std::vector<std::uint8_t>(static_cast<std::size_t>(batch) * length, 1)};
}

KeyMask KeyMask::none_valid(int batch, int length) {
  return {batch, length, std::vector<std::uint8_t>(static_cast<std::size_t>(batch) * length, 0)};
}

std::vector<double> KeyMask::bias() const {
  std::vector<double> b(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) b[i] = valid[i] ? 0.0 : kMaskBias;
  return b;
}

int KeyMask::count(int b) const {
  return static_cast<int>(std::count(valid.begin() + static_cast<std::ptrdiff_t>(b) * length,
                                     valid.begin() + static_cast<std::ptrdiff_t>(b + 1) * length, std::uint8_t{1}));
}

KeyMask concat_masks(const KeyMask& a, const KeyMask& b) {
  if (a.batch != b.batch) throw ShapeMismatch("mask batch sizes differ");
  KeyMask out{a.batch, a.length + b.length, {}};
  out.valid.reserve(static_cast<std::size_t>(out.batch) * out.length);
  for (int i = 0; i < a.batch; ++i) {
    out.valid.insert(out.valid.end(), a.valid.begin() + i * a.length, a.valid.begin() + (i + 1) * a.length);
    out.valid.insert(out.valid.end(), b.valid.begin() + i * b.length, b.valid.begin() + (i + 1) * b.length);
  }
  return out;
}

namespace {

AttentionParams make_attention(ParamStore& s, const std::string& p, int d, int heads, bool wo, Rng& rng) {
  if (heads <= 0 || d % heads != 0) throw ShapeMismatch("width " + std::to_string(d) + " not divisible by heads");
  AttentionParams a;
  a.heads = heads;
  a.wq = init_weight(s, p + ".attn.wq", {d, d}, rng);
  a.wk = init_weight(s, p + ".attn.wk", {d, d}, rng);
  a.wv = init_weight(s, p + ".attn.wv", {d, d}, rng);
  if (wo) a.wo = init_weight(s, p + ".attn.wo", {d, d}, rng);
  return a;
}

FfnParams make_ffn(ParamStore& s, const std::string& p, int d, const BlockOptions& opt, Rng& rng) {
  FfnParams f;
  f.activation = opt.activation;
  const int h = d * opt.ffn_mult;
  f.w1 = init_weight(s, p + ".ffn.w1", {d, h}, rng);
  f.b1 = init_constant(s, p + ".ffn.b1", {h}, 0.0);
  f.w2 = init_weight(s, p + ".ffn.w2", {h, d}, rng);
  f.b2 = init_constant(s, p + ".ffn.b2", {d}, 0.0);
  return f;
}

LayerNormParams make_ln(ParamStore& s, const std::string& p, int d) {
  return {init_constant(s, p + ".gamma", {d}, 1.0), init_constant(s, p + ".beta", {d}, 0.0)};
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) { return ops::layer_norm(x, p.gamma, p.beta); }

Tensor project_out(const Tensor& merged, const Tensor& wo) { return wo.defined() ? ops::matmul(merged, wo) : merged; }

void check_mask(const KeyMask& m, int batch, int length, const char* what) {
  if (m.batch != batch || m.length != length ||
      m.valid.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(length)) {
    throw ShapeMismatch(std::string(what) + " mask does not match its sequence");
  }
}

template <typename Block, typename Attend>
Tensor wired_block(const Tensor& x, const Block& p, Attend attend) {
  // dropout is the identity outside training
  if (p.wiring == BlockWiring::kSingleSublayer) {
    return layer_norm(ops::add(x, ops::dropout(ffn(attend(x), p.ffn))), p.ln2);
  }
  const Tensor h = layer_norm(ops::add(x, ops::dropout(attend(x))), p.ln1);
  return layer_norm(ops::add(h, ops::dropout(ffn(h, p.ffn))), p.ln2);
}

}  // namespace

BlockParams make_block(ParamStore& store, const std::string& prefix, int d, int heads, const BlockOptions& opt,
                       Rng& rng) {
  BlockParams b;
  b.attn = make_attention(store, prefix, d, heads, opt.output_projection, rng);
  b.ffn = make_ffn(store, prefix, d, opt, rng);
  b.ln1 = make_ln(store, prefix + ".ln1", d);
  b.ln2 = make_ln(store, prefix + ".ln2", d);
  b.wiring = opt.wiring;
  return b;
}

MtBlockParams make_mt_block(ParamStore& store, const std::string& prefix, int d_t, int d_m, int heads,
                            const BlockOptions& opt, Rng& rng) {
  if (heads <= 0 || d_t % heads != 0) throw ShapeMismatch("text width not divisible by heads");
  MtBlockParams b;
  auto& a = b.attn;
  a.heads = heads;
  a.wq_t = init_weight(store, prefix + ".attn.wq_t", {d_t, d_t}, rng);
  a.wk_t = init_weight(store, prefix + ".attn.wk_t", {d_t, d_t}, rng);
  a.wv_t = init_weight(store, prefix + ".attn.wv_t", {d_t, d_t}, rng);
  a.wk_m = init_weight(store, prefix + ".attn.wk_m", {d_m, d_t}, rng);
  a.wv_m = init_weight(store, prefix + ".attn.wv_m", {d_m, d_t}, rng);
  if (opt.output_projection) a.wo = init_weight(store, prefix + ".attn.wo", {d_t, d_t}, rng);
  b.ffn = make_ffn(store, prefix, d_t, opt, rng);
  b.ln1 = make_ln(store, prefix + ".ln1", d_t);
  b.ln2 = make_ln(store, prefix + ".ln2", d_t);
  b.wiring = opt.wiring;
  return b;
}

AttentionResult attention(const Tensor& q, const Tensor& k, const Tensor& v, const KeyMask& mask) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4 || k.shape() != v.shape() || q.dim(0) != k.dim(0) ||
      q.dim(1) != k.dim(1) || q.dim(3) != k.dim(3)) {
    throw ShapeMismatch("attention: Q " + shape_string(q.shape()) + ", K " + shape_string(k.shape()) + ", V " +
                        shape_string(v.shape()));
  }
  check_mask(mask, k.dim(0), k.dim(2), "key");
  for (int b = 0; b < mask.batch; ++b) {
    if (mask.count(b) == 0) throw FullMask("every key of batch item " + std::to_string(b) + " is masked");
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(3)));
  const Tensor scores = ops::add_key_bias(ops::scale(ops::matmul_nt(q, k), inv), mask.bias());
  const Tensor probs = ops::softmax(scores, -1);
  return {ops::matmul(ops::dropout(probs), v), probs};
}

Tensor split_heads(const Tensor& x, int heads) {
  const int b = x.dim(0), n = x.dim(1), d = x.dim(2);
  if (d % heads != 0) throw ShapeMismatch("width not divisible by heads");
  return ops::permute(ops::reshape(x, {b, n, heads, d / heads}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
  const int b = x.dim(0), h = x.dim(1), n = x.dim(2), dk = x.dim(3);
  return ops::reshape(ops::permute(x, {0, 2, 1, 3}), {b, n, h * dk});
}

Tensor mha(const Tensor& x, const AttentionParams& p, const KeyMask& mask, Tensor* probs) {
  if (x.rank() != 3) throw ShapeMismatch("mha expects (b, n, d)");
  const Tensor q = split_heads(ops::matmul(x, p.wq), p.heads);
  const Tensor k = split_heads(ops::matmul(x, p.wk), p.heads);
  const Tensor v = split_heads(ops::matmul(x, p.wv), p.heads);
  AttentionResult r = attention(q, k, v, mask);
  if (probs) *probs = r.probs;
  return project_out(merge_heads(r.context), p.wo);
}

namespace {

struct HybridProjections {
  Tensor q, k_t, v_t, k_m, v_m;
};

HybridProjections project_hybrid(const Tensor& x_t, const Tensor& x_m, const HybridAttentionParams& p) {
  if (x_t.rank() != 3 || x_m.rank() != 3 || x_t.dim(0) != x_m.dim(0)) {
    throw ShapeMismatch("mha_star expects (b, n_t, d_t) and (b, n_m, d_m)");
  }
  return {split_heads(ops::matmul(x_t, p.wq_t), p.heads), split_heads(ops::matmul(x_t, p.wk_t), p.heads),
          split_heads(ops::matmul(x_t, p.wv_t), p.heads), split_heads(ops::matmul(x_m, p.wk_m), p.heads),
          split_heads(ops::matmul(x_m, p.wv_m), p.heads)};
}

}  // namespace

Tensor mha_star(const Tensor& x_t, const Tensor& x_m, const HybridAttentionParams& p, const KeyMask& text_mask,
                const KeyMask& mol_mask, Tensor* probs) {
  const HybridProjections h = project_hybrid(x_t, x_m, p);
  check_mask(text_mask, x_t.dim(0), x_t.dim(1), "text");
  check_mask(mol_mask, x_m.dim(0), x_m.dim(1), "molecule");
  const Tensor k = ops::concat({h.k_t, h.k_m}, 2);
  const Tensor v = ops::concat({h.v_t, h.v_m}, 2);
  AttentionResult r = attention(h.q, k, v, concat_masks(text_mask, mol_mask));
  if (probs) *probs = r.probs;
  return project_out(merge_heads(r.context), p.wo);
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
  const Tensor pre = ops::add_bias(ops::matmul(x, p.w1), p.b1);
  const Tensor act = p.activation == Activation::kGelu ? ops::gelu(pre) : ops::relu(pre);
  return ops::add_bias(ops::matmul(act, p.w2), p.b2);
}

Tensor teb(const Tensor& x, const BlockParams& p, const KeyMask& mask, Tensor* probs) {
  return wired_block(x, p, [&](const Tensor& in) { return mha(in, p.attn, mask, probs); });
}

Tensor mt_block(const Tensor& x_t, const Tensor& x_m, const MtBlockParams& p, const KeyMask& text_mask,
                const KeyMask& mol_mask, Tensor* probs) {
  return wired_block(x_t, p, [&](const Tensor& in) { return mha_star(in, x_m, p.attn, text_mask, mol_mask, probs); });
}

DecompositionReport verify_decomposition(const Tensor& x_t, const Tensor& x_m, const HybridAttentionParams& p,
                                         const KeyMask& text_mask, const KeyMask& mol_mask) {
  NoGradGuard no_grad;
  const HybridProjections h = project_hybrid(x_t, x_m, p);
  check_mask(text_mask, x_t.dim(0), x_t.dim(1), "text");
  check_mask(mol_mask, x_m.dim(0), x_m.dim(1), "molecule");
  const int b = h.q.dim(0), heads = h.q.dim(1), nt = h.q.dim(2), dk = h.q.dim(3), nm = h.k_m.dim(2);

  const AttentionResult hybrid =
      attention(h.q, ops::concat({h.k_t, h.k_m}, 2), ops::concat({h.v_t, h.v_m}, 2), concat_masks(text_mask, mol_mask));
  const AttentionResult self = attention(h.q, h.k_t, h.v_t, text_mask);

  // Cross attention exists only for items with at least one molecule key.
  std::vector<double> cross(static_cast<std::size_t>(b) * heads * nt * dk, 0.0);
  for (int i = 0; i < b; ++i) {
    if (mol_mask.count(i) == 0) continue;
    KeyMask one{1, nm, std::vector<std::uint8_t>(mol_mask.valid.begin() + i * nm, mol_mask.valid.begin() + (i + 1) * nm)};
    const AttentionResult c = attention(ops::slice(h.q, 0, i, i + 1), ops::slice(h.k_m, 0, i, i + 1),
                                        ops::slice(h.v_m, 0, i, i + 1), one);
    std::copy(c.context.data().begin(), c.context.data().end(), cross.begin() + static_cast<std::ptrdiff_t>(i) * heads * nt * dk);
  }

  DecompositionReport rep;
  rep.hybrid_out = hybrid.context;
  rep.self_out = self.context;
  rep.cross_out = Tensor::from({b, heads, nt, dk}, std::move(cross));
  rep.lambda.resize(static_cast<std::size_t>(b) * heads * nt);
  const auto probs = hybrid.probs.data();
  const int nk = nt + nm;
  for (std::size_t row = 0; row < rep.lambda.size(); ++row) {
    double mass = 0.0;
    for (int j = nt; j < nk; ++j) mass += probs[row * nk + j];
    rep.lambda[row] = mass;
    for (int c = 0; c < dk; ++c) {
      const std::size_t e = row * dk + c;
      const double mix = (1.0 - mass) * rep.self_out.data()[e] + mass * rep.cross_out.data()[e];
      rep.max_residual = std::max(rep.max_residual, std::abs(rep.hybrid_out.data()[e] - mix));
    }
  }
  return rep;
}

}  // namespace moltailor
