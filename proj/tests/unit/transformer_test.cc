#include <gtest/gtest.h>

#include <cmath>

#include "moltailor/grad_check.h"
#include "moltailor/transformer.h"

using namespace moltailor;

namespace {

Tensor randn(Rng& rng, const Shape& s, double sd = 1.0) {
  std::vector<double> v(shape_size(s));
  for (double& x : v) x = rng.normal(0.0, sd);
  return Tensor::from(s, v);
}

// Larger weights than the 0.02 init so attention is far from uniform.
void scramble(ParamStore& store, Rng& rng, double sd = 0.4) {
  for (auto& [name, t] : store.items()) {
    if (name.find("gamma") != std::string::npos || name.find("beta") != std::string::npos) continue;
    Tensor w = t;
    for (double& x : w.mutable_data()) x = rng.normal(0.0, sd);
  }
}

KeyMask random_mask(Rng& rng, int b, int n, double p_pad) {
  KeyMask m = KeyMask::all_valid(b, n);
  for (auto& v : m.valid) v = rng.bernoulli(p_pad) ? 0 : 1;
  for (int i = 0; i < b; ++i) m.valid[i * n] = 1;
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Attention, SingleKeyReturnsItsValue) {
  Rng rng(1);
  const Tensor q = randn(rng, {1, 1, 3, 4}), k = randn(rng, {1, 1, 1, 4}), v = randn(rng, {1, 1, 1, 4});
  const auto r = attention(q, k, v, KeyMask::all_valid(1, 1));
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(r.context.at({0, 0, i, c}), v.at({0, 0, 0, c}));
}

TEST(Attention, EqualLogitsAverageValues) {
  Rng rng(2);
  const Tensor q = Tensor::zeros({1, 1, 2, 4}), k = randn(rng, {1, 1, 5, 4}), v = randn(rng, {1, 1, 5, 4});
  const auto r = attention(q, k, v, KeyMask::all_valid(1, 5));
  for (int c = 0; c < 4; ++c) {
    double mean = 0;
    for (int j = 0; j < 5; ++j) mean += v.at({0, 0, j, c}) / 5;
    EXPECT_NEAR(r.context.at({0, 0, 1, c}), mean, 1e-15);
  }
}

TEST(Attention, FullMaskRejected) {
  Rng rng(3);
  const Tensor q = randn(rng, {2, 1, 2, 4}), k = randn(rng, {2, 1, 3, 4});
  KeyMask m = KeyMask::all_valid(2, 3);
  m.valid[3] = m.valid[4] = m.valid[5] = 0;
  EXPECT_THROW(attention(q, k, k, m), FullMask);
}

TEST(Attention, PaddedKeysGetZeroProbabilityAndRowsSumToOne) {
  Rng rng(4);
  const Tensor q = randn(rng, {2, 2, 3, 4}), k = randn(rng, {2, 2, 5, 4});
  KeyMask m = random_mask(rng, 2, 5, 0.4);
  const auto r = attention(q, k, k, m);
  for (int b = 0; b < 2; ++b)
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < 3; ++i) {
        double s = 0;
        for (int j = 0; j < 5; ++j) {
          const double p = r.probs.at({b, h, i, j});
          if (!m.valid[b * 5 + j]) EXPECT_EQ(p, 0.0);
          s += p;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
}

TEST(Mha, SingleTokenIsProjectedValue) {
  Rng rng(5);
  ParamStore store;
  const BlockParams blk = make_block(store, "b", 8, 2, {}, rng);
  scramble(store, rng);
  const Tensor x = randn(rng, {1, 1, 8});
  const Tensor out = mha(x, blk.attn, KeyMask::all_valid(1, 1));
  const Tensor ref = ops::matmul(ops::matmul(x, blk.attn.wv), blk.attn.wo);
  EXPECT_LT(max_abs_diff(out, ref), 1e-14);
}

// h = 1 against a direct dense computation.
TEST(Mha, SingleHeadMatchesDenseReference) {
  Rng rng(6);
  ParamStore store;
  const BlockParams blk = make_block(store, "b", 6, 1, {}, rng);
  scramble(store, rng);
  const int n = 4, d = 6;
  const Tensor x = randn(rng, {1, n, d});
  const Tensor out = mha(x, blk.attn, KeyMask::all_valid(1, n));
  auto mm = [](const std::vector<double>& a, const std::vector<double>& b, int r, int k, int c) {
    std::vector<double> o(r * c, 0.0);
    for (int i = 0; i < r; ++i)
      for (int t = 0; t < k; ++t)
        for (int j = 0; j < c; ++j) o[i * c + j] += a[i * k + t] * b[t * c + j];
    return o;
  };
  auto vec = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  const auto X = vec(x);
  const auto Q = mm(X, vec(blk.attn.wq), n, d, d), K = mm(X, vec(blk.attn.wk), n, d, d), V = mm(X, vec(blk.attn.wv), n, d, d);
  std::vector<double> ctx(n * d, 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(n);
    double mx = -1e300, z = 0;
    for (int j = 0; j < n; ++j) {
      s[j] = 0;
      for (int c = 0; c < d; ++c) s[j] += Q[i * d + c] * K[j * d + c];
      s[j] /= std::sqrt(double(d));
      mx = std::max(mx, s[j]);
    }
    for (int j = 0; j < n; ++j) z += (s[j] = std::exp(s[j] - mx));
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < d; ++c) ctx[i * d + c] += s[j] / z * V[j * d + c];
  }
  const auto ref = mm(ctx, vec(blk.attn.wo), n, d, d);
  for (int i = 0; i < n * d; ++i) EXPECT_NEAR(out.data()[i], ref[i], 1e-12);
}

TEST(Mha, BatchPermutationEquivariant) {
  Rng rng(7);
  ParamStore store;
  const BlockParams blk = make_block(store, "b", 8, 2, {}, rng);
  scramble(store, rng);
  const Tensor a = randn(rng, {1, 3, 8}), b = randn(rng, {1, 3, 8});
  const Tensor ab = mha(ops::concat({a, b}, 0), blk.attn, KeyMask::all_valid(2, 3));
  const Tensor ba = mha(ops::concat({b, a}, 0), blk.attn, KeyMask::all_valid(2, 3));
  EXPECT_LT(max_abs_diff(ops::slice(ab, 0, 0, 1), ops::slice(ba, 0, 1, 2)), 1e-12);
}

TEST(Teb, ZeroValuePathAndFfnGivesDoubleLayerNorm) {
  Rng rng(8);
  ParamStore store;
  BlockParams blk = make_block(store, "b", 4, 2, {}, rng);
  for (Tensor t : {blk.attn.wv, blk.ffn.w1, blk.ffn.w2}) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  const Tensor x = Tensor::from({1, 2, 4}, {1, 2, 3, 4, -1, 0, 5, 2});
  const Tensor out = teb(x, blk, KeyMask::all_valid(1, 2));
  // hand reference: LN(LN(x)) per row with eps 1e-5
  auto ln = [](std::vector<double> r) {
    double m = 0, v = 0;
    for (double a : r) m += a / r.size();
    for (double a : r) v += (a - m) * (a - m) / r.size();
    for (double& a : r) a = (a - m) / std::sqrt(v + 1e-5);
    return r;
  };
  for (int row = 0; row < 2; ++row) {
    std::vector<double> r(x.data().begin() + row * 4, x.data().begin() + row * 4 + 4);
    const auto ref = ln(ln(r));
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(out.at({0, row, c}), ref[c], 1e-12);
  }
  // single-sublayer wiring collapses to one LN: LN(x + 0)
  blk.wiring = BlockWiring::kSingleSublayer;
  const Tensor lit = teb(x, blk, KeyMask::all_valid(1, 2));
  for (int row = 0; row < 2; ++row) {
    std::vector<double> r(x.data().begin() + row * 4, x.data().begin() + row * 4 + 4);
    const auto ref = ln(r);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(lit.at({0, row, c}), ref[c], 1e-12);
  }
}

TEST(Teb, ShapePreservedAndGradCheck) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    ParamStore store;
    const BlockParams blk = make_block(store, "b", 8, 2, {2, Activation::kGelu}, rng);
    scramble(store, rng);
    const Tensor x = randn(rng, {2, 3, 8});
    const KeyMask m = random_mask(rng, 2, 3, 0.3);
    EXPECT_EQ(teb(x, blk, m).shape(), x.shape());
    const Tensor r = randn(rng, {2, 3, 8});
    EXPECT_LT(grad_check([&](const Tensor& in) { return ops::sum(ops::mul(teb(in, blk, m), r)); }, x), 1e-4);
  }
}

TEST(MhaStar, MaskedMoleculeEqualsSelfAttention) {
  Rng rng(9);
  ParamStore store;
  const MtBlockParams mt = make_mt_block(store, "mt", 8, 6, 2, {}, rng);
  scramble(store, rng);
  const AttentionParams as_self{mt.attn.wq_t, mt.attn.wk_t, mt.attn.wv_t, mt.attn.wo, 2};
  const Tensor xt = randn(rng, {2, 4, 8}), xm = randn(rng, {2, 5, 6});
  const KeyMask tm = random_mask(rng, 2, 4, 0.3);
  const Tensor star = mha_star(xt, xm, mt.attn, tm, KeyMask::none_valid(2, 5));
  EXPECT_LT(max_abs_diff(star, mha(xt, as_self, tm)), 1e-15);
}

TEST(MhaStar, TwoKeyClosedForm) {
  Rng rng(10);
  ParamStore store;
  const MtBlockParams mt = make_mt_block(store, "mt", 4, 4, 1, {.output_projection = false}, rng);
  scramble(store, rng);
  const Tensor xt = randn(rng, {1, 3, 4}), xm = randn(rng, {1, 1, 4});
  KeyMask tm = KeyMask::all_valid(1, 3);
  tm.valid[1] = tm.valid[2] = 0;  // only [CLS] among text keys
  const Tensor out = mha_star(xt, xm, mt.attn, tm, KeyMask::all_valid(1, 1));
  const Tensor q = ops::matmul(xt, mt.attn.wq_t), kt = ops::matmul(xt, mt.attn.wk_t), vt = ops::matmul(xt, mt.attn.wv_t);
  const Tensor km = ops::matmul(xm, mt.attn.wk_m), vm = ops::matmul(xm, mt.attn.wv_m);
  for (int i = 0; i < 3; ++i) {
    double s1 = 0, s2 = 0;
    for (int c = 0; c < 4; ++c) {
      s1 += q.at({0, i, c}) * kt.at({0, 0, c}) / 2.0;
      s2 += q.at({0, i, c}) * km.at({0, 0, c}) / 2.0;
    }
    const double w2 = 1.0 / (1.0 + std::exp(s1 - s2));
    for (int c = 0; c < 4; ++c) {
      EXPECT_NEAR(out.at({0, i, c}), (1 - w2) * vt.at({0, 0, c}) + w2 * vm.at({0, 0, c}), 1e-14);
    }
  }
}

TEST(MhaStar, GradCheck) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(100 + seed);
    ParamStore store;
    const MtBlockParams mt = make_mt_block(store, "mt", 8, 6, 2, {}, rng);
    scramble(store, rng);
    const Tensor xt = randn(rng, {2, 3, 8}), xm = randn(rng, {2, 4, 6}), r = randn(rng, {2, 3, 8});
    const KeyMask tm = random_mask(rng, 2, 3, 0.3), mm = random_mask(rng, 2, 4, 0.3);
    auto loss = [&] { return ops::sum(ops::mul(mha_star(xt, xm, mt.attn, tm, mm), r)); };
    EXPECT_LT(grad_check_params(loss, store.tensors()), 1e-4);
    EXPECT_LT(grad_check([&](const Tensor& m) { return ops::sum(ops::mul(mha_star(xt, m, mt.attn, tm, mm), r)); }, xm), 1e-4);
  }
}

TEST(MtBlock, Reductions) {
  Rng rng(11);
  ParamStore store;
  const MtBlockParams mt = make_mt_block(store, "mt", 8, 6, 2, {}, rng);
  scramble(store, rng);
  const BlockParams as_teb{{mt.attn.wq_t, mt.attn.wk_t, mt.attn.wv_t, mt.attn.wo, 2}, mt.ffn, mt.ln1, mt.ln2};
  const Tensor xt = randn(rng, {2, 4, 8}), xm = randn(rng, {2, 5, 6});
  const KeyMask tm = random_mask(rng, 2, 4, 0.3);
  const Tensor closed = mt_block(xt, xm, mt, tm, KeyMask::none_valid(2, 5));
  EXPECT_EQ(closed.shape(), (Shape{2, 4, 8}));
  EXPECT_LT(max_abs_diff(closed, teb(xt, as_teb, tm)), 1e-14);
  const KeyMask open = KeyMask::all_valid(2, 5);
  const Tensor a = mt_block(xt, xm, mt, tm, open);
  const Tensor b = mt_block(xt, ops::scale(xm, 1.5), mt, tm, open);
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
}

TEST(Decomposition, IdentityOverRandomConfigs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    ParamStore store;
    const int heads = static_cast<int>(rng.uniform_int(1, 3));
    const MtBlockParams mt = make_mt_block(store, "mt", 4 * heads, 6, heads, {}, rng);
    scramble(store, rng, 0.5);
    const int b = 2, nt = static_cast<int>(rng.uniform_int(1, 5)), nm = static_cast<int>(rng.uniform_int(1, 5));
    const KeyMask tm = random_mask(rng, b, nt, 0.3);
    KeyMask mm = random_mask(rng, b, nm, 0.3);
    if (seed % 5 == 0) mm.valid.assign(mm.valid.size(), 0);
    const auto rep = verify_decomposition(randn(rng, {b, nt, 4 * heads}), randn(rng, {b, nm, 6}), mt.attn, tm, mm);
    EXPECT_LT(rep.max_residual, 1e-10);
    for (std::size_t i = 0; i < rep.lambda.size(); ++i) {
      EXPECT_GE(rep.lambda[i], 0.0);
      EXPECT_LE(rep.lambda[i], 1.0);
      const int item = static_cast<int>(i / (heads * nt));
      if (mm.count(item) == 0) EXPECT_EQ(rep.lambda[i], 0.0);
      else EXPECT_GT(rep.lambda[i], 0.0);
    }
  }
}

TEST(Decomposition, EqualLogitsGiveHalf) {
  Rng rng(12);
  ParamStore store;
  MtBlockParams mt = make_mt_block(store, "mt", 4, 4, 1, {}, rng);
  std::fill(mt.attn.wq_t.mutable_data().begin(), mt.attn.wq_t.mutable_data().end(), 0.0);
  const auto rep = verify_decomposition(randn(rng, {1, 4, 4}), randn(rng, {1, 4, 4}), mt.attn, KeyMask::all_valid(1, 4),
                                        KeyMask::all_valid(1, 4));
  for (double l : rep.lambda) EXPECT_EQ(l, 0.5);
}

TEST(TransformerProperty, PaddingInvariance) {
  Rng rng(13);
  ParamStore store;
  const BlockParams blk = make_block(store, "b", 8, 2, {}, rng);
  const MtBlockParams mt = make_mt_block(store, "mt", 8, 6, 2, {}, rng);
  scramble(store, rng);
  const Tensor xt = randn(rng, {1, 3, 8}), xm = randn(rng, {1, 4, 6});
  const Tensor base_t = teb(xt, blk, KeyMask::all_valid(1, 3));
  const Tensor base_m = mt_block(xt, xm, mt, KeyMask::all_valid(1, 3), KeyMask::all_valid(1, 4));
  const Tensor xt_pad = ops::concat({xt, randn(rng, {1, 2, 8})}, 1), xm_pad = ops::concat({xm, randn(rng, {1, 3, 6})}, 1);
  KeyMask tpad = KeyMask::all_valid(1, 5);
  tpad.valid[3] = tpad.valid[4] = 0;
  KeyMask mpad = KeyMask::all_valid(1, 7);
  mpad.valid[4] = mpad.valid[5] = mpad.valid[6] = 0;
  EXPECT_LT(max_abs_diff(ops::slice(teb(xt_pad, blk, tpad), 1, 0, 3), base_t), 1e-12);
  EXPECT_LT(max_abs_diff(ops::slice(mt_block(xt_pad, xm_pad, mt, tpad, mpad), 1, 0, 3), base_m), 1e-12);
}
