#include "moltailor/selfcheck.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "moltailor/bundled_data.h"
#include "moltailor/chem/canonical.h"
#include "moltailor/chem/smiles.h"
#include "moltailor/descriptors.h"
#include "moltailor/grad_check.h"
#include "moltailor/metrics.h"
#include "moltailor/model.h"
#include "moltailor/random.h"
#include "moltailor/tensor.h"

namespace moltailor {
namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, bool requires_grad = true) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from(shape, std::move(v), requires_grad);
}

// Values bounded away from the relu kink.
Tensor off_kink_tensor(Rng& rng, const Shape& shape) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.05, 1.5);
  return Tensor::from(shape, std::move(v), true);
}

int dim(Rng& rng, int lo = 1, int hi = 5) { return static_cast<int>(rng.uniform_int(lo, hi)); }

// sum(out * r) with a fixed random r, so every output element matters.
Tensor contract(const Tensor& out, const Tensor& r) { return ops::sum(ops::mul(out, r)); }

struct PrimitiveCase {
  const char* name;
  // Builds inputs and returns (loss closure, leaves).
  std::function<std::pair<std::function<Tensor()>, std::vector<Tensor>>(Rng&)> make;
};

std::pair<std::function<Tensor()>, std::vector<Tensor>> with_projection(Rng& rng, std::vector<Tensor> leaves,
                                                                        std::function<Tensor()> out_fn) {
  Tensor sample;
  {
    NoGradGuard g;
    sample = out_fn();
  }
  const Tensor r = random_tensor(rng, sample.shape(), false);
  return {[out_fn, r] { return contract(out_fn(), r); }, std::move(leaves)};
}

std::vector<PrimitiveCase> primitive_cases() {
  using L = std::vector<Tensor>;
  return {
      {"matmul", [](Rng& rng) {
         const int b = dim(rng), m = dim(rng), k = dim(rng), n = dim(rng);
         Tensor a = random_tensor(rng, {b, m, k}), w = random_tensor(rng, {k, n});
         return with_projection(rng, L{a, w}, [=] { return ops::matmul(a, w); });
       }},
      {"matmul_batched", [](Rng& rng) {
         const int b = dim(rng), m = dim(rng), k = dim(rng), n = dim(rng);
         Tensor a = random_tensor(rng, {b, m, k}), c = random_tensor(rng, {b, k, n});
         return with_projection(rng, L{a, c}, [=] { return ops::matmul(a, c); });
       }},
      {"matmul_nt", [](Rng& rng) {
         const int b = dim(rng), m = dim(rng), k = dim(rng), n = dim(rng);
         Tensor a = random_tensor(rng, {b, 2, m, k}), c = random_tensor(rng, {b, 2, n, k});
         return with_projection(rng, L{a, c}, [=] { return ops::matmul_nt(a, c); });
       }},
      {"add", [](Rng& rng) {
         const Shape s{dim(rng), dim(rng)};
         Tensor a = random_tensor(rng, s), c = random_tensor(rng, s);
         return with_projection(rng, L{a, c}, [=] { return ops::add(a, c); });
       }},
      {"sub", [](Rng& rng) {
         const Shape s{dim(rng), dim(rng), dim(rng)};
         Tensor a = random_tensor(rng, s), c = random_tensor(rng, s);
         return with_projection(rng, L{a, c}, [=] { return ops::sub(a, c); });
       }},
      {"mul", [](Rng& rng) {
         const Shape s{dim(rng), dim(rng)};
         Tensor a = random_tensor(rng, s), c = random_tensor(rng, s);
         return with_projection(rng, L{a, c}, [=] { return ops::mul(a, c); });
       }},
      {"add_bias", [](Rng& rng) {
         const int d = dim(rng);
         Tensor a = random_tensor(rng, {dim(rng), dim(rng), d}), b = random_tensor(rng, {d});
         return with_projection(rng, L{a, b}, [=] { return ops::add_bias(a, b); });
       }},
      {"scale", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng)});
         const double s = rng.normal();
         return with_projection(rng, L{a}, [=] { return ops::scale(a, s); });
       }},
      {"relu", [](Rng& rng) {
         Tensor a = off_kink_tensor(rng, {dim(rng), dim(rng)});
         return with_projection(rng, L{a}, [=] { return ops::relu(a); });
       }},
      {"gelu", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng)});
         return with_projection(rng, L{a}, [=] { return ops::gelu(a); });
       }},
      {"softmax", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng, 2), dim(rng)});
         const int axis = static_cast<int>(rng.uniform_int(0, 2));
         return with_projection(rng, L{a}, [=] { return ops::softmax(a, axis); });
       }},
      {"layer_norm", [](Rng& rng) {
         const int d = dim(rng, 2, 8);
         Tensor a = random_tensor(rng, {dim(rng), dim(rng), d}), g = random_tensor(rng, {d}), b = random_tensor(rng, {d});
         return with_projection(rng, L{a, g, b}, [=] { return ops::layer_norm(a, g, b); });
       }},
      {"layer_norm_plain", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng, 2, 8)});
         return with_projection(rng, L{a}, [=] { return ops::layer_norm(a, Tensor(), Tensor()); });
       }},
      {"embedding", [](Rng& rng) {
         const int v = dim(rng, 2, 6), d = dim(rng);
         Tensor table = random_tensor(rng, {v, d});
         const Shape ids_shape{dim(rng), dim(rng)};
         std::vector<int> ids(shape_size(ids_shape));
         for (int& i : ids) i = static_cast<int>(rng.uniform_int(0, v - 1));
         return with_projection(rng, L{table}, [=] { return ops::embedding(table, ids, ids_shape); });
       }},
      {"concat", [](Rng& rng) {
         const int axis = static_cast<int>(rng.uniform_int(0, 2));
         Shape s1{dim(rng), dim(rng), dim(rng)}, s2 = s1;
         s2[axis] = dim(rng);
         Tensor a = random_tensor(rng, s1), c = random_tensor(rng, s2);
         return with_projection(rng, L{a, c}, [=] { return ops::concat({a, c}, axis); });
       }},
      {"slice", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng, 2, 6), dim(rng)});
         const int len = a.dim(1);
         const int b = static_cast<int>(rng.uniform_int(0, len - 1));
         const int e = static_cast<int>(rng.uniform_int(b + 1, len));
         return with_projection(rng, L{a}, [=] { return ops::slice(a, 1, b, e); });
       }},
      {"permute", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng), dim(rng), dim(rng)});
         std::vector<int> perm{0, 1, 2, 3};
         rng.shuffle(std::span(perm));
         return with_projection(rng, L{a}, [=] { return ops::permute(a, perm); });
       }},
      {"transpose", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng), dim(rng)});
         return with_projection(rng, L{a}, [=] { return ops::transpose(a, 0, 2); });
       }},
      {"reshape", [](Rng& rng) {
         const int x = dim(rng), y = dim(rng), z = dim(rng);
         Tensor a = random_tensor(rng, {x, y, z});
         return with_projection(rng, L{a}, [=] { return ops::reshape(a, {x * y, z}); });
       }},
      {"add_key_bias", [](Rng& rng) {
         const int b = dim(rng), k = dim(rng);
         Tensor a = random_tensor(rng, {b, dim(rng), dim(rng), k});
         std::vector<double> bias(b * k);
         for (double& v : bias) v = rng.bernoulli(0.3) ? -1e9 : 0.0;
         for (int i = 0; i < b; ++i) bias[i * k + rng.uniform_int(0, k - 1)] = 0.0;  // keep one key open
         return with_projection(rng, L{a}, [=] { return ops::softmax(ops::add_key_bias(a, bias)); });
       }},
      {"sum", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng)});
         return std::pair<std::function<Tensor()>, L>{[=] { return ops::sum(ops::mul(a, a)); }, L{a}};
       }},
      {"sum_axis", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng), dim(rng)});
         const int axis = static_cast<int>(rng.uniform_int(0, 2));
         return with_projection(rng, L{a}, [=] { return ops::sum_axis(a, axis); });
       }},
      {"mean", [](Rng& rng) {
         Tensor a = random_tensor(rng, {dim(rng), dim(rng)});
         return std::pair<std::function<Tensor()>, L>{[=] { return ops::mean(ops::mul(a, a)); }, L{a}};
       }},
      {"mse", [](Rng& rng) {
         const Shape s{dim(rng), dim(rng)};
         Tensor p = random_tensor(rng, s), t = random_tensor(rng, s);
         return std::pair<std::function<Tensor()>, L>{[=] { return ops::mse(p, t); }, L{p, t}};
       }},
  };
}

}  // namespace

std::vector<CheckResult> primitive_gradient_checks(int seeds, double tolerance) {
  std::vector<CheckResult> out;
  for (const auto& c : primitive_cases()) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(Rng::derive(0x6772616443ULL, s));
      auto [loss, leaves] = c.make(rng);
      worst = std::max(worst, grad_check_params(loss, leaves));
    }
    out.push_back({std::string("grad ") + c.name, worst < tolerance, worst, tolerance,
                   std::to_string(seeds) + " seeds"});
  }
  return out;
}

namespace {

KeyMask ragged_mask(Rng& rng, int batch, int len) {
  KeyMask m = KeyMask::all_valid(batch, len);
  for (int b = 1; b < batch; ++b) {
    const int keep = static_cast<int>(rng.uniform_int(1, len));
    for (int i = keep; i < len; ++i) m.valid[static_cast<std::size_t>(b) * len + i] = 0;
  }
  return m;
}

// Small weights keep layer norms well conditioned for differencing.
std::vector<Tensor> perturb(const ParamStore& store, Rng& rng) {
  for (Tensor t : store.tensors())
    for (double& x : t.mutable_data()) x += 0.3 * rng.normal();
  return store.tensors();
}

CheckResult grad_result(const std::string& name, double worst, double tol, int seeds) {
  return {name, worst < tol, worst, tol, std::to_string(seeds) + " seeds"};
}

std::vector<std::string> bundled_smiles() {
  std::vector<std::string> out;
  std::istringstream in{std::string(data::k_test_molecules)};
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line.substr(0, line.find_first_of(" \t")));
  }
  return out;
}

}  // namespace

std::vector<CheckResult> block_gradient_checks(int seeds, double tolerance) {
  double w_teb = 0, w_star = 0, w_mt = 0, w_model = 0;
  const BlockOptions opt{2, Activation::kGelu, BlockWiring::kStandard, true};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(Rng::derive(0x626c6f636bULL, s));
    const int b = 2, n_t = dim(rng, 2, 4), n_m = dim(rng, 2, 4), d_t = 4, d_m = 6;
    const KeyMask tm = ragged_mask(rng, b, n_t), mm = ragged_mask(rng, b, n_m);
    {
      ParamStore st;
      const BlockParams p = make_block(st, "teb", d_t, 2, opt, rng);
      std::vector<Tensor> leaves = perturb(st, rng);
      const Tensor x = random_tensor(rng, {b, n_t, d_t});
      leaves.push_back(x);
      auto [loss, l] = with_projection(rng, leaves, [=] { return teb(x, p, tm); });
      w_teb = std::max(w_teb, grad_check_params(loss, l));
    }
    {
      ParamStore st;
      const MtBlockParams p = make_mt_block(st, "mt", d_t, d_m, 2, opt, rng);
      std::vector<Tensor> leaves = perturb(st, rng);
      const Tensor xt = random_tensor(rng, {b, n_t, d_t}), xm = random_tensor(rng, {b, n_m, d_m});
      leaves.push_back(xt);
      leaves.push_back(xm);
      auto [l1, p1] = with_projection(rng, leaves, [=] { return mha_star(xt, xm, p.attn, tm, mm); });
      w_star = std::max(w_star, grad_check_params(l1, p1));
      auto [l2, p2] = with_projection(rng, leaves, [=] { return mt_block(xt, xm, p, tm, mm); });
      w_mt = std::max(w_mt, grad_check_params(l2, p2));
    }
    {
      const std::vector<std::string> smiles{"CCO", "c1ccccc1O", "CC(=O)N"};
      const std::vector<std::string> texts{"a small polar alcohol", "phenol is aromatic", "an amide"};
      std::vector<std::vector<std::string>> tt, st;
      for (const auto& t : texts) tt.push_back(split_text(t));
      for (const auto& m : smiles) st.push_back(split_smiles(m));
      ModelConfig cfg;
      cfg.d_t = 4, cfg.d_m = 4, cfg.h_t = 2, cfg.h_m = 2, cfg.L_text = 2, cfg.L_uni = 1, cfg.L_mol = 1;
      cfg.ffn_mult = 2, cfg.max_text_len = 12, cfg.max_smiles_len = 12, cfg.num_outputs = 3;
      const Model model(cfg, Vocab::build(tt), Vocab::build(st), Rng::derive(7, s));
      std::vector<Tensor> leaves = perturb(model.params(), rng);
      const Batch batch = model.batch(smiles, texts);
      auto [loss, l] = with_projection(rng, leaves, [&model, batch] { return model.pretrain_forward(batch); });
      w_model = std::max(w_model, grad_check_params(loss, l, 1e-5, 300, static_cast<std::uint64_t>(s)));
    }
  }
  return {grad_result("grad teb", w_teb, tolerance, seeds), grad_result("grad mha_star", w_star, tolerance, seeds),
          grad_result("grad mt_block", w_mt, tolerance, seeds),
          grad_result("grad toy model", w_model, tolerance, seeds)};
}

std::vector<CheckResult> decomposition_checks(int configs) {
  double worst = 0.0, lambda_lo = 0.0, lambda_hi = 1.0, masked_lambda = 0.0;
  for (int c = 0; c < configs; ++c) {
    Rng rng(Rng::derive(0x6465636f6dULL, c));
    const int b = dim(rng, 1, 3), heads = dim(rng, 1, 3), d_t = heads * dim(rng, 1, 3), d_m = dim(rng, 1, 6);
    const int n_t = dim(rng, 1, 5), n_m = dim(rng, 1, 5);
    KeyMask tm = ragged_mask(rng, b, n_t), mm = ragged_mask(rng, b, n_m);
    if (b > 1 && rng.bernoulli(0.3))
      for (int i = 0; i < n_m; ++i) mm.valid[static_cast<std::size_t>(b - 1) * n_m + i] = 0;
    ParamStore st;
    const MtBlockParams p = make_mt_block(st, "mt", d_t, d_m, heads, BlockOptions{}, rng);
    perturb(st, rng);
    NoGradGuard g;
    const DecompositionReport r = verify_decomposition(random_tensor(rng, {b, n_t, d_t}, false),
                                                       random_tensor(rng, {b, n_m, d_m}, false), p.attn, tm, mm);
    worst = std::max(worst, r.max_residual);
    for (std::size_t i = 0; i < r.lambda.size(); ++i) {
      lambda_lo = std::min(lambda_lo, r.lambda[i]);
      lambda_hi = std::max(lambda_hi, r.lambda[i]);
      const int item = static_cast<int>(i / (static_cast<std::size_t>(heads) * n_t));
      if (mm.count(item) == 0) masked_lambda = std::max(masked_lambda, std::abs(r.lambda[i]));
    }
  }
  const std::string n = std::to_string(configs) + " configs";
  return {{"decomposition residual", worst < 1e-10, worst, 1e-10, n},
          {"decomposition lambda range", lambda_lo >= 0.0 && lambda_hi <= 1.0, std::max(-lambda_lo, lambda_hi - 1.0),
           0.0, n},
          {"decomposition lambda masked", masked_lambda == 0.0, masked_lambda, 0.0, n}};
}

std::vector<CheckResult> loss_checks(int batches) {
  std::vector<CheckResult> out;
  {
    const Tensor yhat = Tensor::from({1, 2}, {0, 0}, true);
    const LossReport r = mtr_loss(yhat, {1, 3}, {1, 0});
    out.push_back({"loss hand example", r.value == 1.0, std::abs(r.value - 1.0), 0.0, "y=[[1,3]] m=[[1,0]]"});
  }
  double leaked = 0.0;
  for (int s = 0; s < batches; ++s) {
    Rng rng(Rng::derive(0x6c6f7373ULL, s));
    const int n = dim(rng, 1, 8), t = dim(rng, 1, 6);
    const Tensor yhat = random_tensor(rng, {n, t});
    std::vector<double> y(static_cast<std::size_t>(n) * t);
    std::vector<std::uint8_t> m(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = rng.normal();
      m[i] = rng.bernoulli(0.6);
    }
    m[0] = 1;
    mtr_loss(yhat, y, m).total.backward();
    for (std::size_t i = 0; i < y.size(); ++i)
      if (!m[i]) leaked = std::max(leaked, std::abs(yhat.grad()[i]));
  }
  out.push_back({"loss masked gradient", leaked == 0.0, leaked, 0.0, std::to_string(batches) + " batches"});
  return out;
}

std::vector<CheckResult> metric_checks(int cases) {
  double roc_err = 0.0, ap_err = 0.0;
  for (int c = 0; c < cases; ++c) {
    Rng rng(Rng::derive(0x6d6574726963ULL, c));
    const int n = dim(rng, 2, 12);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_int(0, 4));  // ties on purpose
      y[i] = rng.bernoulli(0.5);
    }
    y[0] = 1;
    y[1] = 0;
    double pairs = 0, wins = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    roc_err = std::max(roc_err, std::abs(roc_auc(s, y) - wins / pairs));
    // AP by thresholding at every distinct score
    std::vector<double> th(s);
    std::sort(th.rbegin(), th.rend());
    th.erase(std::unique(th.begin(), th.end()), th.end());
    const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    double ap = 0, prev_recall = 0;
    for (double t : th) {
      double tp = 0, k = 0;
      for (int i = 0; i < n; ++i)
        if (s[i] >= t) {
          k += 1;
          tp += y[i];
        }
      ap += (tp / k) * (tp / pos - prev_recall);
      prev_recall = tp / pos;
    }
    ap_err = std::max(ap_err, std::abs(average_precision(s, y) - ap));
  }
  const std::string n = std::to_string(cases) + " cases";
  std::vector<CheckResult> out{{"roc_auc brute force", roc_err < 1e-12, roc_err, 1e-12, n},
                               {"average_precision brute force", ap_err < 1e-12, ap_err, 1e-12, n}};
  {
    LabelMatrix m{4, 1, {0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}, {}};
    const double v = delta_ap(m).value;
    out.push_back({"delta_ap perfect scorer", std::abs(v - 0.5) < 1e-15, std::abs(v - 0.5), 1e-15, "base rate 0.5"});
  }
  {
    const std::vector<double> r{1.0, 2.0, 3.0};
    const auto z = normalized_rmse(r);
    const double want = std::sqrt(1.5), err = std::abs(z[2] - want) + std::abs(z[0] + want) + std::abs(z[1]);
    out.push_back({"normalized_rmse example", err < 1e-12, err, 1e-12, "1,2,3"});
  }
  return out;
}

std::vector<CheckResult> canonicalization_checks(const std::vector<std::string>& smiles, int permutations) {
  int bad_smiles = 0, bad_desc = 0, failed = 0;
  std::string first_bad;
  for (std::size_t k = 0; k < smiles.size(); ++k) {
    try {
      const chem::MolGraph mol = chem::parse_smiles(smiles[k]);
      const std::string canon = chem::canonicalize(mol);
      const DescriptorVector d = compute_all(mol);
      Rng rng(Rng::derive(0x63616e6f6eULL, k));
      std::vector<int> perm(mol.atom_count());
      for (int p = 0; p < permutations; ++p) {
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<int>(perm));
        const chem::MolGraph shuffled = chem::renumbered(mol, perm);
        if (chem::canonicalize(shuffled) != canon) {
          ++bad_smiles;
          if (first_bad.empty()) first_bad = smiles[k];
        }
        if (compute_all(shuffled).values != d.values) ++bad_desc;
      }
    } catch (const Error& e) {
      ++failed;
      if (first_bad.empty()) first_bad = smiles[k] + " (" + e.what() + ")";
    }
  }
  const std::string n = std::to_string(smiles.size()) + " molecules x " + std::to_string(permutations) +
                        (first_bad.empty() ? "" : "; first failure " + first_bad);
  return {{"canonical smiles invariance", bad_smiles + failed == 0, static_cast<double>(bad_smiles + failed), 0.0, n},
          {"descriptor invariance", bad_desc + failed == 0, static_cast<double>(bad_desc + failed), 0.0, n}};
}

std::vector<CheckResult> run_selfcheck(const std::vector<std::string>& smiles) {
  std::vector<CheckResult> all = primitive_gradient_checks();
  for (auto part : {block_gradient_checks(), decomposition_checks(), loss_checks(), metric_checks(),
                    canonicalization_checks(smiles.empty() ? bundled_smiles() : smiles)})
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

std::string format_check_table(const std::vector<CheckResult>& results) {
  std::size_t width = 5;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::ostringstream o;
  o << std::left << std::setw(static_cast<int>(width)) << "check" << "  result  value        bound        detail\n";
  for (const auto& r : results) {
    o << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << (r.passed ? "PASS  " : "FAIL  ") << "  "
      << std::scientific << std::setprecision(3) << std::setw(11) << r.value << "  " << std::setw(11) << r.threshold
      << "  " << r.detail << '\n';
  }
  return o.str();
}

}  // namespace moltailor
