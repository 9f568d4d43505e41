#include "moltailor/train.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace moltailor {

namespace {

struct BatchData {
  Batch batch;
  std::vector<double> y;
  std::vector<std::uint8_t> m;
};

BatchData gather(const Model& model, const std::vector<MtmtrRecord>& records, std::span<const int> idx) {
  std::vector<std::string> smiles, texts;
  BatchData d;
  for (int i : idx) {
    const auto& r = records[i];
    smiles.push_back(r.smiles);
    texts.push_back(r.description);
    d.y.insert(d.y.end(), r.y.begin(), r.y.end());
    d.m.insert(d.m.end(), r.m.begin(), r.m.end());
  }
  if (model.config().architecture == Architecture::kMoleculeOnly) texts.clear();
  d.batch = model.batch(smiles, texts);
  return d;
}

// Shuffled order cut into windows that are sorted by sequence length before
// batching, so padding stays small; batch order is shuffled again.
std::vector<std::vector<int>> epoch_batches(const std::vector<int>& train, const std::vector<int>& lengths,
                                            const TrainConfig& cfg, Rng& rng) {
  std::vector<int> order = train;
  rng.shuffle(std::span<int>(order));
  const std::size_t window = static_cast<std::size_t>(cfg.batch_size) * std::max(1, cfg.bucket_batches);
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += window) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + window));
    std::stable_sort(first, last, [&](int a, int b) { return lengths[a] < lengths[b]; });
    for (auto it = first; it < last; it += std::min<std::ptrdiff_t>(cfg.batch_size, last - it))
      batches.emplace_back(it, std::min(it + cfg.batch_size, last));
  }
  rng.shuffle(std::span<std::vector<int>>(batches));
  return batches;
}

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(std::string("invalid train config: ") + what);
  };
  need(lr_peak > 0 && std::isfinite(lr_peak), "lr_peak must be positive");
  need(warmup_ratio >= 0 && warmup_ratio <= 1, "warmup_ratio must be in [0, 1]");
  need(epochs >= 1, "epochs must be at least 1");
  need(batch_size >= 1, "batch_size must be at least 1");
  need(patience >= 1, "patience must be at least 1");
  need(eval_interval >= 1, "eval_interval must be at least 1");
  need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must be in [0, 1)");
  need(eps > 0 && weight_decay >= 0, "eps must be positive and weight_decay non-negative");
  need(vocab_min_frequency >= 1, "vocab_min_frequency must be at least 1");
}

TrainConfig TrainConfig::full_preset() { return TrainConfig{}; }

TrainConfig TrainConfig::ablation_preset() {
  TrainConfig c;
  c.epochs = 20;
  return c;
}

double lr_schedule(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0) return 0.0;
  step = std::clamp(step, 0L, total_steps);
  const double warm = cfg.warmup_ratio * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warm) return cfg.lr_peak * s / warm;
  const double rest = static_cast<double>(total_steps) - warm;
  return rest <= 0 ? cfg.lr_peak : cfg.lr_peak * (static_cast<double>(total_steps) - s) / rest;
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= s;
  }
  return norm;
}

void optim_step(const std::vector<Tensor>& params, OptimState& state, double lr, const TrainConfig& cfg) {
  for (const Tensor& p : params)
    for (double g : p.grad())
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient before optimizer step");
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeMismatch("optimizer state does not match the parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size()) throw ShapeMismatch("optimizer moment shape mismatch");
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= lr * cfg.weight_decay * w[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

double evaluate_loss(const Model& model, const std::vector<MtmtrRecord>& records, const std::vector<int>& indices,
                     int batch_size) {
  NoGradGuard guard;
  double weighted = 0.0;
  int used = 0;
  for (std::size_t s = 0; s < indices.size(); s += batch_size) {
    const std::span<const int> idx(indices.data() + s, std::min<std::size_t>(batch_size, indices.size() - s));
    const BatchData d = gather(model, records, idx);
    int n = 0;
    for (std::size_t j = 0; j < idx.size(); ++j)
      n += std::any_of(d.m.begin() + j * model.config().num_outputs, d.m.begin() + (j + 1) * model.config().num_outputs,
                       [](std::uint8_t x) { return x != 0; });
    if (n == 0) continue;
    weighted += mtr_loss(model.pretrain_forward(d.batch), d.y, d.m).value * n;
    used += n;
  }
  if (used == 0) throw AllRecordsSkipped("no labelled records to evaluate");
  return weighted / used;
}

std::pair<Vocab, Vocab> build_vocabs(const Corpus& corpus, int min_frequency) {
  std::vector<MtmtrRecord> train;
  for (int i : corpus.manifest.splits.train) train.push_back(corpus.records[i]);
  return {Vocab::build(text_token_lists(train), min_frequency), Vocab::build(smiles_token_lists(train), min_frequency)};
}

TrainResult pretrain(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  cfg.validate();
  const auto& splits = corpus.manifest.splits;
  if (splits.train.empty() || splits.val.empty()) throw Error("pretraining needs non-empty train and val splits");
  if (model_cfg.num_outputs != static_cast<int>(corpus.manifest.descriptor_names.size()))
    throw Error("num_outputs does not match the corpus descriptor count");
  const std::vector<MtmtrRecord> records = standardize_labels(corpus.records, corpus.manifest.stats);

  auto [tv, sv] = build_vocabs(corpus, cfg.vocab_min_frequency);
  Model model(model_cfg, std::move(tv), std::move(sv), Rng::derive(cfg.seed, 1));

  std::vector<int> lengths(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    lengths[i] = model_cfg.architecture == Architecture::kMoleculeOnly
                     ? static_cast<int>(split_smiles(records[i].smiles).size())
                     : static_cast<int>(split_text(records[i].description).size());
  }

  const auto trainable = model.trainable();
  std::vector<Tensor> params;
  for (const auto& [name, t] : trainable) params.push_back(t);
  const long per_epoch = (static_cast<long>(splits.train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long total = per_epoch * cfg.epochs;

  TrainResult result{model, {}, 0, std::numeric_limits<double>::infinity(), false};
  std::vector<std::vector<double>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& [name, t] : model.params().items()) best.emplace_back(t.data().begin(), t.data().end());
  };
  snapshot();

  OptimState state;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    int loss_n = 0;
    double lr = 0.0;
    for (const auto& idx : epoch_batches(splits.train, lengths, cfg, rng)) {
      const BatchData d = gather(model, records, idx);
      model.params().zero_grad();
      LossReport loss;
      try {
        DropoutScope dropout(model.config().dropout, Rng::derive(cfg.seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(state.step)));
        loss = mtr_loss(model.pretrain_forward(d.batch), d.y, d.m);
        loss.total.backward();
      } catch (const AllRecordsSkipped&) {
        continue;
      } catch (const NonFiniteValue& e) {
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + " at step " +
                               std::to_string(state.step + 1) + ": " + e.what());
      }
      clip_grad_norm(params, cfg.clip_norm);
      lr = lr_schedule(state.step + 1, total, cfg);
      try {
        optim_step(params, state, lr, cfg);
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      const int n = static_cast<int>(idx.size()) - loss.skipped;
      loss_sum += loss.value * n;
      loss_n += n;
    }
    model.params().zero_grad();

    EpochRecord rec{epoch, loss_n ? loss_sum / loss_n : std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN(), lr};
    const bool validate = epoch % cfg.eval_interval == 0 || epoch == cfg.epochs;
    if (validate) {
      rec.val_loss = evaluate_loss(model, records, splits.val, cfg.batch_size);
      if (!std::isfinite(rec.val_loss)) throw TrainingDiverged("validation loss is not finite");
      if (rec.val_loss < result.best_val_loss) {
        result.best_val_loss = rec.val_loss;
        result.best_epoch = epoch;
        snapshot();
        stale = 0;
      } else {
        ++stale;
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (validate && stale >= cfg.patience) {
      result.early_stopped = epoch < cfg.epochs;
      break;
    }
  }

  std::size_t k = 0;
  for (const auto& [name, t] : model.params().items()) {
    Tensor w = t;
    std::copy(best[k].begin(), best[k].end(), w.mutable_data().begin());
    ++k;
  }
  result.model = model;
  return result;
}

void write_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : history) {
    nlohmann::json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"lr", r.lr}};
    j["val_loss"] = std::isfinite(r.val_loss) ? nlohmann::json(r.val_loss) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace moltailor
