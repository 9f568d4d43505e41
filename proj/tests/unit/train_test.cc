#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "moltailor/synth.h"
#include "moltailor/train.h"

using namespace moltailor;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.d_t = c.d_m = 16;
  c.h_t = c.h_m = 2;
  c.L_text = 2;
  c.L_uni = 1;
  c.L_mol = 1;
  c.ffn_mult = 2;
  c.max_text_len = 48;
  c.max_smiles_len = 48;
  return c;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.lr_peak = 2e-3;
  t.patience = 100;
  t.seed = 3;
  return t;
}

const Corpus& small_corpus() {
  static const Corpus c = build_mtmtr(synth_molecules(200, 11), 11);
  return c;
}

Tensor leaf(std::vector<double> v, std::vector<double> g) {
  const int n = static_cast<int>(v.size());
  Tensor t = Tensor::from({n}, std::move(v), true);
  auto buf = t.mutable_grad();
  std::copy(g.begin(), g.end(), buf.begin());
  return t;
}

}  // namespace

TEST(LrSchedule, WarmupThenLinearDecay) {
  TrainConfig c;
  c.lr_peak = 1.0;
  c.warmup_ratio = 0.1;
  EXPECT_DOUBLE_EQ(lr_schedule(0, 100, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 100, c), 0.5);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 100, c), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(55, 100, c), 0.5);
  EXPECT_DOUBLE_EQ(lr_schedule(100, 100, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(250, 100, c), 0.0);
}

TEST(LrSchedule, NeverExceedsPeak) {
  TrainConfig c;
  c.lr_peak = 3e-4;
  for (long s = 0; s <= 777; ++s) {
    const double lr = lr_schedule(s, 777, c);
    EXPECT_GE(lr, 0.0);
    EXPECT_LE(lr, c.lr_peak);
  }
}

TEST(OptimStep, FirstAdamStepByHand) {
  TrainConfig c;
  c.weight_decay = 0.0;
  Tensor p = leaf({1.0, -2.0}, {0.5, -4.0});
  OptimState st;
  optim_step({p}, st, 0.1, c);
  // bias-corrected m/sqrt(v) is sign(g) on the first step
  EXPECT_NEAR(p.data()[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.data()[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1);
}

TEST(OptimStep, DecoupledWeightDecayShrinksWithZeroGradient) {
  TrainConfig c;
  c.weight_decay = 0.5;
  Tensor p = leaf({2.0}, {0.0});
  OptimState st;
  optim_step({p}, st, 0.1, c);
  EXPECT_DOUBLE_EQ(p.data()[0], 2.0 * (1.0 - 0.05));
}

TEST(OptimStep, NonFiniteGradientLeavesParametersAlone) {
  TrainConfig c;
  Tensor a = leaf({1.0}, {0.1});
  Tensor b = leaf({2.0}, {std::numeric_limits<double>::quiet_NaN()});
  OptimState st;
  EXPECT_THROW(optim_step({a, b}, st, 0.1, c), NonFiniteGradient);
  EXPECT_EQ(a.data()[0], 1.0);
  EXPECT_EQ(b.data()[0], 2.0);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  Tensor a = leaf({0.0}, {3.0}), b = leaf({0.0}, {4.0});
  EXPECT_DOUBLE_EQ(clip_grad_norm({a, b}, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm({a, b}, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(TrainConfig, Presets) {
  EXPECT_EQ(TrainConfig::full_preset().epochs, 50);
  EXPECT_EQ(TrainConfig::ablation_preset().epochs, 20);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Pretrain, SmokeAndBitIdenticalRepeat) {
  const TrainConfig t = tiny_train(2);
  const TrainResult a = pretrain(small_corpus(), tiny_model(), t);
  const TrainResult b = pretrain(small_corpus(), tiny_model(), t);
  ASSERT_EQ(a.history.size(), 2u);
  ASSERT_EQ(b.history.size(), 2u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a.history[i].train_loss));
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
  const auto& pa = a.model.params().items();
  const auto& pb = b.model.params().items();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k)
    ASSERT_TRUE(std::equal(pa[k].second.data().begin(), pa[k].second.data().end(), pb[k].second.data().begin()))
        << pa[k].first;
}

TEST(Pretrain, LossDropsOnSmallCorpus) {
  std::vector<double> vals;
  const TrainResult r = pretrain(small_corpus(), tiny_model(), tiny_train(20));
  ASSERT_FALSE(r.history.empty());
  EXPECT_LE(r.history.back().train_loss, 0.8 * r.history.front().train_loss);
  for (const auto& e : r.history)
    if (!std::isnan(e.val_loss)) EXPECT_LE(r.best_val_loss, e.val_loss);
  // the returned model is the best snapshot
  const double v = evaluate_loss(r.model, standardize_labels(small_corpus().records, small_corpus().manifest.stats),
                                 small_corpus().manifest.splits.val, 16);
  EXPECT_NEAR(v, r.best_val_loss, 1e-12);
}

TEST(Pretrain, EarlyStopsWhenValidationStalls) {
  TrainConfig t = tiny_train(10);
  t.lr_peak = 1e-300;  // updates vanish below one ulp
  t.patience = 2;
  const TrainResult r = pretrain(small_corpus(), tiny_model(), t);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.best_epoch, 1);
}

TEST(Pretrain, FrozenMoleculeTowerIsUntouched) {
  ModelConfig m = tiny_model();
  m.freeze_m_encoder = true;
  const TrainResult r = pretrain(small_corpus(), m, tiny_train(1));
  auto [tv, sv] = build_vocabs(small_corpus());
  const Model fresh(m, tv, sv, Rng::derive(tiny_train(1).seed, 1));
  for (const auto& [name, t] : r.model.params().items())
    if (name.rfind("mol.", 0) == 0) {
      const Tensor f = fresh.params().get(name);
      EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), f.data().begin())) << name;
    }
}

TEST(History, NaNValidationWrittenAsNull) {
  const auto path = std::filesystem::temp_directory_path() / "moltailor_history_test.jsonl";
  write_history({{1, 0.5, std::numeric_limits<double>::quiet_NaN(), 1e-4}, {2, 0.25, 0.3, 5e-5}}, path);
  std::ifstream in(path);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_NE(l1.find("null"), std::string::npos);
  EXPECT_EQ(l2.find("null"), std::string::npos);
  std::filesystem::remove(path);
}
