#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "moltailor/corpus.h"
#include "moltailor/model.h"

namespace moltailor {

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  double lr_peak = 5.5e-5;
  double warmup_ratio = 0.1;
  int epochs = 50;
  int batch_size = 64;
  int patience = 3;
  std::uint64_t seed = 0;
  int eval_interval = 1;  // epochs between validations
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int vocab_min_frequency = 1;
  // Batches are formed from length-sorted windows of this many batches.
  int bucket_batches = 8;

  void validate() const;

  static TrainConfig full_preset();      // 50 epochs
  static TrainConfig ablation_preset();  // 20 epochs
};

// Linear 0 -> lr_peak over warmup_ratio * total_steps, then linear to 0.
double lr_schedule(long step, long total_steps, const TrainConfig& cfg);

struct OptimState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

// Decoupled weight decay Adam with bias correction; reads each parameter's
// accumulated gradient. Throws NonFiniteGradient before touching anything.
void optim_step(const std::vector<Tensor>& params, OptimState& state, double lr, const TrainConfig& cfg);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when the epoch was not validated
  double lr = 0.0;
};

struct TrainResult {
  Model model;  // best-validation parameters
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Text and SMILES vocabularies from the train split.
std::pair<Vocab, Vocab> build_vocabs(const Corpus& corpus, int min_frequency = 1);

// Trains on manifest.splits.train with labels standardized by the manifest
// statistics; validates on splits.val. Vocabularies come from the train split.
TrainResult pretrain(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

// Mean masked loss over `indices` without recording a graph.
double evaluate_loss(const Model& model, const std::vector<MtmtrRecord>& records, const std::vector<int>& indices,
                     int batch_size);

// One JSON object per line: epoch, train_loss, val_loss, lr.
void write_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace moltailor
