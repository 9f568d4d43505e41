#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moltailor/corpus.h"
#include "moltailor/model.h"

namespace moltailor {

enum class TaskKind { kRegression, kClassification };

// Held-out molecules with all registry descriptors, split 8:1:1.
struct ProbeDataset {
  std::vector<std::string> smiles;
  std::vector<std::vector<double>> descriptors;  // per molecule, registry order
  Splits splits;
};

// `count` synthetic molecules from `seed` that do not occur in `exclude`.
ProbeDataset make_probe_dataset(int count, std::uint64_t seed, const std::vector<std::string>& exclude);

struct ProbeTask {
  std::string name;
  TaskKind kind = TaskKind::kRegression;
  int columns = 1;
  std::vector<double> labels;       // (n, columns); regression labels standardized on train
  std::vector<std::uint8_t> mask;   // (n, columns)
  Splits splits;
  std::string description;          // prompt fed to text-conditioned models
};

// Single-descriptor regression task, labels standardized with train stats.
ProbeTask descriptor_task(const ProbeDataset& data, const std::string& descriptor, const std::string& description);

// Solubility-like target: fixed linear combination of descriptors,
//   0.16 - 0.0062 MolWt + 0.066 NumRotatableBonds - 0.74 NumAromaticAtoms/HeavyAtomCount
//   + 0.3 NumHDonors + 0.2 NumHAcceptors - 0.1 LongestCarbonChain
ProbeTask solubility_proxy_task(const ProbeDataset& data, const std::string& description);

// Tasks from a CSV with a header: smiles, label columns, optional mask_<label>
// columns. Empty label cells are masked out. Classification when every label
// is 0 or 1.
ProbeTask csv_task(const std::string& path, const std::string& description, std::uint64_t split_seed);
std::vector<std::string> csv_smiles(const std::string& path);

struct Features {
  int rows = 0, dim = 0;
  std::vector<double> values;  // row-major
};

// Frozen representations, batch by batch without a graph.
Features extract_features(const Model& model, const std::vector<std::string>& smiles, const std::string& description,
                          int batch_size = 32);

struct ProbeConfig {
  int lr_trials = 10;
  double lr_min = 1e-5, lr_max = 1e-2;
  int seeds = 3;
  int max_epochs = 50;
  int patience = 3;
  int batch_size = 64;
  std::uint64_t search_seed = 0;  // fixes the LR grid
  std::uint64_t seed = 0;         // init and shuffling

  void validate() const;
};

// Sorted log-uniform draws from [lr_min, lr_max].
std::vector<double> lr_grid(const ProbeConfig& cfg);

struct MetricReport {
  std::string task;
  std::string metric;  // "rmse" or "roc_auc"
  bool higher_is_better = false;
  std::vector<double> lrs;
  std::vector<double> val_by_lr;  // mean over seeds
  double chosen_lr = 0.0;
  std::vector<double> test_per_seed;
  double mean = 0.0;
  double std = 0.0;  // population, over seeds
};

// One linear layer per (lr, seed) on centered features with Adam and a
// linearly decaying rate, early stopped on the validation metric. The LR with
// the best mean validation metric is reported on test.
MetricReport linear_probe(const Features& features, const ProbeTask& task, const ProbeConfig& cfg);

}  // namespace moltailor
