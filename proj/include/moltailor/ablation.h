#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moltailor/corpus.h"
#include "moltailor/probe.h"
#include "moltailor/train.h"

namespace moltailor {

inline constexpr const char* kNoisePrompt = "to be or not to be, this is the question.";

// Arm names.
inline constexpr const char* kArmMolTailor = "moltailor";
inline constexpr const char* kArmNoise = "moltailor_noise_prompt";
inline constexpr const char* kArmMoleculeOnly = "m_encoder_no_text";
inline constexpr const char* kArmSingleTower = "single_tower_concat";
inline constexpr const char* kArmRandom = "m_encoder_random_init";

enum class TaskCategory { kPromptedRelevant, kUnpromptedRelevant, kUnrelated, kDownstream };
std::string to_string(TaskCategory c);

struct AblationConfig {
  ModelConfig model;  // MolTailor shape; the other arms reuse its widths and depths
  TrainConfig train = TrainConfig::ablation_preset();
  ProbeConfig probe;
  int probe_molecules = 1000;
  std::uint64_t probe_seed = 1;
  std::uint64_t prompt_seed = 0;
  std::vector<std::string> prompt_names{"MolWt", "FractionCSP3", "NumHDonors", "NumHAcceptors", "NumRotatableBonds"};
  std::vector<std::string> prompted_relevant{"MolWt", "FractionCSP3"};
  std::vector<std::string> unprompted_relevant{"NumHeteroatoms"};
  std::vector<std::string> unrelated{"LongestCarbonChain"};
  bool solubility_proxy = true;
  std::string noise_prompt = kNoisePrompt;
  std::vector<std::string> arms{kArmMolTailor, kArmNoise, kArmMoleculeOnly, kArmSingleTower, kArmRandom};
};

struct ArmResult {
  std::string name;
  std::string prompt;  // empty for arms without text input
  std::vector<MetricReport> reports;  // one per task, task order
  std::vector<EpochRecord> history;   // empty for untrained arms
  double best_val_loss = 0.0;
};

struct AblationReport {
  std::string prompt;
  std::vector<std::string> tasks;
  std::vector<TaskCategory> categories;
  std::vector<ArmResult> arms;

  const ArmResult& arm(const std::string& name) const;
  // Mean of the arm's 3-seed mean RMSE over tasks in `category`
  // (all regression tasks when category is null).
  double mean_rmse(const std::string& arm, const TaskCategory* category = nullptr) const;
  std::string to_json() const;
  std::string to_markdown() const;
};

// The prompt the MolTailor arms are probed with.
std::string probe_prompt(const AblationConfig& cfg);

// Held-out molecules (none of `exclude`) and the descriptor tasks of `cfg`.
struct ProbeSuite {
  ProbeDataset data;
  std::vector<ProbeTask> tasks;
  std::vector<TaskCategory> categories;
};
ProbeSuite make_probe_suite(const std::vector<std::string>& exclude, const AblationConfig& cfg,
                            const std::string& prompt);

using Logger = std::function<void(const std::string&)>;

// Pretrains what the selected arms need (shared where possible), then probes
// every arm on the same held-out tasks.
AblationReport run_ablation(const Corpus& corpus, const AblationConfig& cfg, const Logger& log = {});

}  // namespace moltailor
