#include "moltailor/ablation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "json.hpp"

namespace moltailor {

namespace {

bool wants(const AblationConfig& cfg, const char* arm) {
  return std::find(cfg.arms.begin(), cfg.arms.end(), arm) != cfg.arms.end();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string to_string(TaskCategory c) {
  switch (c) {
    case TaskCategory::kPromptedRelevant: return "prompted_relevant";
    case TaskCategory::kUnpromptedRelevant: return "unprompted_relevant";
    case TaskCategory::kUnrelated: return "unrelated";
    case TaskCategory::kDownstream: return "downstream";
  }
  return "?";
}

std::string probe_prompt(const AblationConfig& cfg) {
  Rng rng(cfg.prompt_seed);
  return render_description(cfg.prompt_names, rng);
}

const ArmResult& AblationReport::arm(const std::string& name) const {
  for (const auto& a : arms)
    if (a.name == name) return a;
  throw Error("arm not in report: " + name);
}

double AblationReport::mean_rmse(const std::string& name, const TaskCategory* category) const {
  const ArmResult& a = arm(name);
  double sum = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (a.reports[t].metric != "rmse") continue;
    if (category && categories[t] != *category) continue;
    sum += a.reports[t].mean;
    ++n;
  }
  if (n == 0) throw Error("no regression tasks in the requested category");
  return sum / n;
}

std::string AblationReport::to_json() const {
  nlohmann::json j;
  j["prompt"] = prompt;
  j["tasks"] = nlohmann::json::array();
  for (std::size_t t = 0; t < tasks.size(); ++t)
    j["tasks"].push_back({{"name", tasks[t]}, {"category", to_string(categories[t])}});
  j["arms"] = nlohmann::json::array();
  for (const auto& a : arms) {
    nlohmann::json arm{{"name", a.name}, {"prompt", a.prompt}, {"best_val_loss", a.best_val_loss}};
    arm["history"] = nlohmann::json::array();
    for (const auto& h : a.history)
      arm["history"].push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}, {"lr", h.lr}});
    arm["reports"] = nlohmann::json::array();
    for (const auto& r : a.reports)
      arm["reports"].push_back({{"task", r.task},
                                {"metric", r.metric},
                                {"mean", r.mean},
                                {"std", r.std},
                                {"test_per_seed", r.test_per_seed},
                                {"chosen_lr", r.chosen_lr},
                                {"lrs", r.lrs},
                                {"val_by_lr", r.val_by_lr}});
    j["arms"].push_back(arm);
  }
  return j.dump(2);
}

std::string AblationReport::to_markdown() const {
  std::ostringstream o;
  o << "| arm |";
  for (std::size_t t = 0; t < tasks.size(); ++t) o << ' ' << tasks[t] << " (" << to_string(categories[t]) << ") |";
  o << " mean |\n|---|";
  for (std::size_t t = 0; t <= tasks.size(); ++t) o << "---|";
  o << '\n';
  for (const auto& a : arms) {
    o << "| " << a.name << " |";
    for (const auto& r : a.reports) o << ' ' << fmt(r.mean) << " ± " << fmt(r.std) << " |";
    bool any = std::any_of(a.reports.begin(), a.reports.end(), [](const MetricReport& r) { return r.metric == "rmse"; });
    o << ' ' << (any ? fmt(mean_rmse(a.name)) : std::string("-")) << " |\n";
  }
  o << "\nMetric: test RMSE on standardized labels (lower is better), mean ± std over probe seeds.\n";
  return o.str();
}

ProbeSuite make_probe_suite(const std::vector<std::string>& exclude, const AblationConfig& cfg,
                            const std::string& prompt) {
  ProbeSuite suite{make_probe_dataset(cfg.probe_molecules, cfg.probe_seed, exclude), {}, {}};
  auto add = [&](const std::vector<std::string>& names, TaskCategory c) {
    for (const auto& n : names) {
      suite.tasks.push_back(descriptor_task(suite.data, n, prompt));
      suite.categories.push_back(c);
    }
  };
  add(cfg.prompted_relevant, TaskCategory::kPromptedRelevant);
  add(cfg.unprompted_relevant, TaskCategory::kUnpromptedRelevant);
  add(cfg.unrelated, TaskCategory::kUnrelated);
  if (cfg.solubility_proxy) {
    suite.tasks.push_back(solubility_proxy_task(suite.data, prompt));
    suite.categories.push_back(TaskCategory::kDownstream);
  }
  return suite;
}

AblationReport run_ablation(const Corpus& corpus, const AblationConfig& cfg, const Logger& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  for (const auto& a : cfg.arms)
    if (a != kArmMolTailor && a != kArmNoise && a != kArmMoleculeOnly && a != kArmSingleTower && a != kArmRandom)
      throw Error("unknown ablation arm: " + a);

  AblationReport report;
  report.prompt = probe_prompt(cfg);

  std::vector<std::string> molecules;
  for (const auto& r : corpus.records) molecules.push_back(r.smiles);
  const ProbeSuite suite = make_probe_suite(molecules, cfg, report.prompt);
  const ProbeDataset& data = suite.data;
  const std::vector<ProbeTask>& tasks = suite.tasks;
  report.categories = suite.categories;
  for (const auto& t : tasks) report.tasks.push_back(t.name);
  say("probe set: " + std::to_string(data.smiles.size()) + " held-out molecules, " + std::to_string(tasks.size()) +
      " tasks");

  auto probe_all = [&](const Model& model, const std::string& prompt, ArmResult& arm) {
    const Features f = extract_features(model, data.smiles, prompt);
    for (const auto& t : tasks) {
      arm.reports.push_back(linear_probe(f, t, cfg.probe));
      say("  " + arm.name + " / " + t.name + ": " + arm.reports.back().metric + " " + fmt(arm.reports.back().mean) +
          " ± " + fmt(arm.reports.back().std));
    }
  };
  auto train_arm = [&](ModelConfig mc, const std::string& label) {
    say("pretraining " + label + " (" + to_string(mc.architecture) + ")");
    return pretrain(corpus, mc, cfg.train, [&](const EpochRecord& e) {
      say("  epoch " + std::to_string(e.epoch) + " train " + fmt(e.train_loss) + " val " + fmt(e.val_loss));
    });
  };

  std::map<std::string, ArmResult> done;
  if (wants(cfg, kArmMolTailor) || wants(cfg, kArmNoise)) {
    ModelConfig mc = cfg.model;
    mc.architecture = Architecture::kMolTailor;
    const TrainResult tr = train_arm(mc, "full model");
    if (wants(cfg, kArmMolTailor)) {
      ArmResult a{kArmMolTailor, report.prompt, {}, tr.history, tr.best_val_loss};
      probe_all(tr.model, report.prompt, a);
      done[kArmMolTailor] = a;
    }
    if (wants(cfg, kArmNoise)) {
      ArmResult a{kArmNoise, cfg.noise_prompt, {}, tr.history, tr.best_val_loss};
      probe_all(tr.model, cfg.noise_prompt, a);
      done[kArmNoise] = a;
    }
  }
  if (wants(cfg, kArmMoleculeOnly)) {
    ModelConfig mc = cfg.model;
    mc.architecture = Architecture::kMoleculeOnly;
    const TrainResult tr = train_arm(mc, "molecule encoder on description-free records");
    ArmResult a{kArmMoleculeOnly, "", {}, tr.history, tr.best_val_loss};
    probe_all(tr.model, "", a);
    done[kArmMoleculeOnly] = a;
  }
  if (wants(cfg, kArmSingleTower)) {
    ModelConfig mc = cfg.model;
    mc.architecture = Architecture::kSingleTower;
    const TrainResult tr = train_arm(mc, "single tower on SMILES + description");
    ArmResult a{kArmSingleTower, report.prompt, {}, tr.history, tr.best_val_loss};
    probe_all(tr.model, report.prompt, a);
    done[kArmSingleTower] = a;
  }
  if (wants(cfg, kArmRandom)) {
    ModelConfig mc = cfg.model;
    mc.architecture = Architecture::kMoleculeOnly;
    auto [tv, sv] = build_vocabs(corpus, cfg.train.vocab_min_frequency);
    const Model model(mc, std::move(tv), std::move(sv), Rng::derive(cfg.train.seed, 1));
    say("random-init molecule encoder (no pretraining)");
    ArmResult a{kArmRandom, "", {}, {}, std::numeric_limits<double>::quiet_NaN()};
    probe_all(model, "", a);
    done[kArmRandom] = a;
  }
  for (const auto& name : cfg.arms)
    if (done.count(name)) report.arms.push_back(done.at(name));
  return report;
}

}  // namespace moltailor
