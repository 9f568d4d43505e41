// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--only 1,2,...] [--work DIR]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "moltailor/ablation.h"
#include "moltailor/attention_trace.h"
#include "moltailor/checkpoint.h"
#include "moltailor/selfcheck.h"
#include "moltailor/synth.h"

namespace fs = std::filesystem;
using namespace moltailor;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void note(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

Outcome from_checks(const std::vector<CheckResult>& checks, double seconds, double limit) {
  Outcome o{seconds < limit, ""};
  for (const auto& c : checks) {
    o.pass = o.pass && c.passed;
    note(std::string(c.passed ? "ok   " : "FAIL ") + c.name + " value " + fmt("%.3e", c.value) + " bound " +
         fmt("%.1e", c.threshold) + " (" + c.detail + ")");
  }
  o.detail = std::to_string(checks.size()) + " checks in " + fmt("%.1f", seconds) + " s";
  if (std::isfinite(limit)) o.detail += " (limit " + fmt("%.0f", limit) + " s)";
  return o;
}

template <class F>
Outcome timed_checks(F f, double limit) {
  const auto t0 = Clock::now();
  const auto checks = f();
  return from_checks(checks, seconds_since(t0), limit);
}

std::vector<std::string> bundled_smiles() {
  std::vector<std::string> out;
  std::ifstream in(MOLTAILOR_DATA_DIR "/test_molecules.smi");
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') out.push_back(line.substr(0, line.find_first_of(" \t")));
  return out;
}

// ---- criterion 8: the CLI twice with the same seed ----

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MOLTAILOR_CLI + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == ".moltailor.lock") continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

const char* kSmallModel =
    " --d_t 32 --d_m 32 --h_t 2 --h_m 2 --L_text 3 --L_uni 2 --L_mol 2 --epochs 3 --batch_size 32 --lr_peak 5e-4";

Outcome determinism(const fs::path& work, fs::path& checkpoint_out) {
  fs::create_directories(work);
  const fs::path log = work / "cli.log";
  Outcome o{true, ""};
  for (int run = 1; run <= 2; ++run) {
    const fs::path r = work / ("run" + std::to_string(run));
    const std::string c = (r / "corpus").string(), m = (r / "model").string(), p = (r / "probe").string();
    const int a = run_cli("build-corpus --source synthetic:300 --seed 7 --out \"" + c + "\"", log);
    const int b = run_cli("pretrain --seed 7 --corpus \"" + c + "\" --out \"" + m + "\"" + kSmallModel, log);
    const int d = run_cli("probe --seed 7 --checkpoint \"" + m + "\" --corpus \"" + c + "\" --out \"" + p +
                              "\" --probe_molecules 200 --probe_max_epochs 10",
                          log);
    if (a || b || d) {
      return {false, "CLI failed (exit codes " + std::to_string(a) + "/" + std::to_string(b) + "/" +
                         std::to_string(d) + "), see " + log.string()};
    }
  }
  for (const char* stage : {"corpus", "model", "probe"}) {
    const auto x = dir_contents(work / "run1" / stage), y = dir_contents(work / "run2" / stage);
    const bool same = !x.empty() && x == y;
    o.pass = o.pass && same;
    std::size_t bytes = 0;
    for (const auto& [k, v] : x) bytes += v.size();
    note(std::string(same ? "ok   " : "FAIL ") + stage + ": " + std::to_string(x.size()) + " files, " +
         std::to_string(bytes) + " bytes" + (same ? " identical" : " differ"));
  }
  checkpoint_out = work / "run1" / "model";
  o.detail = "build-corpus, pretrain (small config) and probe artifacts compared byte for byte";
  return o;
}

// ---- criterion 9 ----

Outcome attention(const fs::path& checkpoint, const fs::path& work) {
  const Model model = load_checkpoint(checkpoint);
  const std::string smiles = "CC(=O)Oc1ccccc1C(=O)O";
  const std::string p1 = "MolWt reflects overall molecular size. Higher FractionCSP3 often improves solubility.";
  const std::string p2 = "NumHDonors controls hydrogen bond donation. HalogenCount tracks halogen substitution.";
  const AttnTrace a = extract_cls_attention(model, smiles, p1), b = extract_cls_attention(model, smiles, p2);
  bool pass = true;
  double worst = 0.0;
  for (const AttnTrace* t : {&a, &b}) {
    pass = pass && !t->unimodal_words.empty() && !t->multimodal_words.empty() && !t->multimodal_atoms.empty();
    for (const auto* v : {&t->unimodal_words, &t->multimodal_words}) {
      double s = 0;
      for (double w : *v) s += w;
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  pass = pass && worst <= 1e-9;
  double diff = std::abs(a.molecule_mass - b.molecule_mass);
  for (std::size_t i = 0; i < a.multimodal_atoms.size(); ++i)
    diff = std::max(diff, std::abs(a.multimodal_atoms[i] - b.multimodal_atoms[i]));
  pass = pass && diff > 1e-6;
  const fs::path out = work / "attn";
  const int rc = run_cli("attn --checkpoint \"" + checkpoint.string() + "\" --smiles \"" + smiles + "\" --prompt \"" +
                             p1 + "\" --prompt \"" + p2 + "\" --out \"" + out.string() + "\"",
                         work / "cli.log");
  const bool files = rc == 0 && fs::exists(out / "attn_0.json") && fs::exists(out / "attn_1.svg");
  pass = pass && files;
  return {pass, "word sums off by " + fmt("%.1e", worst) + ", max atom-trace difference " + fmt("%.3e", diff) +
                    (files ? ", JSON/SVG exported" : ", CLI export missing")};
}

// ---- criteria 6 and 7: one shared ablation run ----

struct AblationOutcome {
  Outcome c6, c7;
};

AblationOutcome reference_ablation(const fs::path& work) {
  const auto t0 = Clock::now();
  const Corpus corpus = build_mtmtr(synth_molecules(2000, 7), 7);
  AblationConfig cfg;  // d = 128, L_text 8 / L_uni 6, L_mol 4, 20 epochs, 3 probe seeds
  cfg.train.seed = 1;
  cfg.train.batch_size = 32;
  cfg.train.lr_peak = 5e-4;
  cfg.arms = {kArmMolTailor, kArmNoise, kArmMoleculeOnly, kArmRandom};
  const AblationReport rep = run_ablation(corpus, cfg, [&](const std::string& s) {
    note(fmt("[%6.0fs] ", seconds_since(t0)) + s);
  });
  const double minutes = seconds_since(t0) / 60.0;
  std::ofstream(work / "ablation_report.md") << rep.to_markdown();
  std::ofstream(work / "ablation_report.json") << rep.to_json();
  std::printf("\n%s\n", rep.to_markdown().c_str());

  const TaskCategory prompted = TaskCategory::kPromptedRelevant, unrelated = TaskCategory::kUnrelated;
  const double full_p = rep.mean_rmse(kArmMolTailor, &prompted), noise_p = rep.mean_rmse(kArmNoise, &prompted),
               mol_p = rep.mean_rmse(kArmMoleculeOnly, &prompted);
  const double full_u = rep.mean_rmse(kArmMolTailor, &unrelated), mol_u = rep.mean_rmse(kArmMoleculeOnly, &unrelated);
  const double full_all = rep.mean_rmse(kArmMolTailor), mol_all = rep.mean_rmse(kArmMoleculeOnly),
               rand_all = rep.mean_rmse(kArmRandom);
  const bool in_time = minutes < 45.0;
  const std::string when = ", shared run " + fmt("%.1f", minutes) + " min";
  AblationOutcome o;
  o.c6.pass = full_p < noise_p && full_p < mol_p && in_time;
  o.c6.detail = "prompted-relevant RMSE: relevant " + fmt("%.4f", full_p) + " vs noise " + fmt("%.4f", noise_p) +
                " vs M-Encoder-only " + fmt("%.4f", mol_p) + "; unrelated: relevant " + fmt("%.4f", full_u) +
                " vs M-Encoder-only " + fmt("%.4f", mol_u) + when;
  o.c7.pass = mol_all < rand_all && full_all < mol_all && in_time;
  o.c7.detail = "mean regression RMSE: random-init " + fmt("%.4f", rand_all) + " > M-Encoder on MT-MTR* " +
                fmt("%.4f", mol_all) + " > MolTailor " + fmt("%.4f", full_all) + " required" + when;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  CLI::App app{"moltailor acceptance suite"};
  std::vector<int> only;
  std::string work_dir = "acceptance_work";
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--work", work_dir, "scratch directory, recreated on every run");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> want = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9} : std::set<int>(only.begin(), only.end());

  const fs::path work = fs::absolute(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  std::map<int, Outcome> results;
  auto run = [&](int id, const char* title, const std::function<Outcome()>& f) {
    if (!want.count(id)) return;
    std::printf("criterion %d: %s\n", id, title);
    std::fflush(stdout);
    try {
      results[id] = f();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n\n", id, results[id].pass ? "PASS" : "FAIL", results[id].detail.c_str());
    std::fflush(stdout);
  };

  run(1, "hybrid attention decomposition identity", [] { return timed_checks([] { return decomposition_checks(100); }, 10.0); });
  run(2, "gradient checks", [] {
    return timed_checks(
        [] {
          auto all = primitive_gradient_checks(10, 1e-4);
          auto blocks = block_gradient_checks(10, 1e-4);
          all.insert(all.end(), blocks.begin(), blocks.end());
          return all;
        },
        120.0);
  });
  run(3, "masked multi-task loss", [] { return timed_checks([] { return loss_checks(50); }, HUGE_VAL); });
  run(4, "canonicalization under renumbering", [] {
    return timed_checks([] { return canonicalization_checks(bundled_smiles(), 50); }, 60.0);
  });
  run(5, "metric oracles", [] { return timed_checks([] { return metric_checks(10000); }, HUGE_VAL); });

  fs::path checkpoint;
  run(8, "determinism of build-corpus, pretrain and probe", [&] { return determinism(work / "determinism", checkpoint); });
  run(9, "attention export", [&] {
    if (checkpoint.empty()) {
      fs::path unused;
      const Outcome d = determinism(work / "attn_model", unused);
      if (!fs::exists(unused / "model.ckpt")) return Outcome{false, "no checkpoint: " + d.detail};
      checkpoint = unused;
    }
    return attention(checkpoint, work);
  });

  if (want.count(6) || want.count(7)) {
    std::printf("criteria 6 and 7: reference ablation (shared pretraining)\n");
    std::fflush(stdout);
    AblationOutcome a;
    try {
      a = reference_ablation(work);
    } catch (const std::exception& e) {
      a.c6 = a.c7 = {false, std::string("exception: ") + e.what()};
    }
    if (want.count(6)) results[6] = a.c6;
    if (want.count(7)) results[7] = a.c7;
  }

  std::printf("==== acceptance summary ====\n");
  int failed = 0;
  for (const auto& [id, o] : results) {
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed ? 1 : 0;
}
