#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "moltailor/ablation.h"
#include "moltailor/attention_trace.h"
#include "moltailor/checkpoint.h"
#include "moltailor/chem/smiles.h"
#include "moltailor/corpus.h"
#include "moltailor/descriptors.h"
#include "moltailor/probe.h"
#include "moltailor/run_config.h"
#include "moltailor/selfcheck.h"
#include "moltailor/synth.h"
#include "moltailor/train.h"

namespace fs = std::filesystem;
using namespace moltailor;

namespace {

const auto t_start = std::chrono::steady_clock::now();

void log(const std::string& msg) {
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, msg.c_str());
  std::fflush(stderr);
}

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Flags and config file shared by every subcommand that trains or probes.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* sub) {
    sub->add_option("--config", file, "flat key = value config file")->check(CLI::ExistingFile);
    for (const auto& k : config_schema()) {
      const std::string name = k.name;
      sub->add_option_function<std::string>(
             "--" + name, [this, name](const std::string& v) { values[name] = v; },
             k.help + " (default " + k.default_value + ")")
          ->type_name("VALUE");
    }
  }

  RunConfig resolve() const {
    const RunConfig rc = resolve_config(file.empty() ? std::nullopt : std::optional<fs::path>(file), values,
                                        std::getenv("MOLTAILOR_SEED"));
    log("seed = " + rc.get("seed") + " (from " + rc.origin.at("seed") + ")");
    return rc;
  }
};

// Locks `dir` and refuses to replace artifacts of an earlier run.
std::unique_ptr<OutputLock> claim(const fs::path& dir, const std::vector<std::string>& artifacts) {
  auto lock = std::make_unique<OutputLock>(dir);
  for (const auto& a : artifacts)
    if (fs::exists(dir / a)) throw Error("refusing to overwrite " + (dir / a).string() + "; use a fresh --out");
  return lock;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void finish_config(const RunConfig& rc, const fs::path& dir) {
  rc.write(dir);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rc.hash()));
  log(std::string("config hash ") + buf + " -> " + (dir / "resolved_config.txt").string());
}

Corpus load_corpus_dir(const std::string& dir) {
  Corpus c = read_corpus(dir);
  log("corpus " + dir + ": " + std::to_string(c.records.size()) + " records");
  return c;
}

// ---- subcommands ----

int cmd_build_corpus(const std::string& source, const fs::path& out, const ConfigFlags& flags) {
  const RunConfig rc = flags.resolve();
  const auto lock = claim(out, {"corpus.jsonl", "manifest.json", "resolved_config.txt"});
  std::vector<std::string> molecules;
  if (source.rfind("synthetic:", 0) == 0) {
    int n = 0;
    const std::string count = source.substr(10);
    const auto r = std::from_chars(count.data(), count.data() + count.size(), n);
    if (r.ec != std::errc() || r.ptr != count.data() + count.size() || n <= 0)
      throw Error("bad synthetic source '" + source + "': expected synthetic:<count>");
    molecules = synth_molecules(n, rc.seed());
    log("generated " + std::to_string(molecules.size()) + " synthetic molecules");
  } else {
    IngestResult in = ingest_molecules({fs::path(source)});
    for (const auto& line : in.log) log("rejected: " + line);
    log("ingested " + std::to_string(in.smiles.size()) + " molecules, rejected " + std::to_string(in.rejected));
    molecules = std::move(in.smiles);
  }
  const Corpus corpus = build_mtmtr(molecules, rc.seed());
  write_corpus(corpus, out);
  finish_config(rc, out);
  log("wrote " + std::to_string(corpus.records.size()) + " records to " + out.string());
  return 0;
}

int cmd_pretrain(const std::string& corpus_dir, const fs::path& out, const ConfigFlags& flags) {
  const RunConfig rc = flags.resolve();
  const ModelConfig mc = rc.model();
  const TrainConfig tc = rc.train();
  const auto lock =
      claim(out, {"model.ckpt", "text_vocab.txt", "smiles_vocab.txt", "history.jsonl", "resolved_config.txt"});
  const Corpus corpus = load_corpus_dir(corpus_dir);
  const TrainResult tr = pretrain(corpus, mc, tc, [](const EpochRecord& e) {
    log("epoch " + std::to_string(e.epoch) + " train " + shortest(e.train_loss) + " val " + shortest(e.val_loss) +
        " lr " + shortest(e.lr));
  });
  save_checkpoint(tr.model, out);
  write_history(tr.history, out / "history.jsonl");
  finish_config(rc, out);
  log("best epoch " + std::to_string(tr.best_epoch) + " val " + shortest(tr.best_val_loss) +
      (tr.early_stopped ? " (early stop)" : ""));
  return 0;
}

nlohmann::json report_json(const MetricReport& r) {
  return {{"task", r.task},       {"metric", r.metric}, {"mean", r.mean},           {"std", r.std},
          {"test_per_seed", r.test_per_seed}, {"chosen_lr", r.chosen_lr}, {"lrs", r.lrs}, {"val_by_lr", r.val_by_lr}};
}

int cmd_probe(const std::string& checkpoint, const fs::path& out, const std::string& corpus_dir,
              const std::optional<std::string>& prompt_flag, const std::vector<std::string>& task_specs,
              const ConfigFlags& flags) {
  const RunConfig rc = flags.resolve();
  const AblationConfig ac = rc.ablation();
  const auto lock = claim(out, {"probe_report.json", "probe_report.md", "resolved_config.txt"});
  const Model model = load_checkpoint(checkpoint);
  const std::string prompt = prompt_flag ? *prompt_flag : probe_prompt(ac);
  log("probing " + checkpoint + " (" + to_string(model.config().architecture) + ") with prompt: " + prompt);

  std::vector<std::string> exclude;
  if (!corpus_dir.empty())
    for (const auto& r : load_corpus_dir(corpus_dir).records) exclude.push_back(r.smiles);

  std::vector<MetricReport> reports;
  auto run = [&](const std::vector<std::string>& smiles, const std::vector<ProbeTask>& tasks) {
    if (tasks.empty()) return;
    const Features f = extract_features(model, smiles, prompt);
    for (const auto& t : tasks) {
      reports.push_back(linear_probe(f, t, ac.probe));
      log(t.name + ": " + reports.back().metric + " " + shortest(reports.back().mean) + " +- " +
          shortest(reports.back().std));
    }
  };
  if (task_specs.empty()) {
    const ProbeSuite suite = make_probe_suite(exclude, ac, prompt);
    run(suite.data.smiles, suite.tasks);
  } else {
    std::optional<ProbeDataset> data;
    std::vector<ProbeTask> synthetic;
    std::vector<std::string> csvs;
    for (const auto& spec : task_specs) {
      if (spec.rfind("csv:", 0) == 0) {
        csvs.push_back(spec.substr(4));
        continue;
      }
      if (!data) data = make_probe_dataset(ac.probe_molecules, ac.probe_seed, exclude);
      if (spec == "solubility_proxy")
        synthetic.push_back(solubility_proxy_task(*data, prompt));
      else if (spec.rfind("descriptor:", 0) == 0)
        synthetic.push_back(descriptor_task(*data, spec.substr(11), prompt));
      else
        throw Error("unknown task '" + spec + "'; expected descriptor:<name>, solubility_proxy or csv:<path>");
    }
    if (data) run(data->smiles, synthetic);
    for (const auto& path : csvs) run(csv_smiles(path), {csv_task(path, prompt, rc.seed())});
  }

  // no paths in the report, so reruns elsewhere compare byte for byte
  nlohmann::json j{{"architecture", to_string(model.config().architecture)},
                   {"prompt", prompt},
                   {"reports", nlohmann::json::array()}};
  std::ostringstream md;
  md << "| task | metric | mean | std | chosen lr |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    j["reports"].push_back(report_json(r));
    md << "| " << r.task << " | " << r.metric << " | " << shortest(r.mean) << " | " << shortest(r.std) << " | "
       << shortest(r.chosen_lr) << " |\n";
  }
  write_text(out / "probe_report.json", j.dump(2) + "\n");
  write_text(out / "probe_report.md", md.str());
  finish_config(rc, out);
  return 0;
}

int cmd_ablate(const std::string& corpus_dir, const fs::path& out, const ConfigFlags& flags) {
  const RunConfig rc = flags.resolve();
  const AblationConfig ac = rc.ablation();
  const auto lock = claim(out, {"ablation_report.json", "ablation_report.md", "resolved_config.txt"});
  const Corpus corpus = load_corpus_dir(corpus_dir);
  const AblationReport rep = run_ablation(corpus, ac, log);
  write_text(out / "ablation_report.json", rep.to_json() + "\n");
  write_text(out / "ablation_report.md", rep.to_markdown());
  finish_config(rc, out);
  std::cout << rep.to_markdown();
  return 0;
}

int cmd_attn(const std::string& checkpoint, const std::string& smiles, const std::vector<std::string>& prompts,
             bool mask_molecule, const fs::path& out) {
  std::vector<std::string> artifacts;
  for (std::size_t i = 0; i < prompts.size(); ++i)
    for (const char* ext : {".json", ".svg"}) artifacts.push_back("attn_" + std::to_string(i) + ext);
  const auto lock = claim(out, artifacts);
  const Model model = load_checkpoint(checkpoint);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const AttnTrace t = extract_cls_attention(model, smiles, prompts[i], mask_molecule);
    write_text(out / ("attn_" + std::to_string(i) + ".json"), trace_to_json(t) + "\n");
    write_text(out / ("attn_" + std::to_string(i) + ".svg"), trace_to_svg(t));
    log("prompt " + std::to_string(i) + ": " + std::to_string(t.words.size()) + " words, molecule mass " +
        shortest(t.molecule_mass));
  }
  return 0;
}

int cmd_descriptors(const std::string& input, const std::string& out_path) {
  std::ifstream in(input);
  if (!in) throw Error("cannot read " + input);
  std::ostringstream csv;
  csv << "smiles";
  for (const auto& d : registry()) csv << ',' << d.name;
  csv << '\n';
  int line_no = 0, failed = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string smi = line.substr(0, line.find_first_of(" \t\r"));
    if (smi.empty() || smi[0] == '#') continue;
    try {
      const DescriptorVector v = compute_all(chem::parse_smiles(smi));
      csv << smi;
      for (double x : v.values) csv << ',' << shortest(x);
      csv << '\n';
    } catch (const Error& e) {
      ++failed;
      log(input + ":" + std::to_string(line_no) + ": skipped " + smi + ": " + e.what());
    }
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    if (fs::exists(out_path)) throw Error("refusing to overwrite " + out_path);
    write_text(out_path, csv.str());
  }
  if (failed) log(std::to_string(failed) + " molecules skipped");
  return 0;
}

int cmd_selfcheck(const std::string& smiles_file) {
  std::vector<std::string> smiles;
  if (!smiles_file.empty()) {
    std::ifstream in(smiles_file);
    if (!in) throw Error("cannot read " + smiles_file);
    for (std::string line; std::getline(in, line);)
      if (!line.empty() && line[0] != '#') smiles.push_back(line.substr(0, line.find_first_of(" \t\r")));
  }
  const auto results = run_selfcheck(smiles);
  std::cout << format_check_table(results);
  int failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << (failed ? std::to_string(failed) + " checks failed\n" : "all checks passed\n");
  return failed ? 1 : 0;
}

void error_record(const std::string& command, const std::string& kind, const std::string& message) {
  const nlohmann::json j{{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Large activations are reused batch after batch; keep them out of mmap so
  // they are not zero-filled on every allocation.
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  CLI::App app{"moltailor: text-tailored molecular representations"};
  app.require_subcommand(1);
  app.footer("Environment: MOLTAILOR_SEED overrides the config-file seed; --seed overrides both.");

  ConfigFlags build_flags, pretrain_flags, probe_flags, ablate_flags;
  std::string source, out, corpus_dir, checkpoint, smiles, csv_out, input, selfcheck_smiles;
  std::optional<std::string> prompt;
  std::vector<std::string> tasks, prompts;
  bool mask_molecule = false;

  auto* build = app.add_subcommand("build-corpus", "build the multi-task regression corpus");
  build->add_option("--source", source, "molecule file (one SMILES per line) or synthetic:<count>")->required();
  build->add_option("--out", out, "output directory")->required();
  build_flags.attach(build);

  auto* pre = app.add_subcommand("pretrain", "pretrain a model on a built corpus");
  pre->add_option("--corpus", corpus_dir, "corpus directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", out, "checkpoint directory")->required();
  pretrain_flags.attach(pre);

  auto* probe = app.add_subcommand("probe", "linear probes on frozen representations");
  probe->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  probe->add_option("--out", out, "report directory")->required();
  probe->add_option("--corpus", corpus_dir, "corpus whose molecules are kept out of the probe set")
      ->check(CLI::ExistingDirectory);
  probe->add_option("--prompt", prompt, "description fed with every molecule (default: rendered from prompt_names)");
  probe->add_option("--task", tasks, "descriptor:<name>, solubility_proxy or csv:<path>; repeatable");
  probe_flags.attach(probe);

  auto* abl = app.add_subcommand("ablate", "pretrain and probe every ablation arm");
  abl->add_option("--corpus", corpus_dir, "corpus directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--out", out, "report directory")->required();
  ablate_flags.attach(abl);

  auto* attn = app.add_subcommand("attn", "export [CLS] attention traces");
  attn->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  attn->add_option("--smiles", smiles, "molecule")->required();
  attn->add_option("--prompt", prompts, "description; repeat for several traces")->required();
  attn->add_flag("--mask-molecule", mask_molecule, "hide every molecule key");
  attn->add_option("--out", out, "output directory")->required();

  auto* desc = app.add_subcommand("descriptors", "descriptor utilities");
  desc->require_subcommand(1);
  auto* compute = desc->add_subcommand("compute", "descriptor CSV for a SMILES file");
  compute->add_option("smiles-file", input, "one SMILES per line")->required();
  compute->add_option("--out", csv_out, "CSV path (default stdout)");

  auto* check = app.add_subcommand("selfcheck", "identity, gradient, loss, metric and canonicalization checks");
  check->add_option("--smiles", selfcheck_smiles, "molecules for the permutation tests (default: bundled set)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nRun with --help for usage.\n";
    error_record(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), "usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*build) return cmd_build_corpus(source, out, build_flags);
    if (*pre) return cmd_pretrain(corpus_dir, out, pretrain_flags);
    if (*probe) return cmd_probe(checkpoint, out, corpus_dir, prompt, tasks, probe_flags);
    if (*abl) return cmd_ablate(corpus_dir, out, ablate_flags);
    if (*attn) return cmd_attn(checkpoint, smiles, prompts, mask_molecule, out);
    if (*compute) return cmd_descriptors(input, csv_out);
    if (*check) return cmd_selfcheck(selfcheck_smiles);
  } catch (const ConfigError& e) {
    error_record(command, "usage", e.what());
    return 2;
  } catch (const std::exception& e) {
    error_record(command, "runtime", e.what());
    return 1;
  }
  return 2;
}
