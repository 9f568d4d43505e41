#include "moltailor/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "moltailor/bundled_data.h"
#include "moltailor/chem/canonical.h"
#include "moltailor/chem/smiles.h"

namespace moltailor {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool contains_word(const std::string& text, const std::string& word) {
  for (std::size_t pos = text.find(word); pos != std::string::npos; pos = text.find(word, pos + 1)) {
    const std::size_t end = pos + word.size();
    if ((pos == 0 || !is_word_char(text[pos - 1])) && (end >= text.size() || !is_word_char(text[end]))) {
      return true;
    }
  }
  return false;
}

const std::vector<std::string>& phrases_for(const std::string& name) {
  return registry().at(descriptor_index(name)).phrase_bank;
}

}  // namespace

int MtmtrRecord::mask_count() const {
  return static_cast<int>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

IngestResult ingest_lines(const std::vector<std::string>& lines) {
  IngestResult out;
  std::set<std::string> unique;
  int line_no = 0;
  for (const std::string& raw : lines) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string smiles = line.substr(0, line.find_first_of(" \t"));
    try {
      unique.insert(chem::canonical_smiles(smiles));
    } catch (const Error& e) {
      ++out.rejected;
      out.log.push_back("line " + std::to_string(line_no) + ": " + smiles + ": " + e.what());
    }
  }
  out.smiles.assign(unique.begin(), unique.end());
  if (out.smiles.empty()) throw EmptyCorpus("no valid molecules in input");
  return out;
}

IngestResult ingest_molecules(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::string> lines;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    if (in.bad()) throw Error("read error on " + path.string());
  }
  return ingest_lines(lines);
}

std::vector<std::string> dedup_against(const std::vector<std::string>& smiles,
                                       const std::vector<std::string>& reference) {
  std::set<std::string> ref;
  for (const auto& s : reference) ref.insert(chem::canonical_smiles(s));
  std::vector<std::string> out;
  for (const auto& s : smiles) {
    if (!ref.count(chem::canonical_smiles(s))) out.push_back(s);
  }
  return out;
}

std::vector<double> inclusion_probabilities(const std::vector<double>& weights, int k) {
  const std::size_t n = weights.size();
  std::vector<double> pi(n, 0.0);
  std::vector<bool> certain(n, false);
  if (static_cast<std::size_t>(k) >= n) return std::vector<double>(n, 1.0);
  for (;;) {
    double rest = 0.0;
    int left = k;
    for (std::size_t i = 0; i < n; ++i) {
      if (certain[i]) --left;
      else rest += weights[i];
    }
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (certain[i]) {
        pi[i] = 1.0;
        continue;
      }
      pi[i] = left * weights[i] / rest;
      if (pi[i] >= 1.0) {
        certain[i] = true;
        changed = true;
      }
    }
    if (!changed) return pi;
  }
}

std::vector<std::string> sample_properties(Rng& rng, const std::vector<DescriptorSpec>& registry) {
  const int k = static_cast<int>(std::min<std::int64_t>(rng.uniform_int(5, 10), registry.size()));
  std::vector<double> weights;
  for (const auto& spec : registry) weights.push_back(spec.sampling_weight);
  const std::vector<double> pi = inclusion_probabilities(weights, k);

  std::vector<int> order(registry.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<int>(order));

  // Systematic pass over the shuffled order: points u, u+1, ..., u+k-1 on the
  // cumulative inclusion probabilities each pick one item.
  const double u = rng.uniform();
  std::vector<std::string> picked;
  double cumulative = 0.0;
  int next = 0;
  for (std::size_t j = 0; j < order.size() && next < k; ++j) {
    cumulative += pi[order[j]];
    if (u + next < cumulative) {
      picked.push_back(registry[order[j]].name);
      ++next;
    }
  }
  // Rounding can leave the last point just past the final boundary.
  for (std::size_t j = order.size(); next < k && j-- > 0;) {
    const std::string& name = registry[order[j]].name;
    if (std::find(picked.begin(), picked.end(), name) == picked.end()) {
      picked.push_back(name);
      ++next;
    }
  }
  return picked;
}

const std::vector<std::string>& framing_sentences() {
  static const std::vector<std::string> sentences = [] {
    std::vector<std::string> out;
    std::istringstream in{std::string(data::k_framing)};
    for (std::string line; std::getline(in, line);) {
      line = trim(line);
      if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
  }();
  return sentences;
}

std::string render_description(const std::vector<std::string>& names, Rng& rng) {
  if (names.empty()) throw Error("render_description needs at least one property");
  const auto& framing = framing_sentences();
  std::string text = framing[rng.uniform_int(0, static_cast<std::int64_t>(framing.size()) - 1)];
  for (const auto& name : names) {
    const auto& bank = phrases_for(name);
    text += ' ';
    text += bank[rng.uniform_int(0, static_cast<std::int64_t>(bank.size()) - 1)];
  }
  return text;
}

std::vector<std::string> named_properties(const std::string& description) {
  std::vector<std::string> out;
  for (const auto& spec : registry()) {
    if (contains_word(description, spec.name)) out.push_back(spec.name);
  }
  return out;
}

Splits split_dataset(int n, const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0; })) {
    throw Error("split ratios must be non-negative and sum to 1");
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(ids));
  const int n_val = static_cast<int>(std::lround(n * ratios[1]));
  const int n_test = std::min(n - n_val, static_cast<int>(std::lround(n * ratios[2])));
  const int n_train = n - n_val - n_test;
  Splits s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<LabelStats> label_statistics(const std::vector<MtmtrRecord>& records, const std::vector<int>& train) {
  const std::size_t m = registry().size();
  std::vector<LabelStats> stats(m);
  std::vector<double> sum(m, 0.0);
  for (int r : train) {
    for (std::size_t i = 0; i < m; ++i) {
      if (records[r].m[i]) {
        sum[i] += records[r].y[i];
        ++stats[i].count;
      }
    }
  }
  std::vector<double> sq(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) stats[i].mean = stats[i].count ? sum[i] / stats[i].count : 0.0;
  for (int r : train) {
    for (std::size_t i = 0; i < m; ++i) {
      if (records[r].m[i]) {
        const double d = records[r].y[i] - stats[i].mean;
        sq[i] += d * d;
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    auto& s = stats[i];
    s.std = s.count ? std::sqrt(sq[i] / s.count) : 0.0;
    s.degenerate = s.count < 2 || s.std < 1e-9;
  }
  return stats;
}

std::vector<MtmtrRecord> standardize_labels(std::vector<MtmtrRecord> records, const std::vector<LabelStats>& stats) {
  for (auto& rec : records) {
    for (std::size_t i = 0; i < stats.size(); ++i) {
      if (!rec.m[i]) continue;
      rec.y[i] = stats[i].degenerate ? 0.0 : (rec.y[i] - stats[i].mean) / stats[i].std;
    }
  }
  return records;
}

Corpus build_mtmtr(const std::vector<std::string>& molecules, std::uint64_t seed,
                   const std::array<double, 3>& ratios) {
  if (molecules.empty()) throw EmptyCorpus("build_mtmtr needs at least one molecule");
  const auto& reg = registry();
  Corpus corpus;
  auto& man = corpus.manifest;
  man.build_seed = seed;
  man.record_count = static_cast<int>(molecules.size());
  for (const auto& spec : reg) man.descriptor_names.push_back(spec.name);
  man.occurrence.assign(reg.size(), 0);

  corpus.records.reserve(molecules.size());
  for (std::size_t r = 0; r < molecules.size(); ++r) {
    MtmtrRecord rec;
    rec.seed = Rng::derive(seed, r);
    Rng rng(rec.seed);
    const chem::MolGraph mol = chem::parse_smiles(molecules[r]);
    rec.smiles = chem::canonicalize(mol);
    const DescriptorVector values = compute_all(mol);
    rec.properties = sample_properties(rng, reg);
    rec.description = render_description(rec.properties, rng);
    rec.y.assign(reg.size(), 0.0);
    rec.m.assign(reg.size(), 0);
    for (const auto& name : rec.properties) {
      const int i = descriptor_index(name);
      rec.m[i] = 1;
      rec.y[i] = values.values[i];
      ++man.occurrence[i];
    }
    corpus.records.push_back(std::move(rec));
  }
  // Stream index past any record index.
  man.splits = split_dataset(man.record_count, ratios, Rng::derive(seed, 0xFFFF'FFFF'0000'0001ULL));
  man.stats = label_statistics(corpus.records, man.splits.train);
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "corpus.jsonl", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "corpus.jsonl").string());
    for (const auto& rec : corpus.records) {
      json j;
      j["smiles"] = rec.smiles;
      j["description"] = rec.description;
      j["y"] = rec.y;
      j["m"] = rec.m;
      j["meta"] = {{"properties", rec.properties}, {"seed", rec.seed}};
      out << j.dump() << '\n';
    }
  }
  const auto& man = corpus.manifest;
  json stats = json::array();
  for (std::size_t i = 0; i < man.stats.size(); ++i) {
    const auto& s = man.stats[i];
    stats.push_back({{"name", man.descriptor_names[i]},
                     {"mean", s.mean},
                     {"std", s.std},
                     {"count", s.count},
                     {"degenerate", s.degenerate}});
  }
  json j = {{"format_version", 1},
            {"record_count", man.record_count},
            {"build_seed", man.build_seed},
            {"descriptor_names", man.descriptor_names},
            {"occurrence", man.occurrence},
            {"label_stats", stats},
            {"std_convention", "population"},
            {"splits", {{"train", man.splits.train}, {"val", man.splits.val}, {"test", man.splits.test}}}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  std::ifstream in(dir / "corpus.jsonl");
  if (!in) throw Error("cannot read " + (dir / "corpus.jsonl").string());
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    MtmtrRecord rec;
    rec.smiles = j.at("smiles").get<std::string>();
    rec.description = j.at("description").get<std::string>();
    rec.y = j.at("y").get<std::vector<double>>();
    rec.m = j.at("m").get<std::vector<std::uint8_t>>();
    rec.properties = j.at("meta").at("properties").get<std::vector<std::string>>();
    rec.seed = j.at("meta").at("seed").get<std::uint64_t>();
    corpus.records.push_back(std::move(rec));
  }
  std::ifstream min(dir / "manifest.json");
  if (!min) throw Error("cannot read " + (dir / "manifest.json").string());
  const json j = json::parse(min);
  auto& man = corpus.manifest;
  man.record_count = j.at("record_count").get<int>();
  man.build_seed = j.at("build_seed").get<std::uint64_t>();
  man.descriptor_names = j.at("descriptor_names").get<std::vector<std::string>>();
  man.occurrence = j.at("occurrence").get<std::vector<int>>();
  for (const auto& s : j.at("label_stats")) {
    man.stats.push_back({s.at("mean").get<double>(), s.at("std").get<double>(), s.at("count").get<int>(),
                         s.at("degenerate").get<bool>()});
  }
  man.splits.train = j.at("splits").at("train").get<std::vector<int>>();
  man.splits.val = j.at("splits").at("val").get<std::vector<int>>();
  man.splits.test = j.at("splits").at("test").get<std::vector<int>>();
  if (static_cast<int>(corpus.records.size()) != man.record_count) {
    throw Error("corpus.jsonl has " + std::to_string(corpus.records.size()) + " records, manifest says " +
                std::to_string(man.record_count));
  }
  if (man.descriptor_names.size() != registry().size()) throw Error("manifest registry size mismatch");
  for (std::size_t i = 0; i < registry().size(); ++i) {
    if (man.descriptor_names[i] != registry()[i].name) throw Error("manifest registry order mismatch");
  }
  return corpus;
}

}  // namespace moltailor
