#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "moltailor/chem/canonical.h"
#include "moltailor/chem/smiles.h"
#include "moltailor/corpus.h"
#include "moltailor/synth.h"

using namespace moltailor;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int occurrences(const std::string& text, const std::string& word) {
  int n = 0;
  for (std::size_t pos = text.find(word); pos != std::string::npos; pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !(std::isalnum(text[pos - 1]) || text[pos - 1] == '_');
    const std::size_t end = pos + word.size();
    const bool right = end >= text.size() || !(std::isalnum(text[end]) || text[end] == '_');
    n += left && right;
  }
  return n;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("moltailor_corpus_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Ingest, DeduplicatesByCanonicalForm) {
  const IngestResult r = ingest_lines({"CCO", "OCC", "CCO"});
  ASSERT_EQ(r.smiles.size(), 1u);
  EXPECT_EQ(r.smiles[0], chem::canonical_smiles("CCO"));
  EXPECT_EQ(r.rejected, 0);
}

TEST(Ingest, RejectsInvalidLines) {
  const IngestResult r = ingest_lines({"# header", "CCO", "C(", "c1ccccc1 benzene", ""});
  EXPECT_EQ(r.smiles.size(), 2u);
  EXPECT_EQ(r.rejected, 1);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_NE(r.log[0].find("line 3"), std::string::npos);
  EXPECT_TRUE(std::is_sorted(r.smiles.begin(), r.smiles.end()));
}

TEST(Ingest, EmptyFile) {
  const fs::path dir = temp_dir("empty");
  fs::create_directories(dir);
  std::ofstream(dir / "empty.smi").close();
  EXPECT_THROW(ingest_molecules({dir / "empty.smi"}), EmptyCorpus);
  EXPECT_THROW(ingest_molecules({dir / "missing.smi"}), Error);
  fs::remove_all(dir);
}

TEST(Ingest, DedupAgainst) {
  const auto kept = dedup_against({"CCO", "CCN", "c1ccccc1"}, {"OCC", "C1=CC=CC=C1"});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0], "CCN");
}

TEST(SampleProperties, BoundsAndDeterminism) {
  const auto& reg = registry();
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng a(seed), b(seed);
    const auto names = sample_properties(a, reg);
    EXPECT_GE(names.size(), 5u);
    EXPECT_LE(names.size(), 10u);
    EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), names.size());
    EXPECT_EQ(sample_properties(b, reg), names);
  }
}

TEST(SampleProperties, InclusionProbabilitiesCapped) {
  const auto pi = inclusion_probabilities({10.0, 1.0, 1.0, 1.0}, 2);
  EXPECT_DOUBLE_EQ(pi[0], 1.0);
  EXPECT_NEAR(pi[1], 1.0 / 3.0, 1e-15);
  double sum = 0;
  for (double p : pi) sum += p;
  EXPECT_NEAR(sum, 2.0, 1e-12);
}

// Monte-Carlo: per-item inclusion rate of fr_* entries is 0.2x the rate of
// the others (weights 0.2 vs 1.0), within 10% relative.
TEST(SampleProperties, FrDownweighting) {
  const auto& reg = registry();
  std::vector<long> hits(reg.size(), 0);
  Rng rng(2024);
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) {
    for (const auto& n : sample_properties(rng, reg)) ++hits[descriptor_index(n)];
  }
  double fr = 0, plain = 0;
  int n_fr = 0, n_plain = 0;
  for (std::size_t i = 0; i < reg.size(); ++i) {
    if (reg[i].name.rfind("fr_", 0) == 0) {
      fr += hits[i];
      ++n_fr;
    } else {
      plain += hits[i];
      ++n_plain;
    }
  }
  const double ratio = (fr / n_fr) / (plain / n_plain);
  EXPECT_NEAR(ratio, 0.2, 0.02);
}

TEST(RenderDescription, SingleName) {
  Rng rng(0);
  const std::string text = render_description({"MolWt"}, rng);
  bool framed = false;
  for (const auto& f : framing_sentences()) framed = framed || text.rfind(f, 0) == 0;
  EXPECT_TRUE(framed) << text;
  EXPECT_EQ(occurrences(text, "MolWt"), 1);
  EXPECT_EQ(std::count(text.begin(), text.end(), '.'), 2);
  EXPECT_EQ(named_properties(text), std::vector<std::string>{"MolWt"});
}

TEST(RenderDescription, SeedsChangePhrasingNotNames) {
  const std::vector<std::string> names{"MolWt", "RingCount", "fr_ester"};
  std::set<std::string> texts;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::string t = render_description(names, rng);
    texts.insert(t);
    EXPECT_EQ(named_properties(t), (std::vector<std::string>{"MolWt", "RingCount", "fr_ester"}));
  }
  EXPECT_GT(texts.size(), 1u);
}

TEST(RenderDescription, TenNamesEachOnce) {
  const auto& reg = registry();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng pick(seed);
    std::vector<std::string> names;
    while (names.size() < 10) {
      const auto& n = reg[pick.uniform_int(0, 23)].name;
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    Rng rng(seed);
    const std::string text = render_description(names, rng);
    for (const auto& spec : reg) {
      const bool wanted = std::find(names.begin(), names.end(), spec.name) != names.end();
      EXPECT_EQ(occurrences(text, spec.name), wanted ? 1 : 0) << spec.name << " in " << text;
    }
  }
}

TEST(Splits, SizesAndCoverage) {
  const Splits s = split_dataset(1000, kDefaultSplitRatios, 1);
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
  std::set<int> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(*all.begin(), 0);
  EXPECT_EQ(*all.rbegin(), 999);
  const Splits again = split_dataset(1000, kDefaultSplitRatios, 1);
  EXPECT_EQ(again.val, s.val);
  EXPECT_NE(split_dataset(1000, kDefaultSplitRatios, 2).val, s.val);
  EXPECT_THROW(split_dataset(10, {0.5, 0.2, 0.2}, 1), Error);
}

TEST(Standardize, PopulationConvention) {
  MtmtrRecord a, b;
  a.y.assign(24, 0.0);
  a.m.assign(24, 0);
  b = a;
  a.y[0] = 2;
  a.m[0] = 1;
  b.y[0] = 4;
  b.m[0] = 1;
  a.y[1] = b.y[1] = 7;  // constant
  a.m[1] = b.m[1] = 1;
  b.y[2] = 99;  // masked out
  std::vector<MtmtrRecord> recs{a, b};
  const auto stats = label_statistics(recs, {0, 1});
  EXPECT_DOUBLE_EQ(stats[0].mean, 3);
  EXPECT_DOUBLE_EQ(stats[0].std, 1);
  EXPECT_FALSE(stats[0].degenerate);
  EXPECT_TRUE(stats[1].degenerate);
  const auto out = standardize_labels(recs, stats);
  EXPECT_DOUBLE_EQ(out[0].y[0], -1);
  EXPECT_DOUBLE_EQ(out[1].y[0], 1);
  EXPECT_EQ(out[0].y[1], 0);
  EXPECT_EQ(out[1].y[1], 0);
  EXPECT_EQ(out[1].y[2], 99);
}

TEST(Synth, Contract) {
  const auto mols = synth_molecules(2000, 7);
  ASSERT_EQ(mols.size(), 2000u);
  EXPECT_EQ(std::set<std::string>(mols.begin(), mols.end()).size(), 2000u);
  std::vector<std::set<double>> seen(registry().size());
  for (const auto& s : mols) {
    ASSERT_EQ(chem::canonical_smiles(s), s);
    const auto v = compute_all(chem::parse_smiles(s));
    for (std::size_t i = 0; i < v.values.size(); ++i) seen[i].insert(v.values[i]);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_GE(seen[i].size(), 2u) << registry()[i].name;
  EXPECT_EQ(synth_molecules(50, 7), std::vector<std::string>(mols.begin(), mols.begin() + 50));
  EXPECT_NE(synth_molecules(50, 8), std::vector<std::string>(mols.begin(), mols.begin() + 50));
}

TEST(BuildCorpus, RecordsAndManifest) {
  const auto mols = synth_molecules(10, 3);
  const Corpus c = build_mtmtr(mols, 42);
  ASSERT_EQ(c.records.size(), 10u);
  long total = 0;
  for (const auto& r : c.records) {
    EXPECT_GE(r.mask_count(), 5);
    EXPECT_LE(r.mask_count(), 10);
    total += r.mask_count();
    // description names == masked names
    std::vector<std::string> masked;
    for (std::size_t i = 0; i < r.m.size(); ++i) {
      if (r.m[i]) masked.push_back(registry()[i].name);
      else EXPECT_EQ(r.y[i], 0.0);
    }
    EXPECT_EQ(named_properties(r.description), masked);
  }
  long occ = 0;
  for (int o : c.manifest.occurrence) occ += o;
  EXPECT_EQ(occ, total);
  EXPECT_THROW(build_mtmtr({}, 1), EmptyCorpus);
}

TEST(BuildCorpus, ByteIdenticalRebuild) {
  const auto mols = synth_molecules(60, 3);
  const fs::path a = temp_dir("a"), b = temp_dir("b");
  write_corpus(build_mtmtr(mols, 9), a);
  write_corpus(build_mtmtr(mols, 9), b);
  EXPECT_EQ(slurp(a / "corpus.jsonl"), slurp(b / "corpus.jsonl"));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  const Corpus back = read_corpus(a);
  const Corpus orig = build_mtmtr(mols, 9);
  ASSERT_EQ(back.records.size(), orig.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(back.records[i].y, orig.records[i].y);
    EXPECT_EQ(back.records[i].description, orig.records[i].description);
  }
  EXPECT_EQ(back.manifest.splits.train, orig.manifest.splits.train);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(BuildCorpus, StandardizedTrainLabels) {
  const Corpus c = build_mtmtr(synth_molecules(400, 5), 1);
  const auto std_records = standardize_labels(c.records, c.manifest.stats);
  for (std::size_t i = 0; i < registry().size(); ++i) {
    if (c.manifest.stats[i].degenerate) continue;
    double sum = 0, sq = 0;
    int n = 0;
    for (int r : c.manifest.splits.train) {
      if (!std_records[r].m[i]) continue;
      sum += std_records[r].y[i];
      ++n;
    }
    const double mean = sum / n;
    for (int r : c.manifest.splits.train) {
      if (std_records[r].m[i]) sq += (std_records[r].y[i] - mean) * (std_records[r].y[i] - mean);
    }
    EXPECT_NEAR(mean, 0, 1e-6) << registry()[i].name;
    EXPECT_NEAR(std::sqrt(sq / n), 1, 1e-6) << registry()[i].name;
  }
}
