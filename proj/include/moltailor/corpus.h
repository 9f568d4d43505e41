#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "moltailor/descriptors.h"
#include "moltailor/error.h"
#include "moltailor/random.h"

namespace moltailor {

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

// One (molecule, task description, labels) triplet. y holds raw descriptor
// values in registry order, 0 where m is 0.
struct MtmtrRecord {
  std::string smiles;
  std::string description;
  std::vector<double> y;
  std::vector<std::uint8_t> m;
  std::vector<std::string> properties;  // sampled names, in description order
  std::uint64_t seed = 0;               // per-record stream seed

  int mask_count() const;
};

struct LabelStats {
  double mean = 0.0;
  double std = 1.0;
  int count = 0;           // masked observations in the train split
  bool degenerate = false; // std < 1e-9 or fewer than 2 observations
};

struct Splits {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

struct CorpusManifest {
  int record_count = 0;
  std::vector<std::string> descriptor_names;
  std::vector<int> occurrence;  // per descriptor, over all records
  std::vector<LabelStats> stats;
  Splits splits;
  std::uint64_t build_seed = 0;
};

struct Corpus {
  std::vector<MtmtrRecord> records;
  CorpusManifest manifest;
};

struct IngestResult {
  std::vector<std::string> smiles;  // canonical, unique, sorted
  int rejected = 0;
  std::vector<std::string> log;     // one line per rejected input
};

// Reads SMILES-per-line files ('#' comments, first whitespace field only).
// Throws EmptyCorpus when nothing survives and Error on unreadable files.
IngestResult ingest_molecules(const std::vector<std::filesystem::path>& paths);
IngestResult ingest_lines(const std::vector<std::string>& lines);

// Removes molecules whose canonical form appears in `reference`.
std::vector<std::string> dedup_against(const std::vector<std::string>& smiles,
                                       const std::vector<std::string>& reference);

// k ~ U{5..10}, then k distinct names with inclusion probability proportional
// to sampling_weight (randomized systematic sampling). Names come back in a
// random order.
std::vector<std::string> sample_properties(Rng& rng, const std::vector<DescriptorSpec>& registry);

// Inclusion probabilities used by sample_properties for a sample of size k:
// k * w_i / sum(w), with any entry above 1 fixed at 1 and the rest rescaled.
std::vector<double> inclusion_probabilities(const std::vector<double>& weights, int k);

const std::vector<std::string>& framing_sentences();

// Framing sentence followed by one phrase per name, in the given order.
std::string render_description(const std::vector<std::string>& names, Rng& rng);

inline constexpr std::array<double, 3> kDefaultSplitRatios{0.8, 0.1, 0.1};

// Seeded uniform partition of 0..n-1. Val and test sizes are n*ratio rounded
// to nearest; train takes the rest. Throws Error when ratios do not sum to 1.
Splits split_dataset(int n, const std::array<double, 3>& ratios, std::uint64_t seed);

// Masked mean and population std over the train records.
std::vector<LabelStats> label_statistics(const std::vector<MtmtrRecord>& records,
                                         const std::vector<int>& train);

// (y - mean) / std on masked entries; degenerate descriptors become 0.
std::vector<MtmtrRecord> standardize_labels(std::vector<MtmtrRecord> records,
                                            const std::vector<LabelStats>& stats);

// One record per molecule. Record i draws from Rng(derive(seed, i)), so the
// result does not depend on evaluation order.
Corpus build_mtmtr(const std::vector<std::string>& molecules, std::uint64_t seed,
                   const std::array<double, 3>& ratios = kDefaultSplitRatios);

// corpus.jsonl + manifest.json inside `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

// Registry names occurring in `description` as whole words, in registry order.
std::vector<std::string> named_properties(const std::string& description);

}  // namespace moltailor
