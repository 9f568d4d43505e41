#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "moltailor/probe.h"
#include "moltailor/random.h"

using namespace moltailor;

namespace {

ProbeTask regression_task(int n, std::uint64_t seed) {
  ProbeTask t;
  t.name = "synthetic";
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    t.labels.push_back(rng.normal());
    t.mask.push_back(1);
  }
  t.splits = split_dataset(n, kDefaultSplitRatios, seed);
  return t;
}

Features random_features(int rows, int dim, std::uint64_t seed) {
  Features f{rows, dim, {}};
  Rng rng(seed);
  for (int i = 0; i < rows * dim; ++i) f.values.push_back(rng.normal());
  return f;
}

}  // namespace

TEST(LrGrid, SortedLogUniformInRange) {
  ProbeConfig c;
  const auto g = lr_grid(c);
  ASSERT_EQ(g.size(), 10u);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  for (double lr : g) {
    EXPECT_GE(lr, 1e-5);
    EXPECT_LE(lr, 1e-2);
  }
  EXPECT_EQ(lr_grid(c), g);
  c.search_seed = 9;
  EXPECT_NE(lr_grid(c), g);
}

// 1000 rows, the probe-set size: at 500 the 50-epoch budget of batch-64 Adam
// steps is too short for a unit weight to converge.
TEST(LinearProbe, OracleFeaturesFitExactly) {
  const ProbeTask t = regression_task(1000, 4);
  Features f{1000, 1, t.labels};
  const MetricReport r = linear_probe(f, t, ProbeConfig{});
  EXPECT_EQ(r.metric, "rmse");
  EXPECT_LT(r.mean, 1e-3);
  EXPECT_EQ(r.test_per_seed.size(), 3u);
}

TEST(LinearProbe, RandomFeaturesGiveChanceRocAuc) {
  const int n = 500;
  ProbeTask t;
  t.name = "coin";
  t.kind = TaskKind::kClassification;
  for (int i = 0; i < n; ++i) {
    t.labels.push_back(i % 2);
    t.mask.push_back(1);
  }
  t.splits = split_dataset(n, kDefaultSplitRatios, 2);
  ProbeConfig c;
  c.max_epochs = 10;
  for (std::uint64_t s = 0; s < 3; ++s) {
    c.seed = s;
    const MetricReport r = linear_probe(random_features(n, 64, 100 + s), t, c);
    EXPECT_EQ(r.metric, "roc_auc");
    EXPECT_GE(r.mean, 0.4);
    EXPECT_LE(r.mean, 0.6);
  }
}

TEST(LinearProbe, FixedSeedsReproduce) {
  const ProbeTask t = regression_task(300, 5);
  const Features f = random_features(300, 8, 6);
  ProbeConfig c;
  c.max_epochs = 10;
  const MetricReport a = linear_probe(f, t, c), b = linear_probe(f, t, c);
  EXPECT_EQ(a.test_per_seed, b.test_per_seed);
  EXPECT_EQ(a.val_by_lr, b.val_by_lr);
  EXPECT_EQ(a.chosen_lr, b.chosen_lr);
}

TEST(LinearProbe, RotationInvariantUpToOptimizationNoise) {
  const int n = 1000, d = 6;
  ProbeTask t = regression_task(n, 8);
  const Features f = random_features(n, d, 9);
  // labels linear in the features plus noise
  Rng rng(10);
  Eigen::VectorXd w(d);
  for (int j = 0; j < d; ++j) w(j) = 0.3 * rng.normal();  // reachable within the step budget
  for (int i = 0; i < n; ++i) {
    double y = 0.1 * rng.normal();
    for (int j = 0; j < d; ++j) y += w(j) * f.values[i * d + j];
    t.labels[i] = y;
  }
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d * d; ++i) g.data()[i] = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>> x(f.values.data(), n, d);
  Features rot{n, d, std::vector<double>(f.values.size())};
  Eigen::Map<Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(rot.values.data(), n, d) = x * q;
  const MetricReport a = linear_probe(f, t, ProbeConfig{}), b = linear_probe(rot, t, ProbeConfig{});
  EXPECT_LT(a.mean, 0.12);
  EXPECT_NEAR(a.mean, b.mean, 0.01);
}

TEST(ProbeDataset, ExcludesAndIsDeterministic) {
  const ProbeDataset a = make_probe_dataset(60, 3, {});
  ASSERT_EQ(a.smiles.size(), 60u);
  const std::vector<std::string> taken(a.smiles.begin(), a.smiles.begin() + 20);
  const ProbeDataset b = make_probe_dataset(60, 3, taken);
  ASSERT_EQ(b.smiles.size(), 60u);
  const std::set<std::string> banned(taken.begin(), taken.end());
  for (const auto& s : b.smiles) EXPECT_FALSE(banned.count(s)) << s;
  EXPECT_EQ(make_probe_dataset(60, 3, {}).smiles, a.smiles);
}

TEST(ProbeTasks, DescriptorLabelsStandardizedOnTrain) {
  const ProbeDataset d = make_probe_dataset(80, 4, {});
  const ProbeTask t = descriptor_task(d, "MolWt", "prompt");
  double mean = 0, sq = 0;
  for (int i : t.splits.train) mean += t.labels[i];
  mean /= t.splits.train.size();
  for (int i : t.splits.train) sq += (t.labels[i] - mean) * (t.labels[i] - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq / t.splits.train.size(), 1.0, 1e-12);
  EXPECT_THROW(descriptor_task(d, "NotADescriptor", ""), Error);
  EXPECT_EQ(solubility_proxy_task(d, "x").labels.size(), 80u);
}

TEST(ProbeTasks, CsvWithMasksAndClassification) {
  const auto path = std::filesystem::temp_directory_path() / "moltailor_probe_test.csv";
  {
    std::ofstream out(path);
    out << "smiles,active,toxic,mask_toxic\n";
    for (int i = 0; i < 20; ++i) out << std::string(i % 5 + 1, 'C') << ',' << i % 2 << ',' << (i / 2) % 2 << ',' << (i % 3 != 0) << '\n';
  }
  const ProbeTask t = csv_task(path.string(), "d", 1);
  EXPECT_EQ(t.kind, TaskKind::kClassification);
  EXPECT_EQ(t.columns, 2);
  EXPECT_EQ(t.mask[0 * 2 + 1], 0);
  EXPECT_EQ(t.mask[1 * 2 + 1], 1);
  EXPECT_EQ(csv_smiles(path.string()).size(), 20u);
  std::filesystem::remove(path);
}
