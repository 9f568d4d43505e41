#include "moltailor/probe.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "moltailor/chem/canonical.h"
#include "moltailor/chem/smiles.h"
#include "moltailor/metrics.h"
#include "moltailor/synth.h"

namespace moltailor {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void standardize_on_train(ProbeTask& t) {
  for (int c = 0; c < t.columns; ++c) {
    double sum = 0, sq = 0;
    int n = 0;
    for (int i : t.splits.train)
      if (t.mask[i * t.columns + c]) sum += t.labels[i * t.columns + c], ++n;
    if (n == 0) continue;
    const double mean = sum / n;
    for (int i : t.splits.train)
      if (t.mask[i * t.columns + c]) sq += std::pow(t.labels[i * t.columns + c] - mean, 2);
    double sd = std::sqrt(sq / n);
    if (sd < 1e-9) sd = 1.0;
    const int rows = static_cast<int>(t.labels.size()) / t.columns;
    for (int i = 0; i < rows; ++i) {
      double& y = t.labels[i * t.columns + c];
      y = t.mask[i * t.columns + c] ? (y - mean) / sd : 0.0;
    }
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": empty file");
  csv.header = split_csv(line);
  if (csv.header.empty() || csv.header[0] != "smiles") throw Error(path + ": first column must be 'smiles'");
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto row = split_csv(line);
    row.resize(csv.header.size());
    csv.rows.push_back(std::move(row));
  }
  if (csv.rows.empty()) throw Error(path + ": no rows");
  return csv;
}

double split_metric(const Mat& pred, const ProbeTask& task, const std::vector<int>& idx) {
  const int T = task.columns;
  if (task.kind == TaskKind::kRegression) {
    double s = 0;
    int n = 0;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < T; ++c)
        if (task.mask[idx[r] * T + c]) s += std::pow(pred(r, c) - task.labels[idx[r] * T + c], 2), ++n;
    if (n == 0) throw Error(task.name + ": split has no labels");
    return std::sqrt(s / n);
  }
  LabelMatrix m{static_cast<int>(idx.size()), T, {}, {}, {}};
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < T; ++c) {
      m.scores.push_back(pred(r, c));
      m.labels.push_back(static_cast<int>(task.labels[idx[r] * T + c]));
      m.mask.push_back(task.mask[idx[r] * T + c]);
    }
  return roc_auc_multi(m).value;
}

struct RunResult {
  double val = 0.0, test = 0.0;
};

RunResult train_linear(const Mat& X, const ProbeTask& task, const ProbeConfig& cfg, double lr, std::uint64_t seed) {
  const int d = static_cast<int>(X.cols()), T = task.columns;
  const bool higher = task.kind == TaskKind::kClassification;
  Rng rng(seed);
  Mat W(d, T);
  for (int i = 0; i < d; ++i)
    for (int c = 0; c < T; ++c) W(i, c) = rng.normal(0.0, 0.02);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(T);
  Mat mW = Mat::Zero(d, T), vW = Mat::Zero(d, T);
  Eigen::RowVectorXd mb = Eigen::RowVectorXd::Zero(T), vb = Eigen::RowVectorXd::Zero(T);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  auto rows_of = [&](const std::vector<int>& idx) {
    Mat out(idx.size(), d);
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = X.row(idx[r]);
    return out;
  };
  const Mat Xval = rows_of(task.splits.val), Xtest = rows_of(task.splits.test);
  auto predict = [&](const Mat& A) -> Mat { return (A * W).rowwise() + b; };

  const long per_epoch = (static_cast<long>(task.splits.train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long total = per_epoch * cfg.max_epochs;
  long step = 0;
  double best_val = higher ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  Mat best_W = W;
  Eigen::RowVectorXd best_b = b;
  int stale = 0;
  std::vector<int> order = task.splits.train;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<int>(order));
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::vector<int> idx(order.begin() + s, order.begin() + std::min(order.size(), s + cfg.batch_size));
      const Mat Xb = rows_of(idx);
      Mat G = predict(Xb);
      int count = 0;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < T; ++c) {
          const std::size_t k = static_cast<std::size_t>(idx[r]) * T + c;
          if (!task.mask[k]) {
            G(r, c) = 0.0;
            continue;
          }
          ++count;
          G(r, c) = task.kind == TaskKind::kRegression ? 2.0 * (G(r, c) - task.labels[k])
                                                       : 1.0 / (1.0 + std::exp(-G(r, c))) - task.labels[k];
        }
      if (count == 0) continue;
      G /= count;
      const Mat gW = Xb.transpose() * G;
      const Eigen::RowVectorXd gb = G.colwise().sum();
      ++step;
      const double rate = lr * static_cast<double>(total - step + 1) / static_cast<double>(total);
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step)), c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      mW = b1 * mW + (1 - b1) * gW;
      vW = b2 * vW + (1 - b2) * gW.cwiseProduct(gW);
      mb = b1 * mb + (1 - b1) * gb;
      vb = b2 * vb + (1 - b2) * gb.cwiseProduct(gb);
      W.array() -= rate * (mW.array() / c1) / ((vW.array() / c2).sqrt() + eps);
      b.array() -= rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
    const double val = split_metric(predict(Xval), task, task.splits.val);
    if (!std::isfinite(val)) break;
    if (higher ? val > best_val : val < best_val) {
      best_val = val;
      best_W = W;
      best_b = b;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  W = best_W;
  b = best_b;
  return {best_val, split_metric(predict(Xtest), task, task.splits.test)};
}

}  // namespace

ProbeDataset make_probe_dataset(int count, std::uint64_t seed, const std::vector<std::string>& exclude) {
  if (count < 10) throw Error("probe dataset needs at least 10 molecules");
  std::vector<std::string> pool = dedup_against(synth_molecules(count + count / 2 + 50, seed), exclude);
  if (static_cast<int>(pool.size()) < count) throw Error("not enough held-out molecules for the probe dataset");
  pool.resize(count);
  ProbeDataset d;
  d.smiles = pool;
  for (const auto& s : pool) d.descriptors.push_back(compute_all(chem::parse_smiles(s)).values);
  d.splits = split_dataset(count, kDefaultSplitRatios, Rng::derive(seed, 0xFFFFFFFF00000002ULL));
  return d;
}

ProbeTask descriptor_task(const ProbeDataset& data, const std::string& descriptor, const std::string& description) {
  const int k = descriptor_index(descriptor);
  ProbeTask t;
  t.name = descriptor;
  t.splits = data.splits;
  t.description = description;
  for (const auto& v : data.descriptors) {
    t.labels.push_back(v[k]);
    t.mask.push_back(1);
  }
  standardize_on_train(t);
  return t;
}

ProbeTask solubility_proxy_task(const ProbeDataset& data, const std::string& description) {
  const int mw = descriptor_index("MolWt"), rb = descriptor_index("NumRotatableBonds"),
            ar = descriptor_index("NumAromaticAtoms"), ha = descriptor_index("HeavyAtomCount"),
            hd = descriptor_index("NumHDonors"), hc = descriptor_index("NumHAcceptors"),
            lc = descriptor_index("LongestCarbonChain");
  ProbeTask t;
  t.name = "SolubilityProxy";
  t.splits = data.splits;
  t.description = description;
  for (const auto& v : data.descriptors) {
    const double aromatic_fraction = v[ha] > 0 ? v[ar] / v[ha] : 0.0;
    t.labels.push_back(0.16 - 0.0062 * v[mw] + 0.066 * v[rb] - 0.74 * aromatic_fraction + 0.3 * v[hd] + 0.2 * v[hc] -
                       0.1 * v[lc]);
    t.mask.push_back(1);
  }
  standardize_on_train(t);
  return t;
}

std::vector<std::string> csv_smiles(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& row : read_csv(path).rows) out.push_back(row[0]);
  return out;
}

ProbeTask csv_task(const std::string& path, const std::string& description, std::uint64_t split_seed) {
  const Csv csv = read_csv(path);
  std::vector<int> label_cols;
  std::vector<int> mask_cols;
  for (std::size_t c = 1; c < csv.header.size(); ++c) {
    if (csv.header[c].rfind("mask_", 0) == 0) continue;
    label_cols.push_back(static_cast<int>(c));
    const auto it = std::find(csv.header.begin(), csv.header.end(), "mask_" + csv.header[c]);
    mask_cols.push_back(it == csv.header.end() ? -1 : static_cast<int>(it - csv.header.begin()));
  }
  if (label_cols.empty()) throw Error(path + ": no label columns");
  ProbeTask t;
  t.name = std::filesystem::path(path).stem().string();
  t.columns = static_cast<int>(label_cols.size());
  t.description = description;
  bool binary = true;
  for (const auto& row : csv.rows) {
    for (std::size_t j = 0; j < label_cols.size(); ++j) {
      const std::string& cell = row[label_cols[j]];
      bool valid = !cell.empty();
      if (mask_cols[j] >= 0) valid = valid && row[mask_cols[j]] == "1";
      double v = 0.0;
      if (valid) {
        try {
          v = std::stod(cell);
        } catch (const std::exception&) {
          throw Error(path + ": bad label '" + cell + "'");
        }
        binary = binary && (v == 0.0 || v == 1.0);
      }
      t.labels.push_back(v);
      t.mask.push_back(valid);
    }
  }
  t.kind = binary ? TaskKind::kClassification : TaskKind::kRegression;
  t.splits = split_dataset(static_cast<int>(csv.rows.size()), kDefaultSplitRatios, split_seed);
  if (t.kind == TaskKind::kRegression) standardize_on_train(t);
  return t;
}

Features extract_features(const Model& model, const std::vector<std::string>& smiles, const std::string& description,
                          int batch_size) {
  NoGradGuard guard;
  Features f;
  f.rows = static_cast<int>(smiles.size());
  f.dim = model.config().rep_dim();
  const bool text = model.config().architecture != Architecture::kMoleculeOnly;
  for (std::size_t s = 0; s < smiles.size(); s += batch_size) {
    const std::vector<std::string> part(smiles.begin() + s, smiles.begin() + std::min(smiles.size(), s + batch_size));
    const std::vector<std::string> texts(text ? part.size() : 0, description);
    const Tensor z = model.represent(model.batch(part, texts));
    f.values.insert(f.values.end(), z.data().begin(), z.data().end());
  }
  return f;
}

void ProbeConfig::validate() const {
  if (lr_trials < 1 || seeds < 1 || max_epochs < 1 || patience < 1 || batch_size < 1)
    throw Error("invalid probe config: counts must be positive");
  if (!(lr_min > 0 && lr_max >= lr_min)) throw Error("invalid probe config: need 0 < lr_min <= lr_max");
}

std::vector<double> lr_grid(const ProbeConfig& cfg) {
  Rng rng(cfg.search_seed);
  std::vector<double> lrs;
  for (int i = 0; i < cfg.lr_trials; ++i)
    lrs.push_back(std::exp(rng.uniform(std::log(cfg.lr_min), std::log(cfg.lr_max))));
  std::sort(lrs.begin(), lrs.end());
  return lrs;
}

MetricReport linear_probe(const Features& features, const ProbeTask& task, const ProbeConfig& cfg) {
  cfg.validate();
  if (features.rows * task.columns != static_cast<int>(task.labels.size()))
    throw ShapeMismatch("features and task labels have different row counts");
  if (task.splits.train.empty() || task.splits.val.empty() || task.splits.test.empty())
    throw Error(task.name + ": probe needs non-empty train, val and test splits");
  Mat X = Eigen::Map<const Mat>(features.values.data(), features.rows, features.dim);
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(features.dim);
  for (int i : task.splits.train) mean += X.row(i);
  mean /= static_cast<double>(task.splits.train.size());
  X.rowwise() -= mean;

  MetricReport r;
  r.task = task.name;
  r.higher_is_better = task.kind == TaskKind::kClassification;
  r.metric = r.higher_is_better ? "roc_auc" : "rmse";
  r.lrs = lr_grid(cfg);
  std::vector<std::vector<double>> tests;
  for (std::size_t li = 0; li < r.lrs.size(); ++li) {
    double val = 0.0;
    std::vector<double> test;
    for (int s = 0; s < cfg.seeds; ++s) {
      const RunResult run = train_linear(X, task, cfg, r.lrs[li], Rng::derive(cfg.seed, li * 1000 + s));
      val += run.val / cfg.seeds;
      test.push_back(run.test);
    }
    r.val_by_lr.push_back(val);
    tests.push_back(test);
  }
  std::size_t best = 0;
  for (std::size_t li = 1; li < r.lrs.size(); ++li) {
    const bool better = r.higher_is_better ? r.val_by_lr[li] > r.val_by_lr[best] : r.val_by_lr[li] < r.val_by_lr[best];
    if (better) best = li;
  }
  r.chosen_lr = r.lrs[best];
  r.test_per_seed = tests[best];
  r.mean = std::accumulate(r.test_per_seed.begin(), r.test_per_seed.end(), 0.0) / cfg.seeds;
  double var = 0.0;
  for (double v : r.test_per_seed) var += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(var / cfg.seeds);
  return r;
}

}  // namespace moltailor
