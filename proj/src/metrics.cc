#include "moltailor/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moltailor {

namespace {

struct Scored {
  double score;
  int label;
};

std::vector<Scored> collect(std::span<const double> scores, std::span<const int> labels,
                            std::span<const std::uint8_t> mask) {
  if (scores.size() != labels.size() || (!mask.empty() && mask.size() != scores.size()))
    throw Error("scores, labels and mask must have the same length");
  std::vector<Scored> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (labels[i] != 0 && labels[i] != 1) throw Error("labels must be 0 or 1");
    out.push_back({scores[i], labels[i]});
  }
  return out;
}

template <typename Metric>
MultiMetric column_mean(const LabelMatrix& m, Metric metric, const char* what) {
  MultiMetric r;
  double sum = 0.0;
  std::vector<double> s(m.rows);
  std::vector<int> l(m.rows);
  std::vector<std::uint8_t> k(m.mask.empty() ? 0 : m.rows);
  for (int c = 0; c < m.cols; ++c) {
    for (int i = 0; i < m.rows; ++i) {
      s[i] = m.scores[i * m.cols + c];
      l[i] = m.labels[i * m.cols + c];
      if (!k.empty()) k[i] = m.mask[i * m.cols + c];
    }
    try {
      sum += metric(s, l, k);
      r.used_columns.push_back(c);
    } catch (const DegenerateLabels& e) {
      r.warnings.push_back("column " + std::to_string(c) + " excluded: " + e.what());
    } catch (const NoPositives& e) {
      r.warnings.push_back("column " + std::to_string(c) + " excluded: " + e.what());
    }
  }
  if (r.used_columns.empty()) throw DegenerateLabels(std::string("no usable column for ") + what);
  r.value = sum / static_cast<double>(r.used_columns.size());
  return r;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels, std::span<const std::uint8_t> mask) {
  auto v = collect(scores, labels, mask);
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // average ranks over tie groups; sum of positive ranks gives Mann-Whitney U
  double pos_rank = 0.0;
  long pos = 0, neg = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based mean rank of [i, j)
    for (std::size_t t = i; t < j; ++t) {
      if (v[t].label) pos_rank += rank, ++pos;
      else ++neg;
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw DegenerateLabels("ROC-AUC needs both classes");
  const double u = pos_rank - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(std::span<const double> scores, std::span<const int> labels,
                         std::span<const std::uint8_t> mask) {
  auto v = collect(scores, labels, mask);
  const long total_pos = std::count_if(v.begin(), v.end(), [](const Scored& s) { return s.label == 1; });
  if (total_pos == 0) throw NoPositives("average precision needs at least one positive");
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  double ap = 0.0, prev_recall = 0.0;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) {
      if (v[j].label) ++tp;
      else ++fp;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += precision * (recall - prev_recall);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MultiMetric roc_auc_multi(const LabelMatrix& m) {
  return column_mean(m, [](auto s, auto l, auto k) { return roc_auc(s, l, k); }, "ROC-AUC");
}

MultiMetric delta_ap(const LabelMatrix& m) {
  return column_mean(
      m,
      [](std::span<const double> s, std::span<const int> l, std::span<const std::uint8_t> k) {
        const double ap = average_precision(s, l, k);
        double pos = 0, n = 0;
        for (std::size_t i = 0; i < l.size(); ++i) {
          if (!k.empty() && !k[i]) continue;
          pos += l[i];
          n += 1;
        }
        return ap - pos / n;
      },
      "delta AP");
}

double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw Error("rmse needs equal, non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw Error("mae needs equal, non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

std::vector<double> normalized_rmse(std::span<const double> rmses) {
  if (rmses.size() < 2) throw Error("normalized RMSE needs at least two methods");
  const double n = static_cast<double>(rmses.size());
  const double mean = std::accumulate(rmses.begin(), rmses.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rmses) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out;
  for (double r : rmses) out.push_back(sd > 0 ? (r - mean) / sd : 0.0);
  return out;
}

}  // namespace moltailor
