#include "signet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "signet/error.hpp"

namespace signet {

ConfusionMatrix confusion_at_threshold(const std::vector<Scored>& scored, double threshold) {
  ConfusionMatrix cm;
  for (const auto& [score, label] : scored) {
    const bool positive = score > threshold;
    if (label == 1) {
      positive ? ++cm.tp : ++cm.fn;
    } else {
      positive ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

namespace {

double safe_ratio(long long num, long long den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricSet metrics_from_confusion(const ConfusionMatrix& cm) {
  MetricSet m;
  if (cm.total() == 0) throw MetricError("metrics of an empty confusion matrix");
  m.precision = safe_ratio(cm.tp, cm.tp + cm.fp, m.degenerate);
  m.recall = safe_ratio(cm.tp, cm.tp + cm.fn, m.degenerate);
  m.specificity = safe_ratio(cm.tn, cm.tn + cm.fp, m.degenerate);
  m.accuracy = safe_ratio(cm.tp + cm.tn, cm.total(), m.degenerate);
  const double pr = m.precision + m.recall;
  if (pr > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / pr;
  } else {
    m.f1 = 0.0;
    m.degenerate = true;
  }
  return m;
}

namespace {

// Scores grouped by value, descending; counts per group.
struct Group {
  double score;
  long long pos = 0;
  long long neg = 0;
};

std::vector<Group> group_by_score(const std::vector<Scored>& scored) {
  std::vector<Scored> sorted = scored;
  std::sort(sorted.begin(), sorted.end(),
            [](const Scored& a, const Scored& b) { return a.first > b.first; });
  std::vector<Group> groups;
  for (const auto& [score, label] : sorted) {
    if (groups.empty() || groups.back().score != score) groups.push_back({score, 0, 0});
    (label == 1 ? groups.back().pos : groups.back().neg)++;
  }
  return groups;
}

}  // namespace

double auc_score(const std::vector<Scored>& scored) {
  long long pos = 0, neg = 0;
  for (const auto& [score, label] : scored) (label == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) throw MetricError("AUC needs both classes present");
  // Sweeping thresholds from high to low, each group contributes a trapezoid
  // with Delta FP = group negatives; twice its area in count units is
  // neg * (2*TP_above + pos_in_group), which is exactly twice the concordant
  // pairs plus the ties of this group.
  long long twice_area = 0;
  long long tp_above = 0;
  for (const Group& g : group_by_score(scored)) {
    twice_area += g.neg * (2 * tp_above + g.pos);
    tp_above += g.pos;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_points(const std::vector<Scored>& scored) {
  long long pos = 0, neg = 0;
  for (const auto& [score, label] : scored) (label == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) throw MetricError("ROC needs both classes present");
  std::vector<RocPoint> pts;
  pts.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long long tp = 0, fp = 0;
  for (const Group& g : group_by_score(scored)) {
    tp += g.pos;
    fp += g.neg;
    pts.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                   static_cast<double>(tp) / static_cast<double>(pos), g.score});
  }
  return pts;
}

MetricAggregate aggregate(const std::vector<MetricSet>& runs) {
  if (runs.empty()) throw ContractError("aggregate of zero runs");
  MetricAggregate agg;
  agg.runs = runs.size();
  agg.single_run = runs.size() == 1;

  auto fields = [](MetricSet& m) {
    return std::array<double*, 6>{&m.precision, &m.accuracy, &m.f1,
                                  &m.recall,    &m.specificity, &m.auc};
  };
  auto cfields = [](const MetricSet& m) {
    return std::array<const double*, 6>{&m.precision, &m.accuracy, &m.f1,
                                        &m.recall,    &m.specificity, &m.auc};
  };

  auto mean_out = fields(agg.mean);
  for (const MetricSet& r : runs) {
    auto in = cfields(r);
    for (std::size_t i = 0; i < in.size(); ++i) *mean_out[i] += *in[i];
    agg.mean.degenerate = agg.mean.degenerate || r.degenerate;
  }
  const double n = static_cast<double>(runs.size());
  for (double* f : mean_out) *f /= n;

  auto std_out = fields(agg.stddev);
  if (runs.size() > 1) {
    for (const MetricSet& r : runs) {
      auto in = cfields(r);
      auto mu = cfields(agg.mean);
      for (std::size_t i = 0; i < in.size(); ++i) {
        const double d = *in[i] - *mu[i];
        *std_out[i] += d * d;
      }
    }
    for (double* f : std_out) *f = std::sqrt(*f / (n - 1.0));
    // identical values must report exactly zero spread, untouched by the
    // rounding of the mean
    auto first = cfields(runs.front());
    for (std::size_t i = 0; i < first.size(); ++i) {
      bool all_equal = true;
      for (const MetricSet& r : runs) all_equal = all_equal && *cfields(r)[i] == *first[i];
      if (all_equal) *std_out[i] = 0.0;
    }
  }
  return agg;
}

}  // namespace signet
