#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace signet {

// Binary confusion counts; positive class is label 1.
struct ConfusionMatrix {
  long long tp = 0;
  long long fp = 0;
  long long tn = 0;
  long long fn = 0;

  long long total() const { return tp + fp + tn + fn; }
};

// The six reported scores, all in [0,1]. `degenerate` flags that at least one
// metric hit a zero denominator (or single-class AUC) and was reported as 0
// so that aggregation stays total.
struct MetricSet {
  double precision = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double auc = 0.0;
  bool degenerate = false;
};

// (score, label) pair; score is the predicted probability of the positive class.
using Scored = std::pair<double, int>;

// Confusion matrix at a decision threshold: predict positive iff score > thr,
// so a score exactly at the threshold goes to the negative class.
ConfusionMatrix confusion_at_threshold(const std::vector<Scored>& scored, double threshold = 0.5);

// precision/accuracy/F1/recall/specificity from counts, leaving auc at 0.
// Zero-denominator metrics are reported as 0 with the degenerate flag set.
MetricSet metrics_from_confusion(const ConfusionMatrix& cm);

// Area under the ROC curve via threshold sweep with trapezoids; equal to the
// pairwise form P(s_pos > s_neg) + 0.5 * P(s_pos = s_neg), exactly so on
// integer scores. Throws MetricError unless both classes are present.
double auc_score(const std::vector<Scored>& scored);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// ROC polyline from (1,1) end to (0,0) start, one point per distinct score
// plus the endpoints, ordered by descending threshold.
std::vector<RocPoint> roc_points(const std::vector<Scored>& scored);

// Mean and sample (n-1) standard deviation per metric over a set of runs.
struct MetricAggregate {
  MetricSet mean;
  MetricSet stddev;
  std::size_t runs = 0;
  bool single_run = false;  // n == 1, stddev reported as 0
};

MetricAggregate aggregate(const std::vector<MetricSet>& runs);

}  // namespace signet
