#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/data.hpp"
#include "signet/metrics.hpp"
#include "signet/train.hpp"

namespace signet {

// Everything produced by one seeded training run.
struct SeedRun {
  std::uint64_t seed = 0;
  MetricSet metrics;
  ConfusionMatrix confusion;
  LearningCurves curves;
  std::vector<RocPoint> roc;
};

// Multi-seed session result for one model family.
struct RunReport {
  std::string family;
  std::vector<SeedRun> runs;
  MetricAggregate agg;
};

RunReport make_report(const std::string& family, std::vector<SeedRun> runs);

// Serialized forms. All output is deterministic for identical inputs:
// nothing here emits timestamps.
std::string seed_run_json(const SeedRun& run);     // one run, pretty JSON
std::string report_json(const RunReport& report);  // whole session
std::string curves_csv(const LearningCurves& curves);
std::string confusion_csv(const ConfusionMatrix& cm);
std::string roc_csv(const std::vector<RocPoint>& roc);
std::string split_csv(const Split& split);

// Aggregate table, one row per family, columns in report order:
// precision, accuracy, f1, recall, specificity, auc (mean and std each).
std::string aggregate_csv_header();
std::string aggregate_csv_row(const std::string& family, const MetricAggregate& agg);

}  // namespace signet
