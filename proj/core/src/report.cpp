#include "signet/report.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

namespace signet {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

json metrics_json(const MetricSet& m) {
  return {{"precision", m.precision},   {"accuracy", m.accuracy}, {"f1", m.f1},
          {"recall", m.recall},         {"specificity", m.specificity},
          {"auc", m.auc},               {"degenerate", m.degenerate}};
}

json confusion_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

json curves_json(const LearningCurves& curves) {
  json epochs = json::array();
  for (const EpochStats& e : curves.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"train_acc", e.train_accuracy},
                      {"val_acc", e.val_accuracy}});
  }
  return {{"epochs", epochs},
          {"best_epoch", curves.best_epoch},
          {"early_stopped", curves.early_stopped}};
}

json run_json_obj(const SeedRun& run) {
  json roc = json::array();
  for (const RocPoint& p : run.roc) roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
  return {{"seed", run.seed},
          {"metrics", metrics_json(run.metrics)},
          {"confusion", confusion_json(run.confusion)},
          {"curves", curves_json(run.curves)},
          {"roc", roc}};
}

}  // namespace

RunReport make_report(const std::string& family, std::vector<SeedRun> runs) {
  RunReport report;
  report.family = family;
  report.runs = std::move(runs);
  std::vector<MetricSet> sets;
  sets.reserve(report.runs.size());
  for (const SeedRun& r : report.runs) sets.push_back(r.metrics);
  report.agg = aggregate(sets);
  return report;
}

std::string seed_run_json(const SeedRun& run) { return run_json_obj(run).dump(2) + "\n"; }

std::string report_json(const RunReport& report) {
  json j;
  j["family"] = report.family;
  j["runs"] = json::array();
  for (const SeedRun& r : report.runs) j["runs"].push_back(run_json_obj(r));
  j["aggregate"] = {{"mean", metrics_json(report.agg.mean)},
                    {"std", metrics_json(report.agg.stddev)},
                    {"runs", report.agg.runs},
                    {"single_run", report.agg.single_run}};
  return j.dump(2) + "\n";
}

std::string curves_csv(const LearningCurves& curves) {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (const EpochStats& e : curves.epochs) {
    out += std::to_string(e.epoch) + ',' + fmt(e.train_loss) + ',' + fmt(e.val_loss) + ',' +
           fmt(e.train_accuracy) + ',' + fmt(e.val_accuracy) + '\n';
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  return "tp,fp,tn,fn\n" + std::to_string(cm.tp) + ',' + std::to_string(cm.fp) + ',' +
         std::to_string(cm.tn) + ',' + std::to_string(cm.fn) + '\n';
}

std::string roc_csv(const std::vector<RocPoint>& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const RocPoint& p : roc) {
    out += fmt(p.fpr) + ',' + fmt(p.tpr) + ',' + fmt(p.threshold) + '\n';
  }
  return out;
}

std::string split_csv(const Split& split) {
  std::string out = "index,role\n";
  auto emit = [&out](const std::vector<std::size_t>& idx, const char* role) {
    for (std::size_t i : idx) out += std::to_string(i) + ',' + role + '\n';
  };
  emit(split.train, "train");
  emit(split.validation, "validation");
  emit(split.test, "test");
  return out;
}

std::string aggregate_csv_header() {
  return "family,seeds,precision_mean,precision_std,accuracy_mean,accuracy_std,f1_mean,f1_std,"
         "recall_mean,recall_std,specificity_mean,specificity_std,auc_mean,auc_std\n";
}

std::string aggregate_csv_row(const std::string& family, const MetricAggregate& agg) {
  const MetricSet& m = agg.mean;
  const MetricSet& s = agg.stddev;
  std::string out = family + ',' + std::to_string(agg.runs);
  const double cols[12] = {m.precision, s.precision, m.accuracy,    s.accuracy,
                           m.f1,        s.f1,        m.recall,      s.recall,
                           m.specificity, s.specificity, m.auc,     s.auc};
  for (double v : cols) out += ',' + fmt(v);
  out += '\n';
  return out;
}

}  // namespace signet
