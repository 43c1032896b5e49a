#include "session.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "signet/checkpoint.hpp"
#include "signet/data.hpp"
#include "signet/error.hpp"
#include "signet/report.hpp"

namespace signet::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

std::vector<std::uint64_t> SessionConfig::resolved_seeds() const {
  if (!seed_list.empty()) return seed_list;
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < seeds; ++i) out.push_back(seed_base + i);
  return out;
}

void SessionConfig::validate() const {
  if (task != "depression" && task != "responder" && task != "custom") {
    throw ConfigError("task must be depression, responder or custom");
  }
  if (families.empty()) throw ConfigError("at least one model family required");
  for (const std::string& f : families) family_from_string(f);  // throws on unknown
  if (resolved_seeds().empty()) throw ConfigError("at least one seed required");
  if (out.empty()) throw ConfigError("output directory required");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test fraction must be in (0,1)");
  }
  if (window_length == 0) throw ConfigError("window length must be positive");
  if (manifest.empty() && (per_class == 0 || channels == 0 || samples == 0)) {
    throw ConfigError("synthetic spec counts must be positive");
  }
  train.validate();
}

void apply_config_json(SessionConfig& cfg, const std::string& text, const std::string& source) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("config file '" + source + "' is not a JSON object");
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "task") {
        cfg.task = value.get<std::string>();
      } else if (key == "family") {
        cfg.families.clear();
        if (value.is_string()) {
          cfg.families.push_back(value.get<std::string>());
        } else {
          cfg.families = value.get<std::vector<std::string>>();
        }
      } else if (key == "manifest") {
        cfg.manifest = value.get<std::string>();
      } else if (key == "per_class") {
        cfg.per_class = value.get<std::size_t>();
      } else if (key == "channels") {
        cfg.channels = value.get<std::size_t>();
      } else if (key == "samples") {
        cfg.samples = value.get<std::size_t>();
      } else if (key == "separation") {
        cfg.separation = value.get<double>();
      } else if (key == "sampling_hz") {
        cfg.sampling_hz = value.get<double>();
      } else if (key == "data_seed") {
        cfg.data_seed = value.get<std::uint64_t>();
      } else if (key == "window_length") {
        cfg.window_length = value.get<std::size_t>();
      } else if (key == "offset") {
        cfg.offset = value.get<std::size_t>();
      } else if (key == "segments") {
        cfg.segments = value.get<std::size_t>();
      } else if (key == "d_model") {
        cfg.d_model = value.get<std::size_t>();
      } else if (key == "heads") {
        cfg.heads = value.get<std::size_t>();
      } else if (key == "blocks") {
        cfg.blocks = value.get<std::size_t>();
      } else if (key == "ffn_width") {
        cfg.ffn_width = value.get<std::size_t>();
      } else if (key == "dropout") {
        cfg.dropout = value.get<double>();
      } else if (key == "residual") {
        cfg.residual = value.get<bool>();
      } else if (key == "layer_norm") {
        cfg.layer_norm = value.get<bool>();
      } else if (key == "forget_bias_one") {
        cfg.forget_bias_one = value.get<bool>();
      } else if (key == "epochs") {
        cfg.train.epochs = value.get<int>();
      } else if (key == "batch_size") {
        cfg.train.batch_size = value.get<int>();
      } else if (key == "patience") {
        cfg.train.patience = value.get<int>();
      } else if (key == "learning_rate") {
        cfg.train.learning_rate = value.get<double>();
      } else if (key == "beta1") {
        cfg.train.beta1 = value.get<double>();
      } else if (key == "beta2") {
        cfg.train.beta2 = value.get<double>();
      } else if (key == "epsilon") {
        cfg.train.epsilon = value.get<double>();
      } else if (key == "val_fraction") {
        cfg.train.val_fraction = value.get<double>();
      } else if (key == "test_fraction") {
        cfg.test_fraction = value.get<double>();
      } else if (key == "split_seed") {
        cfg.split_seed = value.get<std::uint64_t>();
      } else if (key == "subject_split") {
        cfg.subject_split = value.get<bool>();
      } else if (key == "seeds") {
        cfg.seeds = value.get<std::size_t>();
      } else if (key == "seed_base") {
        cfg.seed_base = value.get<std::uint64_t>();
      } else if (key == "seed_list") {
        cfg.seed_list = value.get<std::vector<std::uint64_t>>();
      } else if (key == "out") {
        cfg.out = value.get<std::string>();
      } else if (key == "jobs") {
        cfg.jobs = value.get<std::size_t>();
      } else {
        throw ConfigError("unknown config key '" + key + "' in '" + source + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + source + "': " + e.what());
  }
}

std::string session_config_json(const SessionConfig& cfg) {
  json j;
  j["task"] = cfg.task;
  j["family"] = cfg.families;
  j["manifest"] = cfg.manifest;
  j["per_class"] = cfg.per_class;
  j["channels"] = cfg.channels;
  j["samples"] = cfg.samples;
  j["separation"] = cfg.separation;
  j["sampling_hz"] = cfg.sampling_hz;
  j["data_seed"] = cfg.data_seed;
  j["window_length"] = cfg.window_length;
  j["offset"] = cfg.offset;
  auto put_opt = [&j](const char* key, const auto& opt) {
    if (opt.has_value()) j[key] = *opt;
  };
  put_opt("segments", cfg.segments);
  put_opt("d_model", cfg.d_model);
  put_opt("heads", cfg.heads);
  put_opt("blocks", cfg.blocks);
  put_opt("ffn_width", cfg.ffn_width);
  put_opt("dropout", cfg.dropout);
  put_opt("residual", cfg.residual);
  put_opt("layer_norm", cfg.layer_norm);
  put_opt("forget_bias_one", cfg.forget_bias_one);
  j["epochs"] = cfg.train.epochs;
  j["batch_size"] = cfg.train.batch_size;
  j["patience"] = cfg.train.patience;
  j["learning_rate"] = cfg.train.learning_rate;
  j["beta1"] = cfg.train.beta1;
  j["beta2"] = cfg.train.beta2;
  j["epsilon"] = cfg.train.epsilon;
  j["val_fraction"] = cfg.train.val_fraction;
  j["test_fraction"] = cfg.test_fraction;
  j["split_seed"] = cfg.split_seed;
  j["subject_split"] = cfg.subject_split;
  j["seeds"] = cfg.resolved_seeds();
  j["out"] = cfg.out;
  j["jobs"] = cfg.jobs;
  return j.dump(2) + "\n";
}

ModelConfig resolve_model_config(const SessionConfig& cfg, ModelFamily family) {
  ModelConfig mc = shipped_config(family);
  bool structural = cfg.window_length != mc.window_length;
  mc.window_length = cfg.window_length;
  auto apply = [&structural](auto& field, const auto& opt) {
    if (opt.has_value() && *opt != field) {
      field = *opt;
      structural = true;
    }
  };
  apply(mc.segments, cfg.segments);
  apply(mc.d_model, cfg.d_model);
  apply(mc.heads, cfg.heads);
  apply(mc.blocks, cfg.blocks);
  apply(mc.ffn_width, cfg.ffn_width);
  apply(mc.layer_norm, cfg.layer_norm);  // layer norm carries parameters
  if (cfg.dropout.has_value()) mc.dropout = *cfg.dropout;
  if (cfg.residual.has_value()) mc.residual = *cfg.residual;
  if (cfg.forget_bias_one.has_value()) mc.forget_bias_one = *cfg.forget_bias_one;
  if (structural) mc.budget_target = 0;  // overridden architectures are untagged
  return mc;
}

namespace {

struct RunJob {
  std::size_t family_index;
  std::size_t seed_index;
};

SeedRun execute_run(const SessionConfig& cfg, const WindowDataset& dataset, const Split& split,
                    ModelFamily family, std::uint64_t seed, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  Model model(resolve_model_config(cfg, family), seed);
  TrainResult tr = train(model, dataset, split, cfg.train, seed);
  EvalResult ev = evaluate(model, dataset, split.test);

  SeedRun run;
  run.seed = seed;
  run.metrics = ev.metrics;
  run.confusion = ev.confusion;
  run.curves = tr.curves;
  run.roc = ev.roc;

  write_text(run_dir / "report.json", seed_run_json(run));
  write_text(run_dir / "curves.csv", curves_csv(tr.curves));
  write_text(run_dir / "confusion.csv", confusion_csv(ev.confusion));
  write_text(run_dir / "roc.csv", roc_csv(ev.roc));
  Split full = tr.split;
  full.test = split.test;
  write_text(run_dir / "split.csv", split_csv(full));
  save_checkpoint(model, run_dir / "model.ckpt");
  write_text(run_dir / "model.manifest.txt", param_manifest(model));
  return run;
}

}  // namespace

void run_session(const SessionConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::system_clock::now();
  const auto clock_start = std::chrono::steady_clock::now();

  std::vector<Recording> recordings;
  if (!cfg.manifest.empty()) {
    recordings = load_recordings(cfg.manifest);
  } else {
    SynthSpec spec;
    spec.per_class = cfg.per_class;
    spec.channels = cfg.channels;
    spec.samples = cfg.samples;
    spec.separation = cfg.separation;
    spec.sampling_hz = cfg.sampling_hz;
    recordings = synth_generate(spec, cfg.data_seed);
  }
  const WindowDataset dataset = extract_windows(recordings, cfg.window_length, cfg.offset);
  const Split split = cfg.subject_split
                          ? stratified_split_subjects(dataset, cfg.test_fraction, cfg.split_seed)
                          : stratified_split(dataset, cfg.test_fraction, cfg.split_seed);

  const std::vector<std::uint64_t> seeds = cfg.resolved_seeds();
  std::vector<ModelFamily> families;
  for (const std::string& f : cfg.families) families.push_back(family_from_string(f));

  // fail fast on invalid model configs before any training starts
  for (ModelFamily family : families) resolve_model_config(cfg, family).validate();

  const fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);
  write_text(out_dir / "config.json", session_config_json(cfg));

  std::vector<RunJob> jobs;
  for (std::size_t f = 0; f < families.size(); ++f) {
    for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({f, s});
  }
  std::vector<std::vector<SeedRun>> runs(families.size(), std::vector<SeedRun>(seeds.size()));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size() || failed.load()) return;
      const RunJob& job = jobs[i];
      const ModelFamily family = families[job.family_index];
      const std::uint64_t seed = seeds[job.seed_index];
      const fs::path run_dir = out_dir / family_name(family) / std::to_string(seed);
      try {
        runs[job.family_index][job.seed_index] =
            execute_run(cfg, dataset, split, family, seed, run_dir);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) {
          first_error = std::string(family_name(family)) + " seed " + std::to_string(seed) + ": " +
                        e.what();
        }
        return;
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(cfg.jobs, jobs.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw Error(first_error);

  std::string table = aggregate_csv_header();
  for (std::size_t f = 0; f < families.size(); ++f) {
    RunReport report = make_report(family_name(families[f]), runs[f]);
    write_text(out_dir / report.family / "report.json", report_json(report));
    table += aggregate_csv_row(report.family, report.agg);
    const MetricSet& m = report.agg.mean;
    const MetricSet& s = report.agg.stddev;
    char line[256];
    std::snprintf(line, sizeof line,
                  "%s: precision %.2f%% +- %.4f, accuracy %.2f%% +- %.4f, f1 %.2f%% +- %.4f, "
                  "recall %.2f%% +- %.4f, specificity %.2f%% +- %.4f, auc %.2f%% +- %.4f "
                  "(over %zu seeds)\n",
                  report.family.c_str(), 100.0 * m.precision, s.precision, 100.0 * m.accuracy,
                  s.accuracy, 100.0 * m.f1, s.f1, 100.0 * m.recall, s.recall,
                  100.0 * m.specificity, s.specificity, 100.0 * m.auc, s.auc, report.agg.runs);
    std::cout << line;
  }
  write_text(out_dir / "aggregate.csv", table);

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  const auto start_time = std::chrono::system_clock::to_time_t(t_start);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&start_time));
  json meta;
  meta["started_utc"] = stamp;
  meta["elapsed_seconds"] = elapsed;
  meta["runs"] = jobs.size();
  write_text(out_dir / "run_meta.json", meta.dump(2) + "\n");

  std::cout << "wrote " << jobs.size() << " runs under " << out_dir.string() << "\n";
}

}  // namespace signet::cli
