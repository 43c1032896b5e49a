// signet command-line interface: synthetic data generation, training
// sessions, checkpoint evaluation, attention inspection and parameter
// counting. Exit codes: 0 success, 2 usage or configuration error,
// 1 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "session.hpp"
#include "signet/checkpoint.hpp"
#include "signet/data.hpp"
#include "signet/error.hpp"
#include "signet/report.hpp"

namespace fs = std::filesystem;
using namespace signet;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string matrix_csv(const Tensor& m) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.12g", m.at(i, j));
      if (j) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Tensor read_window_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw signet::ParseError("cannot open window file '" + path.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") break;
  }
  if (line.empty()) throw signet::ParseError("'" + path.string() + "': no samples found");
  std::vector<double> values;
  std::string cell;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || (*end != '\0' && *end != '\r')) {
        throw signet::ParseError("'" + path.string() + "': malformed sample '" + cell + "'");
      }
      values.push_back(v);
      cell.clear();
    } else {
      cell += line[i];
    }
  }
  return Tensor::row(std::move(values));
}

std::vector<std::size_t> read_split_test_indices(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw signet::ParseError("cannot open split file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.find("index,role") != 0) {
    throw signet::ParseError("'" + path.string() + "': expected header index,role");
  }
  std::vector<std::size_t> test;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw signet::ParseError(path.string() + ":" + std::to_string(line_no) + ": expected index,role");
    }
    std::string role = line.substr(comma + 1);
    if (!role.empty() && role.back() == '\r') role.pop_back();
    if (role == "test") {
      try {
        test.push_back(std::stoul(line.substr(0, comma)));
      } catch (const std::exception&) {
        throw signet::ParseError(path.string() + ":" + std::to_string(line_no) +
                                 ": bad index '" + line.substr(0, comma) + "'");
      }
    }
  }
  if (test.empty()) {
    throw signet::ParseError("'" + path.string() + "': no test rows found");
  }
  return test;
}

std::string metrics_json_text(const EvalResult& ev) {
  nlohmann::json j;
  j["metrics"] = {{"precision", ev.metrics.precision},     {"accuracy", ev.metrics.accuracy},
                  {"f1", ev.metrics.f1},                   {"recall", ev.metrics.recall},
                  {"specificity", ev.metrics.specificity}, {"auc", ev.metrics.auc},
                  {"degenerate", ev.metrics.degenerate}};
  j["confusion"] = {{"tp", ev.confusion.tp},
                    {"fp", ev.confusion.fp},
                    {"tn", ev.confusion.tn},
                    {"fn", ev.confusion.fn}};
  return j.dump(2) + "\n";
}

int cmd_synth(const fs::path& out_dir, const SynthSpec& spec, std::uint64_t seed) {
  auto recordings = synth_generate(spec, seed);
  fs::create_directories(out_dir);
  std::vector<std::pair<std::string, const Recording*>> entries;
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "rec_%03zu.csv", i);
    write_recording_csv(out_dir / name, recordings[i]);
    entries.emplace_back(name, &recordings[i]);
  }
  write_manifest(out_dir / "manifest.csv", entries);
  std::cout << "wrote " << recordings.size() << " recordings (" << spec.per_class
            << " per class, " << spec.channels << " channels x " << spec.samples
            << " samples) + manifest to " << out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& manifest, const fs::path& split_path,
             std::size_t offset, std::size_t window_length_flag, const fs::path& out_dir) {
  Model model = load_checkpoint(ckpt_path);
  const std::size_t model_len = model.config().window_length;
  if (window_length_flag != 0 && window_length_flag != model_len) {
    throw DimError("requested window length " + std::to_string(window_length_flag) +
                   " vs checkpoint window length " + std::to_string(model_len));
  }
  auto recordings = load_recordings(manifest);
  WindowDataset dataset = extract_windows(recordings, model_len, offset);
  std::vector<std::size_t> indices;
  if (!split_path.empty()) {
    indices = read_split_test_indices(split_path);
    for (std::size_t i : indices) {
      if (i >= dataset.size()) {
        throw DataError("split index " + std::to_string(i) + " outside dataset of " +
                        std::to_string(dataset.size()) + " windows");
      }
    }
  } else {
    for (std::size_t i = 0; i < dataset.size(); ++i) indices.push_back(i);
  }
  EvalResult ev = evaluate(model, dataset, indices);
  fs::create_directories(out_dir);
  write_text(out_dir / "metrics.json", metrics_json_text(ev));
  write_text(out_dir / "confusion.csv", confusion_csv(ev.confusion));
  write_text(out_dir / "roc.csv", roc_csv(ev.roc));
  std::cout << "evaluated " << indices.size() << " windows: accuracy " << ev.metrics.accuracy
            << ", auc " << ev.metrics.auc << "\n";
  return 0;
}

int cmd_inspect(const fs::path& ckpt_path, const fs::path& window_path, const fs::path& out_dir) {
  Model model = load_checkpoint(ckpt_path);
  Tensor window = read_window_csv(window_path);
  AttentionTrace trace = model.export_qkv(window);
  fs::create_directories(out_dir);
  for (std::size_t h = 0; h < trace.query.size(); ++h) {
    const std::string tag = "head" + std::to_string(h);
    write_text(out_dir / (tag + "_Q.csv"), matrix_csv(trace.query[h]));
    write_text(out_dir / (tag + "_K.csv"), matrix_csv(trace.key[h]));
    write_text(out_dir / (tag + "_V.csv"), matrix_csv(trace.value[h]));
    write_text(out_dir / (tag + "_A.csv"), matrix_csv(trace.attention[h]));
  }
  std::cout << "wrote Q/K/V/A for " << trace.query.size() << " heads to " << out_dir.string()
            << "\n";
  return 0;
}

int cmd_count_params(const cli::SessionConfig& session, const std::string& family_arg) {
  std::vector<ModelFamily> families;
  if (family_arg == "all") {
    families = all_families();
  } else {
    families.push_back(family_from_string(family_arg));
  }
  for (ModelFamily family : families) {
    ModelConfig mc = cli::resolve_model_config(session, family);
    std::cout << family_name(family) << " " << count_parameters(mc) << "\n";
  }
  return 0;
}

void add_model_override_flags(CLI::App* cmd, cli::SessionConfig& session) {
  auto opt_size = [cmd](const char* flag, std::optional<std::size_t>& target, const char* desc) {
    cmd->add_option_function<std::size_t>(
           flag, [&target](const std::size_t& v) { target = v; }, desc)
        ->expected(1);
  };
  opt_size("--segments", session.segments, "Segment count for transformer/LSTM input");
  opt_size("--d-model", session.d_model, "Transformer model width");
  opt_size("--heads", session.heads, "Attention head count");
  opt_size("--blocks", session.blocks, "Transformer block count");
  opt_size("--ffn-width", session.ffn_width, "Transformer feed-forward width");
  cmd->add_option_function<double>(
         "--dropout", [&session](const double& v) { session.dropout = v; }, "Dropout rate");
  cmd->add_option_function<bool>(
         "--residual", [&session](const bool& v) { session.residual = v; },
         "Residual connections in transformer blocks");
  cmd->add_option_function<bool>(
         "--layer-norm", [&session](const bool& v) { session.layer_norm = v; },
         "Layer normalization in transformer blocks");
  cmd->add_option_function<bool>(
         "--forget-bias-one", [&session](const bool& v) { session.forget_bias_one = v; },
         "Initialize LSTM forget-gate bias to 1");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"signet: budget-matched sequence classifiers for signal windows"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate synthetic recordings + manifest");
  SynthSpec synth_spec;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--per-class", synth_spec.per_class, "Subjects per class")
      ->check(CLI::PositiveNumber);
  synth->add_option("--channels", synth_spec.channels, "Channels per recording")
      ->check(CLI::PositiveNumber);
  synth->add_option("--samples", synth_spec.samples, "Samples per channel")
      ->check(CLI::PositiveNumber);
  synth->add_option("--separation", synth_spec.separation, "Class separation factor");
  synth->add_option("--sampling-hz", synth_spec.sampling_hz, "Sampling rate");
  synth->add_option("--seed", synth_seed, "Generator seed");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Run a multi-seed training session");
  cli::SessionConfig session;
  std::string config_path;
  std::string family_csv;
  std::string seed_list_csv;
  train_cmd->add_option("--config", config_path, "JSON config file (flat keys)");
  train_cmd->add_option("--task", session.task, "depression | responder | custom");
  train_cmd->add_option("--family", family_csv,
                        "Comma-separated families (transformer,cnn1d,lstm,cnn_lstm) or 'all'");
  train_cmd->add_option("--manifest", session.manifest, "Recording manifest (else synthetic)");
  train_cmd->add_option("--per-class", session.per_class, "Synthetic: subjects per class");
  train_cmd->add_option("--channels", session.channels, "Synthetic: channels");
  train_cmd->add_option("--samples", session.samples, "Synthetic: samples per channel");
  train_cmd->add_option("--separation", session.separation, "Synthetic: class separation");
  train_cmd->add_option("--sampling-hz", session.sampling_hz, "Synthetic: sampling rate");
  train_cmd->add_option("--data-seed", session.data_seed, "Synthetic: generator seed");
  train_cmd->add_option("--window-length", session.window_length, "Window length in samples");
  train_cmd->add_option("--offset", session.offset, "Window start offset");
  add_model_override_flags(train_cmd, session);
  train_cmd->add_option("--epochs", session.train.epochs, "Maximum epochs");
  train_cmd->add_option("--batch-size", session.train.batch_size, "Batch size");
  train_cmd->add_option("--patience", session.train.patience, "Early-stop patience (epochs)");
  train_cmd->add_option("--learning-rate", session.train.learning_rate, "Adam learning rate");
  train_cmd->add_option("--beta1", session.train.beta1, "Adam beta1");
  train_cmd->add_option("--beta2", session.train.beta2, "Adam beta2");
  train_cmd->add_option("--epsilon", session.train.epsilon, "Adam epsilon");
  train_cmd->add_option("--val-fraction", session.train.val_fraction,
                        "Fraction of train carved for validation");
  train_cmd->add_option("--test-fraction", session.test_fraction, "Test split fraction");
  train_cmd->add_option("--split-seed", session.split_seed, "Split shuffle seed");
  train_cmd->add_flag("--subject-split", session.subject_split,
                      "Split whole subjects instead of windows");
  train_cmd->add_option("--seeds", session.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed-base", session.seed_base, "First seed value");
  train_cmd->add_option("--seed-list", seed_list_csv, "Explicit comma-separated seeds");
  train_cmd->add_option("--out", session.out, "Output directory");
  train_cmd->add_option("--jobs", session.jobs, "Parallel runs (across seeds)")
      ->check(CLI::PositiveNumber);

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string eval_ckpt, eval_manifest, eval_split, eval_out;
  std::size_t eval_offset = 0, eval_window_length = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "Recording manifest")->required();
  eval_cmd->add_option("--split", eval_split, "split.csv from training; uses its test rows");
  eval_cmd->add_option("--offset", eval_offset, "Window start offset");
  eval_cmd->add_option("--window-length", eval_window_length,
                       "Expected window length (checked against the checkpoint)");
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();

  // ---- inspect ----
  auto* inspect_cmd = app.add_subcommand("inspect", "Export Q/K/V/A matrices for one window");
  std::string ins_ckpt, ins_window, ins_out;
  inspect_cmd->add_option("--checkpoint", ins_ckpt, "Transformer checkpoint")->required();
  inspect_cmd->add_option("--window", ins_window, "CSV file with one row of samples")->required();
  inspect_cmd->add_option("--out", ins_out, "Output directory")->required();

  // ---- count-params ----
  auto* count_cmd = app.add_subcommand("count-params", "Closed-form parameter counts");
  std::string count_family = "all";
  count_cmd->add_option("--family", count_family, "Family name or 'all'");
  count_cmd->add_option("--window-length", session.window_length, "Window length in samples");
  add_model_override_flags(count_cmd, session);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_spec, synth_seed);
    if (*train_cmd) {
      // precedence: defaults < config file < explicit flags. Flags were
      // already parsed into `session`; replay them after the file merge by
      // re-parsing over the merged state.
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        cli::SessionConfig merged;
        cli::apply_config_json(merged, text, config_path);
        // any flag the user passed explicitly wins over the file
        auto take_if = [&](const char* name, auto member_ptr) {
          if (train_cmd->count(name) > 0) merged.*member_ptr = session.*member_ptr;
        };
        take_if("--task", &cli::SessionConfig::task);
        take_if("--manifest", &cli::SessionConfig::manifest);
        take_if("--per-class", &cli::SessionConfig::per_class);
        take_if("--channels", &cli::SessionConfig::channels);
        take_if("--samples", &cli::SessionConfig::samples);
        take_if("--separation", &cli::SessionConfig::separation);
        take_if("--sampling-hz", &cli::SessionConfig::sampling_hz);
        take_if("--data-seed", &cli::SessionConfig::data_seed);
        take_if("--window-length", &cli::SessionConfig::window_length);
        take_if("--offset", &cli::SessionConfig::offset);
        take_if("--test-fraction", &cli::SessionConfig::test_fraction);
        take_if("--split-seed", &cli::SessionConfig::split_seed);
        take_if("--subject-split", &cli::SessionConfig::subject_split);
        take_if("--seeds", &cli::SessionConfig::seeds);
        take_if("--seed-base", &cli::SessionConfig::seed_base);
        take_if("--out", &cli::SessionConfig::out);
        take_if("--jobs", &cli::SessionConfig::jobs);
        if (train_cmd->count("--epochs")) merged.train.epochs = session.train.epochs;
        if (train_cmd->count("--batch-size")) merged.train.batch_size = session.train.batch_size;
        if (train_cmd->count("--patience")) merged.train.patience = session.train.patience;
        if (train_cmd->count("--learning-rate")) merged.train.learning_rate = session.train.learning_rate;
        if (train_cmd->count("--beta1")) merged.train.beta1 = session.train.beta1;
        if (train_cmd->count("--beta2")) merged.train.beta2 = session.train.beta2;
        if (train_cmd->count("--epsilon")) merged.train.epsilon = session.train.epsilon;
        if (train_cmd->count("--val-fraction")) merged.train.val_fraction = session.train.val_fraction;
        if (session.segments) merged.segments = session.segments;
        if (session.d_model) merged.d_model = session.d_model;
        if (session.heads) merged.heads = session.heads;
        if (session.blocks) merged.blocks = session.blocks;
        if (session.ffn_width) merged.ffn_width = session.ffn_width;
        if (session.dropout) merged.dropout = session.dropout;
        if (session.residual) merged.residual = session.residual;
        if (session.layer_norm) merged.layer_norm = session.layer_norm;
        if (session.forget_bias_one) merged.forget_bias_one = session.forget_bias_one;
        session = merged;
      }
      if (!family_csv.empty()) {
        session.families.clear();
        if (family_csv == "all") {
          for (ModelFamily f : all_families()) session.families.push_back(family_name(f));
        } else {
          std::string cur;
          for (char ch : family_csv + ",") {
            if (ch == ',') {
              if (!cur.empty()) session.families.push_back(cur);
              cur.clear();
            } else {
              cur += ch;
            }
          }
        }
      }
      if (!seed_list_csv.empty()) {
        session.seed_list.clear();
        std::string cur;
        for (char ch : seed_list_csv + ",") {
          if (ch == ',') {
            if (!cur.empty()) {
              try {
                session.seed_list.push_back(std::stoull(cur));
              } catch (const std::exception&) {
                throw ConfigError("bad seed '" + cur + "' in --seed-list");
              }
            }
            cur.clear();
          } else {
            cur += ch;
          }
        }
      }
      // keep the default patience sensible when only the epoch budget shrinks
      if (train_cmd->count("--patience") == 0 && session.train.epochs > 1 &&
          session.train.patience >= session.train.epochs) {
        session.train.patience = session.train.epochs - 1;
      }
      cli::run_session(session);
      return 0;
    }
    if (*eval_cmd) {
      return cmd_eval(eval_ckpt, eval_manifest, eval_split, eval_offset, eval_window_length,
                      eval_out);
    }
    if (*inspect_cmd) return cmd_inspect(ins_ckpt, ins_window, ins_out);
    if (*count_cmd) return cmd_count_params(session, count_family);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
