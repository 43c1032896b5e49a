#include "signet/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "signet/error.hpp"

namespace signet {

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  // patience below the epoch budget; a single-epoch run cannot early-stop,
  // so any positive patience is accepted there
  if (patience <= 0 || (epochs > 1 && patience >= epochs)) {
    throw ConfigError("patience must be in [1, epochs)");
  }
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (epsilon <= 0.0) throw ConfigError("epsilon must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("betas must be in [0,1)");
  }
  if (val_fraction < 0.0 || val_fraction >= 0.5) {
    throw ConfigError("validation fraction must be in [0, 0.5)");
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.value[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

LoopResult run_epoch_loop(int max_epochs, int patience,
                          const std::function<double(int)>& run_epoch,
                          const std::function<void()>& snapshot,
                          const std::function<void()>& restore) {
  LoopResult result;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    const double val_loss = run_epoch(epoch);
    result.epochs_run = epoch;
    if (val_loss < best) {
      best = val_loss;
      result.best_epoch = epoch;
      stale = 0;
      snapshot();
    } else {
      ++stale;
    }
    if (stale >= patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.best_val_loss = best;
  if (result.best_epoch != result.epochs_run) restore();
  return result;
}

namespace {

// Forward + loss of one window; returns (loss, correct). When `backward_seed`
// is nonzero the scaled gradient is accumulated into the parameters.
std::pair<double, bool> window_pass(Model& model, Tape& tape, const WindowRecord& rec,
                                    bool training, Rng* dropout_rng, double backward_seed) {
  tape.clear();
  Ctx ctx{tape, training, dropout_rng};
  Var logits = model.forward(ctx, rec.window);
  Var loss = cross_entropy_logits(logits, {rec.label});
  if (backward_seed != 0.0) tape.backward(loss, backward_seed);
  const Tensor& lv = logits.value();
  // Prediction at threshold 0.5 on the positive-class probability: with two
  // logits this is a strict comparison, equality falls to the negative class.
  const bool predicted_positive = lv[1] > lv[0];
  const bool correct = predicted_positive == (rec.label == 1);
  return {loss.value().item(), correct};
}

}  // namespace

std::pair<double, double> dataset_loss(Model& model, const WindowDataset& dataset,
                                       const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ContractError("dataset_loss over an empty index set");
  Tape tape;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    auto [loss, ok] = window_pass(model, tape, dataset.records[i], false, nullptr, 0.0);
    loss_sum += loss;
    correct += ok ? 1 : 0;
  }
  const double n = static_cast<double>(indices.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainResult train(Model& model, const WindowDataset& dataset, const Split& split,
                  const TrainConfig& config, std::uint64_t train_seed) {
  config.validate();
  if (dataset.window_length != model.config().window_length) {
    throw ConfigError("dataset windows of " + std::to_string(dataset.window_length) +
                      " samples vs model length " +
                      std::to_string(model.config().window_length));
  }
  for (std::size_t i : split.train) {
    if (i >= dataset.size()) throw ConfigError("train index " + std::to_string(i) + " out of range");
  }
  if (split.train.empty()) throw ConfigError("empty training set");

  Rng rng(train_seed);
  Rng carve_rng = rng.fork(1);
  Rng shuffle_rng = rng.fork(2);
  Rng dropout_rng = rng.fork(3);

  TrainResult result;
  result.split = split;
  const std::vector<int> labels = dataset.labels();
  const std::vector<std::size_t> val_idx =
      stratified_take(split.train, labels, config.val_fraction, carve_rng);
  std::vector<std::size_t> train_idx;
  {
    std::vector<bool> is_val(dataset.size(), false);
    for (std::size_t i : val_idx) is_val[i] = true;
    for (std::size_t i : split.train) {
      if (!is_val[i]) train_idx.push_back(i);
    }
  }
  if (train_idx.empty()) throw ConfigError("empty training set after validation carve");
  if (val_idx.empty()) throw ConfigError("empty validation set (raise val_fraction)");
  result.split.train = train_idx;
  result.split.validation = val_idx;

  AdamOptimizer opt(model.parameters(), config.learning_rate, config.beta1, config.beta2,
                    config.epsilon);
  Tape tape;
  std::vector<Tensor> best_weights;

  auto run_one_epoch = [&](int epoch) {
    std::vector<std::size_t> order = train_idx;
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double batch_inv = 1.0 / static_cast<double>(end - start);
      opt.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        auto [loss, ok] =
            window_pass(model, tape, dataset.records[order[b]], true, &dropout_rng, batch_inv);
        loss_sum += loss;
        correct += ok ? 1 : 0;
      }
      opt.step();
    }
    auto [val_loss, val_acc] = dataset_loss(model, dataset, val_idx);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    stats.val_loss = val_loss;
    stats.val_accuracy = val_acc;
    result.curves.epochs.push_back(stats);
    return val_loss;
  };

  const LoopResult loop = run_epoch_loop(
      config.epochs, config.patience, run_one_epoch, [&] { best_weights = model.snapshot(); },
      [&] { model.restore(best_weights); });
  result.curves.best_epoch = loop.best_epoch;
  result.curves.early_stopped = loop.early_stopped;
  return result;
}

EvalResult evaluate(Model& model, const WindowDataset& dataset,
                    const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ContractError("evaluate over an empty index set");
  EvalResult result;
  result.scores.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw ContractError("eval index " + std::to_string(i) + " out of range");
    const WindowRecord& rec = dataset.records[i];
    result.scores.emplace_back(model.positive_score(rec.window), rec.label);
  }
  result.confusion = confusion_at_threshold(result.scores, 0.5);
  result.metrics = metrics_from_confusion(result.confusion);
  try {
    result.metrics.auc = auc_score(result.scores);
    result.roc = roc_points(result.scores);
  } catch (const MetricError&) {
    result.metrics.auc = 0.0;  // single-class index set
    result.metrics.degenerate = true;
  }
  return result;
}

}  // namespace signet
