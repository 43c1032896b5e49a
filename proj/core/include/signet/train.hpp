#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "signet/data.hpp"
#include "signet/metrics.hpp"
#include "signet/model.hpp"

namespace signet {

// Training protocol knobs. Defaults follow the shipped comparison protocol:
// up to 150 epochs, batches of 128 (last partial batch kept), early stopping
// on validation loss with patience 30, Adam(1e-3, 0.9, 0.999, 1e-8), and a
// stratified 15% of the training indices held out for validation.
struct TrainConfig {
  int epochs = 150;
  int batch_size = 128;
  int patience = 30;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double val_fraction = 0.15;

  void validate() const;  // throws ConfigError
};

// Adam with bias correction over a fixed parameter registry. Step t starts
// at 1; moments are zero-initialized.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter*> params, double learning_rate, double beta1, double beta2,
                double epsilon);

  // Applies one update from the gradients currently held by the parameters.
  void step();
  void zero_grad();
  long long steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct LearningCurves {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
};

// Generic early-stopping epoch driver. `run_epoch(e)` performs epoch e
// (1-based) and returns its validation loss; `snapshot()` saves the current
// weights, `restore()` brings the best snapshot back. Stops after `patience`
// consecutive epochs without strict improvement and always leaves the
// best-validation weights in place.
struct LoopResult {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

LoopResult run_epoch_loop(int max_epochs, int patience,
                          const std::function<double(int)>& run_epoch,
                          const std::function<void()>& snapshot,
                          const std::function<void()>& restore);

struct TrainResult {
  LearningCurves curves;
  Split split;  // the input split with `validation` carved out of `train`
};

// Cross-entropy training of `model` on the train indices of `split`, early
// stopping on the carved validation subset. Deterministic for a fixed
// (model seed, train_seed): shuffles, dropout and the validation carve all
// derive from `train_seed`.
TrainResult train(Model& model, const WindowDataset& dataset, const Split& split,
                  const TrainConfig& config, std::uint64_t train_seed);

struct EvalResult {
  ConfusionMatrix confusion;
  MetricSet metrics;
  std::vector<Scored> scores;
  std::vector<RocPoint> roc;
};

// Threshold-0.5 evaluation (scores exactly at 0.5 predict negative) plus ROC
// and AUC from the raw positive-class scores.
EvalResult evaluate(Model& model, const WindowDataset& dataset,
                    const std::vector<std::size_t>& indices);

// Mean cross-entropy and accuracy of the model over the given windows.
std::pair<double, double> dataset_loss(Model& model, const WindowDataset& dataset,
                                       const std::vector<std::size_t>& indices);

}  // namespace signet
