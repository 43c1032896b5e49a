#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "signet/layers.hpp"
#include "signet/tensor.hpp"

namespace signet {

enum class ModelFamily { kTransformer, kCnn1d, kLstm, kCnnLstm };

const char* family_name(ModelFamily family);
ModelFamily family_from_string(const std::string& s);
std::vector<ModelFamily> all_families();

// One convolution stage followed by non-overlapping pooling.
struct ConvSpec {
  std::size_t out_channels = 8;
  std::size_t kernel = 7;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t pool = 4;
  PoolMode pool_mode = PoolMode::kMax;
};

// Architecture description; count_parameters() is a pure function of it.
struct ModelConfig {
  ModelFamily family = ModelFamily::kTransformer;
  std::size_t window_length = 2000;

  // Tokenization for the transformer and LSTM paths: the window is cut into
  // `segments` equal pieces of width window_length/segments.
  std::size_t segments = 8;

  // Transformer stack.
  std::size_t d_model = 48;
  std::size_t heads = 4;
  std::size_t blocks = 1;
  std::size_t ffn_width = 128;

  // Convolution stack (CNN1D and CNN-LSTM).
  std::vector<ConvSpec> conv;
  Activation conv_activation = Activation::kRelu;

  // LSTM stack (LSTM and CNN-LSTM); one entry per stacked cell.
  std::vector<std::size_t> lstm_hidden;

  // Hidden widths of the classification head before the final 2-unit layer.
  std::vector<std::size_t> dense_hidden;

  double dropout = 0.0;

  // Deviation knobs.
  bool residual = true;
  bool layer_norm = true;
  bool forget_bias_one = true;

  // When nonzero, build() rejects the config unless the counted parameters
  // land within ±5% of this target.
  std::size_t budget_target = 0;

  std::size_t segment_width() const { return window_length / segments; }
  void validate() const;  // throws ConfigError
};

// Budget-matched defaults for each family at window length 2000.
ModelConfig shipped_config(ModelFamily family);

// Closed-form parameter count (sum of per-layer formulas).
std::size_t count_parameters(const ModelConfig& config);

// Cut a window of L samples into n equal rows; row i holds samples
// [i*L/n, (i+1)*L/n). Throws ConfigError when n does not divide L.
Tensor segment_window(const Tensor& window, std::size_t n);

// A built classifier: layer stack plus parameter registry, deterministically
// initialized from (config, seed). Exclusively owned while training;
// const forward paths are safe to share afterwards.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelFamily family() const { return config_.family; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<Parameter*>& parameters() { return params_; }
  std::size_t parameter_total() const;

  // Class logits [1,2] for a window of config().window_length samples.
  // `trace`, when given and the family is transformer, captures the first
  // block's per-head Q/K/V/attention matrices.
  Var forward(Ctx& ctx, const Tensor& window, AttentionTrace* trace = nullptr);

  // Probability pair [1,2]; softmax of the logits, rows sum to 1.
  Tensor classify(const Tensor& window);

  // Probability of the positive class (index 1).
  double positive_score(const Tensor& window);

  // Per-head Q/K/V/attention of the first attention block, exactly as used
  // by forward() on this input. UnsupportedError for non-transformer models.
  AttentionTrace export_qkv(const Tensor& window);

  // Deep copy / restore of all parameter values, registry order.
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& saved);

 private:
  struct TransformerBlock {
    std::unique_ptr<MultiHeadAttention> attention;
    std::unique_ptr<LayerNorm> norm_attn;  // null when layer_norm is off
    std::unique_ptr<DenseLayer> ffn_in;
    std::unique_ptr<DenseLayer> ffn_out;
    std::unique_ptr<LayerNorm> norm_ffn;
  };

  Var forward_transformer(Ctx& ctx, const Tensor& window, AttentionTrace* trace);
  Var forward_cnn(Ctx& ctx, const Tensor& window);
  Var forward_lstm(Ctx& ctx, const Tensor& window);
  Var forward_cnn_lstm(Ctx& ctx, const Tensor& window);
  Var conv_stack(Ctx& ctx, Var x);
  Var head(Ctx& ctx, Var features);
  void check_window(const Tensor& window) const;

  ModelConfig config_;
  std::uint64_t seed_;

  std::unique_ptr<DenseLayer> embed_;
  std::unique_ptr<PositionalEmbedding> positional_;
  std::vector<TransformerBlock> blocks_;
  std::vector<std::unique_ptr<Conv1DLayer>> convs_;
  std::vector<std::unique_ptr<PoolLayer>> pools_;
  std::vector<std::unique_ptr<LSTMLayer>> lstms_;
  std::vector<std::unique_ptr<DenseLayer>> head_;

  std::vector<Parameter*> params_;
};

}  // namespace signet
