#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "signet/autodiff.hpp"
#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Per-pass context threaded through every layer. The tape is confined to one
// thread; `training` gates dropout.
struct Ctx {
  Tape& tape;
  bool training = false;
  Rng* dropout_rng = nullptr;
};

enum class Activation { kNone, kRelu, kSigmoid, kTanh };

Var apply_activation(Activation act, const Var& x);
const char* activation_name(Activation act);
Activation activation_from_string(const std::string& s);

// Glorot-uniform tensor: entries uniform in [-limit, limit),
// limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Fully connected y = act(x·Wᵀ + b), W [out,in], b {out}.
class DenseLayer {
 public:
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation act, Rng& rng);

  Var forward(Ctx& ctx, const Var& x);
  void collect(std::vector<Parameter*>& out);
  static std::size_t param_count(std::size_t in, std::size_t out) { return out * (in + 1); }

  std::size_t in_size() const { return in_; }
  std::size_t out_size() const { return out_; }

  Parameter weights;
  Parameter bias;

 private:
  std::size_t in_, out_;
  Activation act_;
};

// 1-D cross-correlation layer over [in_channels, L] inputs.
class Conv1DLayer {
 public:
  Conv1DLayer(const std::string& name, std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel, std::size_t stride, std::size_t padding, Activation act,
              Rng& rng);

  Var forward(Ctx& ctx, const Var& x);
  std::size_t output_length(std::size_t input_length) const;
  void collect(std::vector<Parameter*>& out);
  static std::size_t param_count(std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel) {
    return out_channels * (in_channels * kernel + 1);
  }

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }

  Parameter weights;  // {out, in, k}
  Parameter bias;     // {out}

 private:
  std::size_t in_channels_, out_channels_, kernel_, stride_, padding_;
  Activation act_;
};

// Non-overlapping pooling over [C, L]; no parameters.
class PoolLayer {
 public:
  PoolLayer(std::size_t window, PoolMode mode);

  Var forward(Ctx& ctx, const Var& x) const;
  std::size_t output_length(std::size_t input_length) const;

  std::size_t window() const { return window_; }
  PoolMode mode() const { return mode_; }

 private:
  std::size_t window_;
  PoolMode mode_;
};

// Single LSTM cell unrolled over a segment sequence. Gate weights are
// [h, d+h] and act on the concatenation [h_prev, x_t], in that order.
class LSTMLayer {
 public:
  LSTMLayer(const std::string& name, std::size_t input_size, std::size_t hidden_size,
            bool forget_bias_one, Rng& rng);

  // One step: x_t [1,d], h_prev and c_prev [1,h]. Returns (h_t, c_t).
  std::pair<Var, Var> step(Ctx& ctx, const Var& x_t, const Var& h_prev, const Var& c_prev);

  // Full sequence [N,d] -> all hidden states [N,h], starting from zero state.
  Var forward_sequence(Ctx& ctx, const Var& segments);

  void collect(std::vector<Parameter*>& out);
  static std::size_t param_count(std::size_t d, std::size_t h) { return 4 * h * (d + h + 1); }

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }

  Parameter w_forget, w_input, w_cell, w_output;  // each [h, d+h]
  Parameter b_forget, b_input, b_cell, b_output;  // each {h}

 private:
  std::size_t input_size_, hidden_size_;
};

// Per-head matrices exactly as used inside one attention forward pass.
struct AttentionTrace {
  std::vector<Tensor> query;      // [N, d_k] per head
  std::vector<Tensor> key;        // [N, d_k]
  std::vector<Tensor> value;      // [N, d_k]
  std::vector<Tensor> attention;  // [N, N], rows sum to 1
};

// Multi-head scaled dot-product self-attention. Full-width projections
// W_Q/W_K/W_V/W_O [d_model, d_model]; heads are column blocks of width
// d_model/heads. Q/K/V carry no bias; the output projection does.
class MultiHeadAttention {
 public:
  MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t heads, Rng& rng);

  Var forward(Ctx& ctx, const Var& x, AttentionTrace* trace = nullptr);
  void collect(std::vector<Parameter*>& out);
  static std::size_t param_count(std::size_t d_model) { return 4 * d_model * d_model + d_model; }

  std::size_t d_model() const { return d_model_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_width() const { return d_model_ / heads_; }

  Parameter w_query, w_key, w_value, w_out;
  Parameter b_out;

 private:
  std::size_t d_model_, heads_;
};

// Learned per-segment embedding added elementwise to [N, d_model] features.
class PositionalEmbedding {
 public:
  PositionalEmbedding(const std::string& name, std::size_t segments, std::size_t d_model,
                      Rng& rng);

  Var forward(Ctx& ctx, const Var& x);
  void collect(std::vector<Parameter*>& out);
  static std::size_t param_count(std::size_t segments, std::size_t d_model) {
    return segments * d_model;
  }

  Parameter table;  // [segments, d_model]
};

// Row-wise layer normalization with learned gain and bias.
class LayerNorm {
 public:
  LayerNorm(const std::string& name, std::size_t width);

  Var forward(Ctx& ctx, const Var& x);
  void collect(std::vector<Parameter*>& out);
  static std::size_t param_count(std::size_t width) { return 2 * width; }

  Parameter gain;  // {width}, ones
  Parameter bias;  // {width}, zeros
};

}  // namespace signet
