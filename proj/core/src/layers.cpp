#include "signet/layers.hpp"

#include <cmath>

#include "signet/error.hpp"

namespace signet {

Var apply_activation(Activation act, const Var& x) {
  switch (act) {
    case Activation::kNone:
      return x;
    case Activation::kRelu:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kTanh:
      return tanh_act(x);
  }
  throw ConfigError("unknown activation");
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::kNone:
      return "none";
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "'");
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.next_uniform(-limit, limit);
  return t;
}

// ---- DenseLayer -------------------------------------------------------------

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation act,
                       Rng& rng)
    : weights(name + ".w", glorot_uniform({out, in}, in, out, rng)),
      bias(name + ".b", Tensor({out})),
      in_(in),
      out_(out),
      act_(act) {
  if (in == 0 || out == 0) throw ConfigError("dense layer sizes must be positive");
}

Var DenseLayer::forward(Ctx& ctx, const Var& x) {
  if (x.value().rank() != 2 || x.value().cols() != in_) {
    throw DimError("dense '" + weights.name + "': input " + shape_str(x.value().shape()) +
                   " vs expected cols " + std::to_string(in_));
  }
  Var y = add_bias(matmul_nt(x, ctx.tape.use(weights)), ctx.tape.use(bias));
  return apply_activation(act_, y);
}

void DenseLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weights);
  out.push_back(&bias);
}

// ---- Conv1DLayer ------------------------------------------------------------

Conv1DLayer::Conv1DLayer(const std::string& name, std::size_t in_channels,
                         std::size_t out_channels, std::size_t kernel, std::size_t stride,
                         std::size_t padding, Activation act, Rng& rng)
    : weights(name + ".w", glorot_uniform({out_channels, in_channels, kernel},
                                          in_channels * kernel, out_channels * kernel, rng)),
      bias(name + ".b", Tensor({out_channels})),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      act_(act) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw ConfigError("conv layer sizes must be positive");
  }
}

std::size_t Conv1DLayer::output_length(std::size_t input_length) const {
  if (input_length + 2 * padding_ < kernel_) {
    throw ConfigError("conv '" + weights.name + "': kernel " + std::to_string(kernel_) +
                      " longer than padded input " + std::to_string(input_length + 2 * padding_));
  }
  return (input_length + 2 * padding_ - kernel_) / stride_ + 1;
}

Var Conv1DLayer::forward(Ctx& ctx, const Var& x) {
  Var y = conv1d(x, ctx.tape.use(weights), ctx.tape.use(bias), stride_, padding_);
  return apply_activation(act_, y);
}

void Conv1DLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weights);
  out.push_back(&bias);
}

// ---- PoolLayer --------------------------------------------------------------

PoolLayer::PoolLayer(std::size_t window, PoolMode mode) : window_(window), mode_(mode) {
  if (window == 0) throw ConfigError("pool window must be positive");
}

std::size_t PoolLayer::output_length(std::size_t input_length) const {
  if (input_length < window_) {
    throw ConfigError("pool window " + std::to_string(window_) + " exceeds length " +
                      std::to_string(input_length));
  }
  return input_length / window_;
}

Var PoolLayer::forward(Ctx& ctx, const Var& x) const {
  (void)ctx;
  return pool1d(x, window_, mode_);
}

// ---- LSTMLayer --------------------------------------------------------------

LSTMLayer::LSTMLayer(const std::string& name, std::size_t input_size, std::size_t hidden_size,
                     bool forget_bias_one, Rng& rng)
    : w_forget(name + ".w_f",
               glorot_uniform({hidden_size, input_size + hidden_size}, input_size + hidden_size,
                              hidden_size, rng)),
      w_input(name + ".w_i",
              glorot_uniform({hidden_size, input_size + hidden_size}, input_size + hidden_size,
                             hidden_size, rng)),
      w_cell(name + ".w_c",
             glorot_uniform({hidden_size, input_size + hidden_size}, input_size + hidden_size,
                            hidden_size, rng)),
      w_output(name + ".w_o",
               glorot_uniform({hidden_size, input_size + hidden_size}, input_size + hidden_size,
                              hidden_size, rng)),
      b_forget(name + ".b_f", Tensor({hidden_size}, forget_bias_one ? 1.0 : 0.0)),
      b_input(name + ".b_i", Tensor({hidden_size})),
      b_cell(name + ".b_c", Tensor({hidden_size})),
      b_output(name + ".b_o", Tensor({hidden_size})),
      input_size_(input_size),
      hidden_size_(hidden_size) {
  if (input_size == 0 || hidden_size == 0) throw ConfigError("lstm sizes must be positive");
}

std::pair<Var, Var> LSTMLayer::step(Ctx& ctx, const Var& x_t, const Var& h_prev,
                                    const Var& c_prev) {
  const Tensor& xv = x_t.value();
  if (xv.rank() != 2 || xv.rows() != 1 || xv.cols() != input_size_ ||
      h_prev.value().cols() != hidden_size_ || c_prev.value().cols() != hidden_size_) {
    throw DimError("lstm step: x " + shape_str(xv.shape()) + ", h " +
                   shape_str(h_prev.value().shape()) + ", expected d=" +
                   std::to_string(input_size_) + " h=" + std::to_string(hidden_size_));
  }
  Tape& t = ctx.tape;
  Var z = concat(h_prev, x_t, 1);  // [h_prev, x_t]
  Var f = sigmoid(add_bias(matmul_nt(z, t.use(w_forget)), t.use(b_forget)));
  Var i = sigmoid(add_bias(matmul_nt(z, t.use(w_input)), t.use(b_input)));
  Var cand = tanh_act(add_bias(matmul_nt(z, t.use(w_cell)), t.use(b_cell)));
  Var o = sigmoid(add_bias(matmul_nt(z, t.use(w_output)), t.use(b_output)));
  Var c_t = add(mul(f, c_prev), mul(i, cand));
  Var h_t = mul(o, tanh_act(c_t));
  return {h_t, c_t};
}

Var LSTMLayer::forward_sequence(Ctx& ctx, const Var& segments) {
  const Tensor& sv = segments.value();
  if (sv.rank() != 2 || sv.cols() != input_size_) {
    throw DimError("lstm sequence: input " + shape_str(sv.shape()) + " vs feature width " +
                   std::to_string(input_size_));
  }
  const std::size_t steps = sv.rows();
  Var h = ctx.tape.constant(Tensor({1, hidden_size_}));
  Var c = ctx.tape.constant(Tensor({1, hidden_size_}));
  Var states;
  for (std::size_t t = 0; t < steps; ++t) {
    Var x_t = slice(segments, 0, t, t + 1);
    auto [h_t, c_t] = step(ctx, x_t, h, c);
    h = h_t;
    c = c_t;
    states = t == 0 ? h_t : concat(states, h_t, 0);
  }
  return states;
}

void LSTMLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_forget);
  out.push_back(&w_input);
  out.push_back(&w_cell);
  out.push_back(&w_output);
  out.push_back(&b_forget);
  out.push_back(&b_input);
  out.push_back(&b_cell);
  out.push_back(&b_output);
}

// ---- MultiHeadAttention -----------------------------------------------------

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t d_model,
                                       std::size_t heads, Rng& rng)
    : w_query(name + ".w_q", glorot_uniform({d_model, d_model}, d_model, d_model, rng)),
      w_key(name + ".w_k", glorot_uniform({d_model, d_model}, d_model, d_model, rng)),
      w_value(name + ".w_v", glorot_uniform({d_model, d_model}, d_model, d_model, rng)),
      w_out(name + ".w_o", glorot_uniform({d_model, d_model}, d_model, d_model, rng)),
      b_out(name + ".b_o", Tensor({d_model})),
      d_model_(d_model),
      heads_(heads) {
  if (heads == 0 || d_model == 0) throw ConfigError("attention sizes must be positive");
  if (d_model % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Var MultiHeadAttention::forward(Ctx& ctx, const Var& x, AttentionTrace* trace) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.cols() != d_model_) {
    throw DimError("attention: input " + shape_str(xv.shape()) + " vs width " +
                   std::to_string(d_model_));
  }
  Tape& t = ctx.tape;
  Var q = matmul(x, t.use(w_query));
  Var k = matmul(x, t.use(w_key));
  Var v = matmul(x, t.use(w_value));
  const std::size_t dk = head_width();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Var heads_out;
  for (std::size_t h = 0; h < heads_; ++h) {
    Var qh = slice(q, 1, h * dk, (h + 1) * dk);
    Var kh = slice(k, 1, h * dk, (h + 1) * dk);
    Var vh = slice(v, 1, h * dk, (h + 1) * dk);
    Var attn = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt_dk));
    if (trace != nullptr) {
      trace->query.push_back(qh.value());
      trace->key.push_back(kh.value());
      trace->value.push_back(vh.value());
      trace->attention.push_back(attn.value());
    }
    Var head = matmul(attn, vh);
    heads_out = h == 0 ? head : concat(heads_out, head, 1);
  }
  return add_bias(matmul(heads_out, t.use(w_out)), t.use(b_out));
}

void MultiHeadAttention::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_query);
  out.push_back(&w_key);
  out.push_back(&w_value);
  out.push_back(&w_out);
  out.push_back(&b_out);
}

// ---- PositionalEmbedding ----------------------------------------------------

PositionalEmbedding::PositionalEmbedding(const std::string& name, std::size_t segments,
                                         std::size_t d_model, Rng& rng)
    : table(name + ".table", glorot_uniform({segments, d_model}, segments, d_model, rng)) {
  if (segments == 0 || d_model == 0) throw ConfigError("positional table sizes must be positive");
}

Var PositionalEmbedding::forward(Ctx& ctx, const Var& x) {
  if (!x.value().same_shape(table.value)) {
    throw DimError("positional table " + shape_str(table.value.shape()) + " vs input " +
                   shape_str(x.value().shape()));
  }
  return add(x, ctx.tape.use(table));
}

void PositionalEmbedding::collect(std::vector<Parameter*>& out) { out.push_back(&table); }

// ---- LayerNorm ----------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t width)
    : gain(name + ".gain", Tensor({width}, 1.0)), bias(name + ".bias", Tensor({width})) {
  if (width == 0) throw ConfigError("layer norm width must be positive");
}

Var LayerNorm::forward(Ctx& ctx, const Var& x) {
  return layer_norm_rows(x, ctx.tape.use(gain), ctx.tape.use(bias));
}

void LayerNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

}  // namespace signet
