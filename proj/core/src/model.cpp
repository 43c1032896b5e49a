#include "signet/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "signet/error.hpp"

namespace signet {

const char* family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::kTransformer:
      return "transformer";
    case ModelFamily::kCnn1d:
      return "cnn1d";
    case ModelFamily::kLstm:
      return "lstm";
    case ModelFamily::kCnnLstm:
      return "cnn_lstm";
  }
  return "?";
}

ModelFamily family_from_string(const std::string& s) {
  std::string k;
  for (char ch : s) k += ch == '-' ? '_' : static_cast<char>(std::tolower(ch));
  if (k == "transformer") return ModelFamily::kTransformer;
  if (k == "cnn1d" || k == "cnn") return ModelFamily::kCnn1d;
  if (k == "lstm") return ModelFamily::kLstm;
  if (k == "cnn_lstm" || k == "cnnlstm") return ModelFamily::kCnnLstm;
  throw ConfigError("unknown model family '" + s + "'");
}

std::vector<ModelFamily> all_families() {
  return {ModelFamily::kTransformer, ModelFamily::kCnn1d, ModelFamily::kLstm,
          ModelFamily::kCnnLstm};
}

void ModelConfig::validate() const {
  if (window_length == 0) throw ConfigError("window_length must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  const bool needs_segments = family == ModelFamily::kTransformer || family == ModelFamily::kLstm;
  if (needs_segments) {
    if (segments == 0 || window_length % segments != 0) {
      throw ConfigError("segments " + std::to_string(segments) + " must divide window length " +
                        std::to_string(window_length));
    }
  }
  if (family == ModelFamily::kTransformer) {
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by heads " +
                        std::to_string(heads));
    }
    if (blocks == 0) throw ConfigError("transformer needs at least one block");
    if (ffn_width == 0) throw ConfigError("ffn_width must be positive");
  }
  const bool needs_conv = family == ModelFamily::kCnn1d || family == ModelFamily::kCnnLstm;
  if (needs_conv && conv.empty()) throw ConfigError("conv stack must not be empty");
  const bool needs_lstm = family == ModelFamily::kLstm || family == ModelFamily::kCnnLstm;
  if (needs_lstm && lstm_hidden.empty()) throw ConfigError("lstm stack must not be empty");
  for (std::size_t h : lstm_hidden) {
    if (h == 0) throw ConfigError("lstm hidden size must be positive");
  }
  for (const ConvSpec& c : conv) {
    if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0 || c.pool == 0) {
      throw ConfigError("conv spec fields must be positive");
    }
  }
}

namespace {

// Channel count and sequence length after the conv/pool stack.
std::pair<std::size_t, std::size_t> conv_stack_output(const ModelConfig& cfg) {
  std::size_t channels = 1;
  std::size_t length = cfg.window_length;
  for (const ConvSpec& c : cfg.conv) {
    if (length + 2 * c.padding < c.kernel) {
      throw ConfigError("conv kernel " + std::to_string(c.kernel) + " longer than padded input " +
                        std::to_string(length + 2 * c.padding));
    }
    length = (length + 2 * c.padding - c.kernel) / c.stride + 1;
    if (length < c.pool) {
      throw ConfigError("pool window " + std::to_string(c.pool) + " exceeds length " +
                        std::to_string(length));
    }
    length /= c.pool;
    channels = c.out_channels;
  }
  return {channels, length};
}

std::size_t head_param_count(std::size_t in, const std::vector<std::size_t>& hidden) {
  std::size_t total = 0;
  std::size_t width = in;
  for (std::size_t h : hidden) {
    total += DenseLayer::param_count(width, h);
    width = h;
  }
  total += DenseLayer::param_count(width, 2);
  return total;
}

}  // namespace

std::size_t count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  switch (cfg.family) {
    case ModelFamily::kTransformer: {
      total += DenseLayer::param_count(cfg.segment_width(), cfg.d_model);
      total += PositionalEmbedding::param_count(cfg.segments, cfg.d_model);
      std::size_t block = MultiHeadAttention::param_count(cfg.d_model) +
                          DenseLayer::param_count(cfg.d_model, cfg.ffn_width) +
                          DenseLayer::param_count(cfg.ffn_width, cfg.d_model);
      if (cfg.layer_norm) block += 2 * LayerNorm::param_count(cfg.d_model);
      total += cfg.blocks * block;
      total += head_param_count(cfg.d_model, cfg.dense_hidden);
      break;
    }
    case ModelFamily::kCnn1d: {
      std::size_t in_ch = 1;
      for (const ConvSpec& c : cfg.conv) {
        total += Conv1DLayer::param_count(in_ch, c.out_channels, c.kernel);
        in_ch = c.out_channels;
      }
      auto [channels, length] = conv_stack_output(cfg);
      total += head_param_count(channels * length, cfg.dense_hidden);
      break;
    }
    case ModelFamily::kLstm: {
      std::size_t d = cfg.segment_width();
      for (std::size_t h : cfg.lstm_hidden) {
        total += LSTMLayer::param_count(d, h);
        d = h;
      }
      total += head_param_count(d, cfg.dense_hidden);
      break;
    }
    case ModelFamily::kCnnLstm: {
      std::size_t in_ch = 1;
      for (const ConvSpec& c : cfg.conv) {
        total += Conv1DLayer::param_count(in_ch, c.out_channels, c.kernel);
        in_ch = c.out_channels;
      }
      auto [channels, length] = conv_stack_output(cfg);
      (void)length;
      std::size_t d = channels;
      for (std::size_t h : cfg.lstm_hidden) {
        total += LSTMLayer::param_count(d, h);
        d = h;
      }
      total += head_param_count(d, cfg.dense_hidden);
      break;
    }
  }
  return total;
}

ModelConfig shipped_config(ModelFamily family) {
  ModelConfig cfg;
  cfg.family = family;
  cfg.window_length = 2000;
  switch (family) {
    case ModelFamily::kTransformer:
      cfg.segments = 8;
      cfg.d_model = 48;
      cfg.heads = 4;
      cfg.blocks = 1;
      cfg.ffn_width = 128;
      cfg.budget_target = 34169;
      break;
    case ModelFamily::kCnn1d:
      cfg.conv = {{8, 7, 1, 0, 4, PoolMode::kMax},
                  {16, 5, 1, 0, 4, PoolMode::kMax},
                  {16, 3, 1, 0, 4, PoolMode::kMax}};
      cfg.dense_hidden = {68};
      cfg.budget_target = 34855;
      break;
    case ModelFamily::kLstm:
      cfg.segments = 8;
      cfg.lstm_hidden = {32};
      cfg.budget_target = 35225;
      break;
    case ModelFamily::kCnnLstm:
      cfg.conv = {{8, 7, 1, 0, 4, PoolMode::kMax},
                  {16, 5, 1, 0, 4, PoolMode::kMax},
                  {32, 3, 1, 0, 4, PoolMode::kMax}};
      cfg.lstm_hidden = {74};
      cfg.budget_target = 33789;
      break;
  }
  return cfg;
}

Tensor segment_window(const Tensor& window, std::size_t n) {
  const std::size_t len = window.numel();
  if (window.rank() > 2 || (window.rank() == 2 && window.rows() != 1)) {
    throw DimError("segment_window: expected a single window, got " +
                   shape_str(window.shape()));
  }
  if (n == 0 || len % n != 0) {
    throw ConfigError("segment count " + std::to_string(n) + " does not divide window length " +
                      std::to_string(len));
  }
  Tensor out({n, len / n}, window.data());
  return out;
}

// ---- Model ------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  if (config_.budget_target > 0) {
    const std::size_t count = count_parameters(config_);
    const double target = static_cast<double>(config_.budget_target);
    if (std::abs(static_cast<double>(count) - target) > 0.05 * target) {
      throw ConfigError("parameter count " + std::to_string(count) + " outside 5% of budget " +
                        std::to_string(config_.budget_target));
    }
  }
  Rng rng(seed);
  const std::string fam = family_name(config_.family);

  auto build_head = [&](std::size_t in_width) {
    std::size_t width = in_width;
    std::size_t idx = 0;
    for (std::size_t h : config_.dense_hidden) {
      head_.push_back(std::make_unique<DenseLayer>(fam + ".head" + std::to_string(idx++), width, h,
                                                   Activation::kRelu, rng));
      width = h;
    }
    head_.push_back(
        std::make_unique<DenseLayer>(fam + ".logits", width, 2, Activation::kNone, rng));
  };

  auto build_convs = [&] {
    std::size_t in_ch = 1;
    std::size_t idx = 0;
    for (const ConvSpec& c : config_.conv) {
      convs_.push_back(std::make_unique<Conv1DLayer>(fam + ".conv" + std::to_string(idx), in_ch,
                                                     c.out_channels, c.kernel, c.stride, c.padding,
                                                     config_.conv_activation, rng));
      pools_.push_back(std::make_unique<PoolLayer>(c.pool, c.pool_mode));
      in_ch = c.out_channels;
      ++idx;
    }
  };

  auto build_lstms = [&](std::size_t input_width) {
    std::size_t d = input_width;
    std::size_t idx = 0;
    for (std::size_t h : config_.lstm_hidden) {
      lstms_.push_back(std::make_unique<LSTMLayer>(fam + ".lstm" + std::to_string(idx++), d, h,
                                                   config_.forget_bias_one, rng));
      d = h;
    }
  };

  switch (config_.family) {
    case ModelFamily::kTransformer: {
      embed_ = std::make_unique<DenseLayer>(fam + ".embed", config_.segment_width(),
                                            config_.d_model, Activation::kNone, rng);
      positional_ = std::make_unique<PositionalEmbedding>(fam + ".pos", config_.segments,
                                                          config_.d_model, rng);
      for (std::size_t b = 0; b < config_.blocks; ++b) {
        TransformerBlock blk;
        const std::string base = fam + ".block" + std::to_string(b);
        blk.attention =
            std::make_unique<MultiHeadAttention>(base + ".attn", config_.d_model, config_.heads, rng);
        if (config_.layer_norm) blk.norm_attn = std::make_unique<LayerNorm>(base + ".ln1", config_.d_model);
        blk.ffn_in = std::make_unique<DenseLayer>(base + ".ffn1", config_.d_model,
                                                  config_.ffn_width, Activation::kRelu, rng);
        blk.ffn_out = std::make_unique<DenseLayer>(base + ".ffn2", config_.ffn_width,
                                                   config_.d_model, Activation::kNone, rng);
        if (config_.layer_norm) blk.norm_ffn = std::make_unique<LayerNorm>(base + ".ln2", config_.d_model);
        blocks_.push_back(std::move(blk));
      }
      build_head(config_.d_model);
      break;
    }
    case ModelFamily::kCnn1d: {
      build_convs();
      auto [channels, length] = conv_stack_output(config_);
      build_head(channels * length);
      break;
    }
    case ModelFamily::kLstm: {
      build_lstms(config_.segment_width());
      build_head(config_.lstm_hidden.back());
      break;
    }
    case ModelFamily::kCnnLstm: {
      build_convs();
      auto [channels, length] = conv_stack_output(config_);
      (void)length;
      build_lstms(channels);
      build_head(config_.lstm_hidden.back());
      break;
    }
  }

  if (embed_) embed_->collect(params_);
  if (positional_) positional_->collect(params_);
  for (TransformerBlock& blk : blocks_) {
    blk.attention->collect(params_);
    if (blk.norm_attn) blk.norm_attn->collect(params_);
    blk.ffn_in->collect(params_);
    blk.ffn_out->collect(params_);
    if (blk.norm_ffn) blk.norm_ffn->collect(params_);
  }
  for (auto& conv : convs_) conv->collect(params_);
  for (auto& lstm : lstms_) lstm->collect(params_);
  for (auto& dense : head_) dense->collect(params_);
}

std::size_t Model::parameter_total() const {
  std::size_t total = 0;
  for (const Parameter* p : params_) total += p->size();
  return total;
}

void Model::check_window(const Tensor& window) const {
  if (window.numel() != config_.window_length ||
      (window.rank() == 2 && window.rows() != 1)) {
    throw DimError("window of " + std::to_string(window.numel()) + " samples vs model length " +
                   std::to_string(config_.window_length));
  }
}

Var Model::head(Ctx& ctx, Var features) {
  if (config_.dropout > 0.0 && ctx.training && ctx.dropout_rng != nullptr) {
    features = dropout(features, config_.dropout, *ctx.dropout_rng);
  }
  Var y = features;
  for (auto& dense : head_) y = dense->forward(ctx, y);
  return y;
}

Var Model::conv_stack(Ctx& ctx, Var x) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i]->forward(ctx, x);
    x = pools_[i]->forward(ctx, x);
  }
  return x;
}

Var Model::forward_transformer(Ctx& ctx, const Tensor& window, AttentionTrace* trace) {
  Var x = ctx.tape.constant(segment_window(window, config_.segments));
  Var e = embed_->forward(ctx, x);
  e = positional_->forward(ctx, e);
  const bool want_dropout = config_.dropout > 0.0 && ctx.training && ctx.dropout_rng != nullptr;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    TransformerBlock& blk = blocks_[b];
    Var attn = blk.attention->forward(ctx, e, b == 0 ? trace : nullptr);
    if (want_dropout) attn = dropout(attn, config_.dropout, *ctx.dropout_rng);
    Var after_attn = config_.residual ? add(e, attn) : attn;
    if (blk.norm_attn) after_attn = blk.norm_attn->forward(ctx, after_attn);
    Var f = blk.ffn_out->forward(ctx, blk.ffn_in->forward(ctx, after_attn));
    if (want_dropout) f = dropout(f, config_.dropout, *ctx.dropout_rng);
    Var after_ffn = config_.residual ? add(after_attn, f) : f;
    if (blk.norm_ffn) after_ffn = blk.norm_ffn->forward(ctx, after_ffn);
    e = after_ffn;
  }
  Var pooled = mean_rows(e);
  Var y = pooled;
  for (auto& dense : head_) y = dense->forward(ctx, y);
  return y;
}

Var Model::forward_cnn(Ctx& ctx, const Tensor& window) {
  Var x = ctx.tape.constant(Tensor({1, config_.window_length}, window.data()));
  x = conv_stack(ctx, x);
  const Tensor& xv = x.value();
  Var flat = reshape(x, {1, xv.numel()});
  return head(ctx, flat);
}

Var Model::forward_lstm(Ctx& ctx, const Tensor& window) {
  Var x = ctx.tape.constant(segment_window(window, config_.segments));
  Var states = x;
  for (auto& lstm : lstms_) states = lstm->forward_sequence(ctx, states);
  const std::size_t steps = states.value().rows();
  Var last = slice(states, 0, steps - 1, steps);
  return head(ctx, last);
}

Var Model::forward_cnn_lstm(Ctx& ctx, const Tensor& window) {
  Var x = ctx.tape.constant(Tensor({1, config_.window_length}, window.data()));
  x = conv_stack(ctx, x);        // [C, L']
  Var seq = transpose(x);        // timesteps [L', C]
  Var states = seq;
  for (auto& lstm : lstms_) states = lstm->forward_sequence(ctx, states);
  const std::size_t steps = states.value().rows();
  Var last = slice(states, 0, steps - 1, steps);
  return head(ctx, last);
}

Var Model::forward(Ctx& ctx, const Tensor& window, AttentionTrace* trace) {
  check_window(window);
  if (trace != nullptr && config_.family != ModelFamily::kTransformer) {
    throw UnsupportedError("attention trace requires a transformer, model is " +
                           std::string(family_name(config_.family)));
  }
  switch (config_.family) {
    case ModelFamily::kTransformer:
      return forward_transformer(ctx, window, trace);
    case ModelFamily::kCnn1d:
      return forward_cnn(ctx, window);
    case ModelFamily::kLstm:
      return forward_lstm(ctx, window);
    case ModelFamily::kCnnLstm:
      return forward_cnn_lstm(ctx, window);
  }
  throw ConfigError("unknown family");
}

Tensor Model::classify(const Tensor& window) {
  Tape tape;
  Ctx ctx{tape};
  Var logits = forward(ctx, window);
  Var probs = softmax_rows(logits);
  return probs.value();
}

double Model::positive_score(const Tensor& window) { return classify(window)[1]; }

AttentionTrace Model::export_qkv(const Tensor& window) {
  if (config_.family != ModelFamily::kTransformer) {
    throw UnsupportedError("Q/K/V export requires a transformer, model is " +
                           std::string(family_name(config_.family)));
  }
  Tape tape;
  Ctx ctx{tape};
  AttentionTrace trace;
  forward(ctx, window, &trace);
  return trace;
}

std::vector<Tensor> Model::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const Parameter* p : params_) out.push_back(p->value);
  return out;
}

void Model::restore(const std::vector<Tensor>& saved) {
  if (saved.size() != params_.size()) {
    throw ContractError("snapshot has " + std::to_string(saved.size()) + " tensors, model has " +
                        std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < saved.size(); ++i) {
    if (!saved[i].same_shape(params_[i]->value)) {
      throw ContractError("snapshot shape mismatch at parameter " + params_[i]->name);
    }
    params_[i]->value = saved[i];
  }
}

}  // namespace signet
