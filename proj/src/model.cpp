#include "stylescope/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stylescope/error.hpp"

namespace stylescope {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string dims(std::size_t r, std::size_t c) { return "[" + std::to_string(r) + " x " + std::to_string(c) + "]"; }

void check_shape(const std::string& name, const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows != rows || m.cols != cols || m.data.size() != rows * cols) {
    throw ShapeMismatch(name + ": expected " + dims(rows, cols) + ", found " + dims(m.rows, m.cols));
  }
}

void check_shape(const std::string& name, const std::vector<float>& v, std::size_t n) {
  if (v.size() != n) {
    throw ShapeMismatch(name + ": expected [" + std::to_string(n) + "], found [" + std::to_string(v.size()) + "]");
  }
}

void check_finite(const std::string& name, std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NonFiniteWeight(name);
  }
}

// y = x W^T + b
Matrix linear(const Matrix& x, const Matrix& w, const std::vector<float>& b) {
  Matrix y(x.rows, w.rows);
  Eigen::Map<const RowMat> X(x.data.data(), x.rows, x.cols);
  Eigen::Map<const RowMat> W(w.data.data(), w.rows, w.cols);
  Eigen::Map<RowMat> Y(y.data.data(), y.rows, y.cols);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.data(), static_cast<Eigen::Index>(b.size()));
  return y;
}

void layer_norm_row(std::span<const float> x, std::span<float> out, const std::vector<float>& scale,
                    const std::vector<float>& shift, float eps) {
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(x.size());
  const float m = static_cast<float>(mean);
  const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - m) * inv * scale[i] + shift[i];
}

Matrix layer_norm(const Matrix& x, const std::vector<float>& scale, const std::vector<float>& shift, float eps) {
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) layer_norm_row(x.row(r), out.row(r), scale, shift, eps);
  return out;
}

void unembed_row(const ModelBundle& bundle, std::span<const float> normed, std::span<float> out) {
  const auto& e = bundle.token_embedding;
  Eigen::Map<const RowMat> E(e.data.data(), e.rows, e.cols);
  Eigen::Map<const Eigen::VectorXf> f(normed.data(), static_cast<Eigen::Index>(normed.size()));
  Eigen::Map<Eigen::VectorXf> y(out.data(), static_cast<Eigen::Index>(out.size()));
  y.noalias() = E * f;
}

std::size_t site_width(const ModelConfig& cfg, HookSite site) {
  return (site == HookSite::mlp_pre_act || site == HookSite::mlp_post_act) ? cfg.d_mlp : cfg.d_model;
}

void check_hook_point(const ModelConfig& cfg, const HookPoint& p) {
  if (p.layer < 0 || p.layer >= cfg.n_layers) {
    throw InvalidHookPoint(to_string(p) + ": layer outside [0, " + std::to_string(cfg.n_layers) + ")");
  }
  if (p.site == HookSite::final_norm_out && p.layer != cfg.n_layers - 1) {
    throw InvalidHookPoint(to_string(p) + ": final_norm_out is addressed at the last layer");
  }
}

class HookRunner {
 public:
  HookRunner(const ModelConfig& cfg, const ForwardOptions& options, int first_position, ForwardTrace& trace)
      : options_(options), first_position_(first_position), trace_(trace) {
    for (const auto& p : options.capture) check_hook_point(cfg, p);
    for (const auto& spec : options.interventions) {
      check_hook_point(cfg, spec.point);
      spec.validate(site_width(cfg, spec.point.site));
    }
  }

  void operator()(Matrix& m, HookPoint point) const {
    const int skip = std::max(0, options_.intervene_from_position - first_position_);
    for (const auto& spec : options_.interventions) {
      if (spec.point == point && static_cast<std::size_t>(skip) < m.rows) {
        apply_intervention(m, spec, static_cast<std::size_t>(skip));
      }
    }
    if (std::find(options_.capture.begin(), options_.capture.end(), point) != options_.capture.end()) {
      trace_.captured[point] = m;
    }
  }

 private:
  const ForwardOptions& options_;
  int first_position_;
  ForwardTrace& trace_;
};

}  // namespace

ModelConfig ModelConfig::gpt2_small() { return {12, 12, 768, 3072, 50257, 1024, 1e-5f}; }
ModelConfig ModelConfig::gpt2_medium() { return {24, 16, 1024, 4096, 50257, 1024, 1e-5f}; }

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || d_mlp <= 0 || vocab_size <= 0 || n_ctx <= 0) {
    throw ShapeMismatch("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ShapeMismatch("model config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                        std::to_string(n_heads));
  }
  if (!(layer_norm_eps > 0.0f)) throw ShapeMismatch("model config: layer_norm_eps must be positive");
}

void ModelBundle::validate() const {
  config.validate();
  const auto& c = config;
  const std::size_t d = c.d_model, m = c.d_mlp;
  check_shape("wte.weight", token_embedding, c.vocab_size, d);
  check_shape("wpe.weight", position_embedding, c.n_ctx, d);
  check_finite("wte.weight", token_embedding.data);
  check_finite("wpe.weight", position_embedding.data);
  if (blocks.size() != static_cast<std::size_t>(c.n_layers)) {
    throw ShapeMismatch("expected " + std::to_string(c.n_layers) + " blocks, found " + std::to_string(blocks.size()));
  }
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string p = "h." + std::to_string(l) + ".";
    check_shape(p + "ln_1.weight", b.ln1_scale, d);
    check_shape(p + "ln_1.bias", b.ln1_shift, d);
    check_shape(p + "attn.c_attn.weight", b.attn_qkv_weight, 3 * d, d);
    check_shape(p + "attn.c_attn.bias", b.attn_qkv_bias, 3 * d);
    check_shape(p + "attn.c_proj.weight", b.attn_out_weight, d, d);
    check_shape(p + "attn.c_proj.bias", b.attn_out_bias, d);
    check_shape(p + "ln_2.weight", b.ln2_scale, d);
    check_shape(p + "ln_2.bias", b.ln2_shift, d);
    check_shape(p + "mlp.c_fc.weight", b.mlp_in_weight, m, d);
    check_shape(p + "mlp.c_fc.bias", b.mlp_in_bias, m);
    check_shape(p + "mlp.c_proj.weight", b.mlp_out_weight, d, m);
    check_shape(p + "mlp.c_proj.bias", b.mlp_out_bias, d);
    check_finite(p + "ln_1.weight", b.ln1_scale);
    check_finite(p + "ln_1.bias", b.ln1_shift);
    check_finite(p + "attn.c_attn.weight", b.attn_qkv_weight.data);
    check_finite(p + "attn.c_attn.bias", b.attn_qkv_bias);
    check_finite(p + "attn.c_proj.weight", b.attn_out_weight.data);
    check_finite(p + "attn.c_proj.bias", b.attn_out_bias);
    check_finite(p + "ln_2.weight", b.ln2_scale);
    check_finite(p + "ln_2.bias", b.ln2_shift);
    check_finite(p + "mlp.c_fc.weight", b.mlp_in_weight.data);
    check_finite(p + "mlp.c_fc.bias", b.mlp_in_bias);
    check_finite(p + "mlp.c_proj.weight", b.mlp_out_weight.data);
    check_finite(p + "mlp.c_proj.bias", b.mlp_out_bias);
  }
  check_shape("ln_f.weight", final_ln_scale, d);
  check_shape("ln_f.bias", final_ln_shift, d);
  check_finite("ln_f.weight", final_ln_scale);
  check_finite("ln_f.bias", final_ln_shift);
}

float gelu(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2 / pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

const Matrix& ForwardTrace::at(HookPoint point) const {
  auto it = captured.find(point);
  if (it == captured.end()) throw MissingCapture(to_string(point) + " was not captured");
  return it->second;
}

KvCache::KvCache(const ModelConfig& config) {
  keys_.assign(config.n_layers, Matrix(config.n_ctx, config.d_model));
  values_.assign(config.n_layers, Matrix(config.n_ctx, config.d_model));
}

ForwardTrace forward_incremental(const ModelBundle& bundle, KvCache& cache, std::span<const TokenId> tokens,
                                 const ForwardOptions& options) {
  const ModelConfig& cfg = bundle.config;
  const int p0 = cache.length_;
  const int n = static_cast<int>(tokens.size());
  if (n == 0) throw SequenceTooLong("empty token sequence");
  if (p0 + n > cfg.n_ctx) {
    throw SequenceTooLong("sequence of " + std::to_string(p0 + n) + " tokens exceeds n_ctx " +
                          std::to_string(cfg.n_ctx));
  }
  if (cache.keys_.size() != static_cast<std::size_t>(cfg.n_layers)) {
    throw InvalidHookPoint("KV cache was built for a different model");
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) throw UnknownTokenId("token id " + std::to_string(t) + " outside vocab");
  }
  if (options.stop_after_layer >= cfg.n_layers) {
    throw InvalidHookPoint("stop_after_layer " + std::to_string(options.stop_after_layer) + " outside model");
  }

  ForwardTrace trace;
  HookRunner hook(cfg, options, p0, trace);
  const std::size_t d = cfg.d_model;
  const int heads = cfg.n_heads;
  const int hd = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const int total = p0 + n;

  Matrix x(n, d);
  for (int i = 0; i < n; ++i) {
    auto te = bundle.token_embedding.row(tokens[i]);
    auto pe = bundle.position_embedding.row(p0 + i);
    auto xr = x.row(i);
    for (std::size_t k = 0; k < d; ++k) xr[k] = te[k] + pe[k];
  }

  std::vector<float> scores(total);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const BlockWeights& blk = bundle.blocks[l];
    hook(x, {l, HookSite::resid_pre});

    // attention
    const Matrix h = layer_norm(x, blk.ln1_scale, blk.ln1_shift, cfg.layer_norm_eps);
    const Matrix qkv = linear(h, blk.attn_qkv_weight, blk.attn_qkv_bias);
    Matrix& keys = cache.keys_[l];
    Matrix& values = cache.values_[l];
    for (int i = 0; i < n; ++i) {
      const float* src = qkv.row(i).data();
      std::copy(src + d, src + 2 * d, keys.row(p0 + i).data());
      std::copy(src + 2 * d, src + 3 * d, values.row(p0 + i).data());
    }

    const bool record = std::find(options.attention_pattern_layers.begin(), options.attention_pattern_layers.end(),
                                  l) != options.attention_pattern_layers.end();
    Matrix pattern;
    if (record) pattern = Matrix(static_cast<std::size_t>(heads) * n, total, 0.0f);

    Matrix mixed(n, d, 0.0f);
    for (int i = 0; i < n; ++i) {
      const int visible = p0 + i + 1;  // causal: keys 0..p0+i
      const float* q_row = qkv.row(i).data();
      for (int hh = 0; hh < heads; ++hh) {
        const float* q = q_row + hh * hd;
        float max_score = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < visible; ++j) {
          const float* k = keys.row(j).data() + hh * hd;
          float dot = 0.0f;
          for (int e = 0; e < hd; ++e) dot += q[e] * k[e];
          scores[j] = dot * scale;
          max_score = std::max(max_score, scores[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < visible; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          sum += scores[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        float* out = mixed.row(i).data() + hh * hd;
        for (int j = 0; j < visible; ++j) {
          const float p = scores[j] * inv;
          if (record) pattern(static_cast<std::size_t>(hh) * n + i, j) = p;
          const float* v = values.row(j).data() + hh * hd;
          for (int e = 0; e < hd; ++e) out[e] += p * v[e];
        }
      }
    }
    if (record) trace.attention_patterns[l] = std::move(pattern);

    Matrix attn = linear(mixed, blk.attn_out_weight, blk.attn_out_bias);
    hook(attn, {l, HookSite::attn_out});
    for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += attn.data[k];

    // MLP
    const Matrix h2 = layer_norm(x, blk.ln2_scale, blk.ln2_shift, cfg.layer_norm_eps);
    Matrix act = linear(h2, blk.mlp_in_weight, blk.mlp_in_bias);
    hook(act, {l, HookSite::mlp_pre_act});
    for (float& v : act.data) v = gelu(v);
    hook(act, {l, HookSite::mlp_post_act});
    const Matrix mlp = linear(act, blk.mlp_out_weight, blk.mlp_out_bias);
    for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += mlp.data[k];
    hook(x, {l, HookSite::resid_post});

    if (l == options.stop_after_layer) {
      cache.length_ = total;
      return trace;
    }
  }

  Matrix normed = layer_norm(x, bundle.final_ln_scale, bundle.final_ln_shift, cfg.layer_norm_eps);
  hook(normed, {cfg.n_layers - 1, HookSite::final_norm_out});
  trace.logits = Matrix(n, cfg.vocab_size);
  for (int i = 0; i < n; ++i) unembed_row(bundle, normed.row(i), trace.logits.row(i));
  cache.length_ = total;
  return trace;
}

ForwardTrace forward(const ModelBundle& bundle, std::span<const TokenId> tokens, const ForwardOptions& options) {
  if (tokens.size() > static_cast<std::size_t>(bundle.config.n_ctx)) {
    throw SequenceTooLong("sequence of " + std::to_string(tokens.size()) + " tokens exceeds n_ctx " +
                          std::to_string(bundle.config.n_ctx));
  }
  KvCache cache(bundle.config);
  return forward_incremental(bundle, cache, tokens, options);
}

ForwardTrace forward(const ModelBundle& bundle, std::span<const TokenId> tokens, std::vector<HookPoint> capture,
                     std::vector<InterventionSpec> interventions) {
  ForwardOptions options;
  options.capture = std::move(capture);
  options.interventions = std::move(interventions);
  return forward(bundle, tokens, options);
}

std::vector<float> lens_logits(const ModelBundle& bundle, std::span<const float> residual) {
  const auto& cfg = bundle.config;
  if (residual.size() != static_cast<std::size_t>(cfg.d_model)) {
    throw ShapeMismatch("lens input has " + std::to_string(residual.size()) + " entries, expected d_model");
  }
  std::vector<float> normed(cfg.d_model);
  layer_norm_row(residual, normed, bundle.final_ln_scale, bundle.final_ln_shift, cfg.layer_norm_eps);
  std::vector<float> logits(cfg.vocab_size);
  unembed_row(bundle, normed, logits);
  return logits;
}

std::vector<LensRecord> logit_lens(const ModelBundle& bundle, const ForwardTrace& trace, int position,
                                   TokenId target) {
  const auto& cfg = bundle.config;
  if (target < 0 || target >= cfg.vocab_size) throw UnknownTokenId("lens target " + std::to_string(target));
  std::vector<LensRecord> records;
  records.reserve(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Matrix& resid = trace.at({l, HookSite::resid_post});
    if (position < 0 || static_cast<std::size_t>(position) >= resid.rows) {
      throw MissingCapture("position " + std::to_string(position) + " not in captured resid_post");
    }
    const auto logits = lens_logits(bundle, resid.row(position));
    const float t = logits[target];
    int rank = 1;
    for (int v = 0; v < cfg.vocab_size; ++v) {
      if (logits[v] > t || (logits[v] == t && v < target)) ++rank;
    }
    records.push_back({l, t, rank});
  }
  return records;
}

std::vector<HookPoint> all_resid_post(const ModelConfig& config) {
  std::vector<HookPoint> out;
  for (int l = 0; l < config.n_layers; ++l) out.push_back({l, HookSite::resid_post});
  return out;
}

}  // namespace stylescope
