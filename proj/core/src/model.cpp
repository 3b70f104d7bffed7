#include "gazestab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gazestab/errors.hpp"

namespace gazestab {

using ad::Mat;
using ad::Tape;
using ad::Var;

std::string to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::fused: return "fused";
    case ProjectionMode::attention_only: return "attention_only";
    case ProjectionMode::linear_only: return "linear_only";
  }
  return "fused";
}

ProjectionMode projection_mode_from_string(std::string_view s) {
  if (s == "fused") return ProjectionMode::fused;
  if (s == "attention_only" || s == "mha") return ProjectionMode::attention_only;
  if (s == "linear_only" || s == "linear") return ProjectionMode::linear_only;
  throw ConfigError("unknown projection mode '" + std::string(s) + "'");
}

std::string to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::token_conv: return "token_conv";
    case ParamGroup::time_proj: return "time_proj";
    case ParamGroup::predict_linear: return "predict_linear";
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::mha: return "mha";
    case ParamGroup::attn_out: return "attn_out";
    case ParamGroup::linear: return "linear";
    case ParamGroup::alpha: return "alpha";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  if (c_in < 1) throw ConfigError("model.c_in must be >= 1");
  if (d_model < 1) throw ConfigError("model.d_model must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("model.d_model must be divisible by model.n_heads");
  if (top_k_periods < 1) throw ConfigError("model.top_k_periods must be >= 1");
  if (inception_kernels.empty()) throw ConfigError("model.inception_kernels must not be empty");
  for (std::size_t k : inception_kernels)
    if (k % 2 == 0) throw ConfigError("model.inception_kernels must be odd");
  if (d_ff < 1) throw ConfigError("model.d_ff must be >= 1");
  if (hist_len < 2) throw ConfigError("model.hist_len must be >= 2");
  if (horizon < 1) throw ConfigError("model.horizon must be >= 1");
  if (total_len() < 4) throw ConfigError("model.hist_len + model.horizon must be >= 4");
  if (top_k_periods > total_len() / 2) throw ConfigError("model.top_k_periods exceeds available frequencies");
  if (!(alpha_init >= 0.0 && alpha_init <= 1.0)) throw ConfigError("model.alpha_init must lie in [0, 1]");
  if (!(std_epsilon > 0.0)) throw ConfigError("model.std_epsilon must be > 0");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["c_in"] = c_in;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["n_blocks"] = n_blocks;
  j["top_k_periods"] = top_k_periods;
  j["inception_kernels"] = inception_kernels;
  j["d_ff"] = d_ff;
  j["hist_len"] = hist_len;
  j["horizon"] = horizon;
  j["alpha_init"] = alpha_init;
  j["std_epsilon"] = std_epsilon;
  j["projection"] = to_string(projection);
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.c_in = j.at("c_in").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_blocks = j.at("n_blocks").get<std::size_t>();
    c.top_k_periods = j.at("top_k_periods").get<std::size_t>();
    c.inception_kernels = j.at("inception_kernels").get<std::vector<std::size_t>>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.hist_len = j.at("hist_len").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.alpha_init = j.at("alpha_init").get<double>();
    c.std_epsilon = j.at("std_epsilon").get<double>();
    c.projection = projection_mode_from_string(j.at("projection").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void ModelParams::add(NamedTensor t) {
  for (const auto& existing : tensors_)
    if (existing.name == t.name) throw ConfigError("duplicate parameter " + t.name);
  tensors_.push_back(std::move(t));
}

std::size_t ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return i;
  throw ConfigError("unknown parameter " + std::string(name));
}

std::size_t ModelParams::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_)
    if (!t.value.allFinite()) return false;
  return true;
}

ModelParams ModelParams::quantized() const {
  ModelParams q = *this;
  for (auto& t : q.tensors_)
    t.value = t.value.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  return q;
}

// ---------------------------------------------------------------------------

std::pair<TensorBatch, NormStats> standardize(const TensorBatch& x, double eps) {
  if (x.time < 2) throw InsufficientDataError("standardize needs at least 2 time steps");
  TensorBatch out = x;
  NormStats st{x.batch, x.channels, std::vector<double>(x.batch * x.channels),
               std::vector<double>(x.batch * x.channels)};
  const double n = static_cast<double>(x.time);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t c = 0; c < x.channels; ++c) {
      double mu = 0.0;
      for (std::size_t t = 0; t < x.time; ++t) mu += x.at(b, t, c);
      mu /= n;
      double var = 0.0;
      for (std::size_t t = 0; t < x.time; ++t) var += (x.at(b, t, c) - mu) * (x.at(b, t, c) - mu);
      const double sd = std::max(std::sqrt(var / n), eps);
      for (std::size_t t = 0; t < x.time; ++t) out.at(b, t, c) = (x.at(b, t, c) - mu) / sd;
      st.mu[b * x.channels + c] = mu;
      st.sigma[b * x.channels + c] = sd;
    }
  }
  return {std::move(out), std::move(st)};
}

TensorBatch destandardize(const TensorBatch& x, const NormStats& stats) {
  if (stats.batch != x.batch || stats.channels != x.channels) throw ShapeError("destandardize: stats shape");
  TensorBatch out = x;
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t t = 0; t < x.time; ++t)
      for (std::size_t c = 0; c < x.channels; ++c)
        out.at(b, t, c) = x.at(b, t, c) * stats.sigma[b * x.channels + c] + stats.mu[b * x.channels + c];
  return out;
}

Mat positional_encoding(std::size_t len, std::size_t d) {
  Mat pe(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(d));
  for (std::size_t t = 0; t < len; ++t) {
    const double pos = static_cast<double>(t + 1);
    for (std::size_t j = 0; j < d; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle = pos / std::pow(10000.0, i2 / static_cast<double>(d));
      pe(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

PeriodChoice select_periods(const Mat& x, std::size_t k) {
  const std::vector<double> amp = ad::amplitude_spectrum(x);
  std::vector<std::size_t> order(amp.size() - 1);
  std::iota(order.begin(), order.end(), std::size_t{1});  // skip the DC bin
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return amp[a] > amp[b]; });
  if (k > order.size()) throw ConfigError("select_periods: k exceeds available frequencies");
  PeriodChoice pc;
  const auto len = static_cast<std::size_t>(x.rows());
  for (std::size_t i = 0; i < k; ++i) {
    pc.freqs.push_back(order[i]);
    pc.periods.push_back((len + order[i] - 1) / order[i]);
  }
  return pc;
}

// ---------------------------------------------------------------------------

namespace {

NamedTensor make(std::string name, ParamGroup group, bool decay, std::vector<std::size_t> shape,
                 Eigen::Index rows, Eigen::Index cols) {
  return NamedTensor{std::move(name), group, decay, std::move(shape), Mat::Zero(rows, cols)};
}

void fill_normal(Mat& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

std::string conv_name(std::size_t block, int layer, std::size_t k, const char* what) {
  return "block" + std::to_string(block) + ".conv" + std::to_string(layer) + ".k" + std::to_string(k) + "." + what;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto c = static_cast<Eigen::Index>(cfg.c_in);
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto ff = static_cast<Eigen::Index>(cfg.d_ff);
  const auto T = static_cast<Eigen::Index>(cfg.hist_len);
  const auto L = static_cast<Eigen::Index>(cfg.total_len());
  ModelParams p;

  auto token = make("token_conv", ParamGroup::token_conv, true, {3, cfg.c_in, cfg.d_model}, 3 * c, d);
  fill_normal(token.value, std::sqrt(2.0 / static_cast<double>(3 * c)), rng);
  p.add(std::move(token));

  auto time = make("time_proj", ParamGroup::time_proj, true, {1, cfg.d_model}, 1, d);
  fill_normal(time.value, 0.1, rng);
  p.add(std::move(time));

  auto pred = make("predict_linear", ParamGroup::predict_linear, true, {cfg.total_len(), cfg.hist_len}, L, T);
  for (Eigen::Index r = 0; r < L; ++r) pred.value(r, std::min(r, T - 1)) = 1.0;
  p.add(std::move(pred));

  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    for (int layer = 1; layer <= 2; ++layer) {
      const Eigen::Index in = layer == 1 ? d : ff;
      const Eigen::Index out = layer == 1 ? ff : d;
      for (std::size_t k : cfg.inception_kernels) {
        const auto kk = static_cast<Eigen::Index>(k * k);
        auto w = make(conv_name(b, layer, k, "weight"), ParamGroup::backbone, true,
                      {k, k, static_cast<std::size_t>(in), static_cast<std::size_t>(out)}, kk * in, out);
        // Small scale keeps each block close to its residual path at start.
        fill_normal(w.value, 0.1 * std::sqrt(2.0 / static_cast<double>(kk * in)), rng);
        p.add(std::move(w));
        p.add(make(conv_name(b, layer, k, "bias"), ParamGroup::backbone, false, {static_cast<std::size_t>(out)}, 1, out));
      }
    }
  }

  for (const char* name : {"mha.wq", "mha.wk", "mha.wv", "mha.wo"}) {
    auto w = make(name, ParamGroup::mha, true, {cfg.d_model, cfg.d_model}, d, d);
    fill_normal(w.value, std::sqrt(1.0 / static_cast<double>(d)), rng);
    p.add(std::move(w));
  }
  auto ao = make("attn_out.weight", ParamGroup::attn_out, true, {cfg.d_model, cfg.c_in}, d, c);
  fill_normal(ao.value, std::sqrt(1.0 / static_cast<double>(d)), rng);
  p.add(std::move(ao));
  p.add(make("attn_out.bias", ParamGroup::attn_out, false, {cfg.c_in}, 1, c));
  auto lw = make("linear.weight", ParamGroup::linear, true, {cfg.d_model, cfg.c_in}, d, c);
  fill_normal(lw.value, std::sqrt(1.0 / static_cast<double>(d)), rng);
  p.add(std::move(lw));
  p.add(make("linear.bias", ParamGroup::linear, false, {cfg.c_in}, 1, c));

  auto alpha = make("alpha_raw", ParamGroup::alpha, false, {1}, 1, 1);
  const double a = std::clamp(cfg.alpha_init, 1e-6, 1.0 - 1e-6);
  alpha.value(0, 0) = std::log(a / (1.0 - a));
  p.add(std::move(alpha));
  return p;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), params_(init_params(cfg_, seed)) {
  resolve_indices();
}

Model::Model(ModelConfig cfg, ModelParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  resolve_indices();
  check_params();
}

void Model::resolve_indices() {
  token_conv_ = params_.index_of("token_conv");
  time_proj_ = params_.index_of("time_proj");
  predict_linear_ = params_.index_of("predict_linear");
  wq_ = params_.index_of("mha.wq");
  wk_ = params_.index_of("mha.wk");
  wv_ = params_.index_of("mha.wv");
  wo_ = params_.index_of("mha.wo");
  attn_out_w_ = params_.index_of("attn_out.weight");
  attn_out_b_ = params_.index_of("attn_out.bias");
  linear_w_ = params_.index_of("linear.weight");
  linear_b_ = params_.index_of("linear.bias");
  alpha_ = params_.index_of("alpha_raw");
  blocks_.assign(cfg_.n_blocks, {});
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    for (std::size_t k : cfg_.inception_kernels) {
      blocks_[b].conv1_w.push_back(params_.index_of(conv_name(b, 1, k, "weight")));
      blocks_[b].conv1_b.push_back(params_.index_of(conv_name(b, 1, k, "bias")));
      blocks_[b].conv2_w.push_back(params_.index_of(conv_name(b, 2, k, "weight")));
      blocks_[b].conv2_b.push_back(params_.index_of(conv_name(b, 2, k, "bias")));
    }
  }
}

void Model::check_params() const {
  const ModelParams reference = init_params(cfg_, 0);
  if (reference.size() != params_.size()) throw SchemaError("parameter count does not match the model config");
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto& r = reference.tensors()[i];
    const auto& p = params_.tensors()[i];
    if (r.name != p.name || r.value.rows() != p.value.rows() || r.value.cols() != p.value.cols())
      throw SchemaError("parameter " + p.name + " does not match the model config");
  }
  if (!params_.all_finite()) throw DomainError("model parameters contain non-finite values");
}

double Model::alpha() const {
  switch (cfg_.projection) {
    case ProjectionMode::attention_only: return 1.0;
    case ProjectionMode::linear_only: return 0.0;
    case ProjectionMode::fused: break;
  }
  return 1.0 / (1.0 + std::exp(-params_.tensors()[alpha_].value(0, 0)));
}

Model::Bound Model::bind(Tape& tape) const {
  Bound b;
  b.vars.reserve(params_.size());
  for (const auto& t : params_.tensors()) b.vars.push_back(tape.parameter(t.value));
  return b;
}

Var Model::embed(Tape& tape, const Bound& p, Var xt, const Mat& times) const {
  const Mat& xv = tape.value(xt);
  if (static_cast<std::size_t>(xv.cols()) != cfg_.c_in) throw ShapeError("embed: channel count does not match model.c_in");
  if (times.rows() != xv.rows() || times.cols() != 1) throw ShapeError("embed: times must be [T x 1]");
  Var token = ad::conv1d_same(tape, xt, p.vars[token_conv_], 3);
  Var with_pos = ad::add_const(tape, token, positional_encoding(static_cast<std::size_t>(xv.rows()), cfg_.d_model));
  Var time_col = tape.constant(times);
  Var time_emb = ad::matmul(tape, time_col, p.vars[time_proj_]);
  return ad::add(tape, with_pos, time_emb);
}

Var Model::extend_horizon(Tape& tape, const Bound& p, Var z) const {
  if (static_cast<std::size_t>(tape.value(z).rows()) != cfg_.hist_len)
    throw ShapeError("extend_horizon: input length must equal model.hist_len");
  return ad::matmul(tape, p.vars[predict_linear_], z);
}

Var Model::temporal_backbone(Tape& tape, const Bound& p, Var z, ForwardOptions opts) const {
  const auto len = static_cast<std::size_t>(tape.value(z).rows());
  if (len < 4) throw ShapeError("temporal_backbone: sequence shorter than 4 steps");
  if (static_cast<std::size_t>(tape.value(z).cols()) != cfg_.d_model) throw ShapeError("temporal_backbone: width != d_model");
  const std::size_t kmax = *std::max_element(cfg_.inception_kernels.begin(), cfg_.inception_kernels.end());
  Var x = z;
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    std::vector<std::size_t> freqs;
    if (opts.pinned && b < opts.pinned->size()) {
      freqs = (*opts.pinned)[b];
    } else {
      freqs = select_periods(tape.value(x), cfg_.top_k_periods).freqs;
    }
    if (opts.record) {
      if (opts.record->size() <= b) opts.record->resize(b + 1);
      (*opts.record)[b] = freqs;
    }
    const BlockIndex& bi = blocks_[b];
    auto gather = [&](const std::vector<std::size_t>& idx) {
      std::vector<Var> v;
      for (std::size_t i : idx) v.push_back(p.vars[i]);
      return v;
    };
    const auto w1 = gather(bi.conv1_w);
    const auto w2 = gather(bi.conv2_w);
    const auto b1 = gather(bi.conv1_b);
    const auto b2 = gather(bi.conv2_b);
    Var k1 = ad::embed_kernels(tape, w1, cfg_.inception_kernels, cfg_.d_model);
    Var k2 = ad::embed_kernels(tape, w2, cfg_.inception_kernels, cfg_.d_ff);
    Var bias1 = ad::mean_of(tape, b1);
    Var bias2 = ad::mean_of(tape, b2);

    std::vector<Var> branches;
    for (std::size_t f : freqs) {
      const std::size_t period = (len + f - 1) / f;
      const std::size_t cycles = (len + period - 1) / period;
      Var img = ad::pad_rows(tape, x, cycles * period);
      Var h = ad::conv2d_same(tape, img, cycles, period, k1, bias1, kmax);
      h = ad::gelu(tape, h);
      h = ad::conv2d_same(tape, h, cycles, period, k2, bias2, kmax);
      branches.push_back(ad::rows(tape, h, 0, len));
    }
    Var weights = ad::softmax_row(tape, ad::spectral_amplitude(tape, x, freqs));
    Var agg = ad::weighted_sum(tape, branches, weights);
    x = ad::add(tape, agg, x);
  }
  return x;
}

Model::Branches Model::project_branches(Tape& tape, const Bound& p, Var y) const {
  Var q = ad::matmul(tape, y, p.vars[wq_]);
  Var k = ad::matmul(tape, y, p.vars[wk_]);
  Var v = ad::matmul(tape, y, p.vars[wv_]);
  Var att = ad::matmul(tape, ad::attention(tape, q, k, v, cfg_.n_heads), p.vars[wo_]);
  Var attn = ad::add_row(tape, ad::matmul(tape, att, p.vars[attn_out_w_]), p.vars[attn_out_b_]);
  Var lin = ad::add_row(tape, ad::matmul(tape, y, p.vars[linear_w_]), p.vars[linear_b_]);
  Var alpha = ad::sigmoid(tape, p.vars[alpha_]);
  return {attn, lin, alpha};
}

Var Model::project(Tape& tape, const Bound& p, Var y) const {
  if (cfg_.projection == ProjectionMode::linear_only)
    return ad::add_row(tape, ad::matmul(tape, y, p.vars[linear_w_]), p.vars[linear_b_]);
  Branches br = project_branches(tape, p, y);
  if (cfg_.projection == ProjectionMode::attention_only) return br.attention;
  return ad::blend(tape, br.alpha, br.attention, br.linear);
}

Var Model::forward(Tape& tape, const Bound& p, Var x, const Mat& times, ForwardOptions opts) const {
  const Mat& xv = tape.value(x);
  if (static_cast<std::size_t>(xv.rows()) != cfg_.hist_len) throw ShapeError("forward: input length must equal model.hist_len");
  if (static_cast<std::size_t>(xv.cols()) != cfg_.c_in) throw ShapeError("forward: channel count must equal model.c_in");
  Var stats = ad::column_stats(tape, x, cfg_.std_epsilon);
  Var xt = ad::normalize(tape, x, stats);
  Var z = embed(tape, p, xt, times);
  Var ext = extend_horizon(tape, p, z);
  Var y = temporal_backbone(tape, p, ext, opts);
  Var out = ad::denormalize(tape, project(tape, p, y), stats);
  return ad::rows(tape, out, cfg_.hist_len, cfg_.horizon);
}

Mat Model::predict(const Mat& x, const Mat& times) const {
  Tape tape(false);
  const Bound p = bind(tape);
  return tape.value(forward(tape, p, tape.constant(x), times));
}

namespace {

TensorBatch from_rows(const std::vector<Mat>& mats, const TensorBatch& like, std::size_t time) {
  TensorBatch out(mats.size(), time, static_cast<std::size_t>(mats.front().cols()));
  for (std::size_t b = 0; b < mats.size(); ++b) {
    out.set_sample(b, mats[b]);
    for (std::size_t t = 0; t < time; ++t) {
      if (t < like.time) {
        out.time_at(b, t) = like.time_at(b, t);
      } else {
        const double step = like.time >= 2 ? like.time_at(b, like.time - 1) - like.time_at(b, like.time - 2) : 0.0;
        out.time_at(b, t) = like.time_at(b, like.time - 1) + step * static_cast<double>(t - like.time + 1);
      }
    }
  }
  return out;
}

}  // namespace

TensorBatch Model::forward(const TensorBatch& x) const {
  x.validate();
  std::vector<Mat> outs;
  for (std::size_t b = 0; b < x.batch; ++b) outs.push_back(predict(x.sample(b), x.sample_times(b)));
  // Forecast timestamps continue the input spacing.
  TensorBatch out(x.batch, cfg_.horizon, cfg_.c_in);
  for (std::size_t b = 0; b < x.batch; ++b) {
    out.set_sample(b, outs[b]);
    const double step = x.time >= 2 ? x.time_at(b, x.time - 1) - x.time_at(b, x.time - 2) : 0.0;
    for (std::size_t t = 0; t < cfg_.horizon; ++t)
      out.time_at(b, t) = x.time_at(b, x.time - 1) + step * static_cast<double>(t + 1);
  }
  return out;
}

TensorBatch Model::embed(const TensorBatch& xt) const {
  xt.validate();
  std::vector<Mat> outs;
  for (std::size_t b = 0; b < xt.batch; ++b) {
    Tape tape(false);
    const Bound p = bind(tape);
    outs.push_back(tape.value(embed(tape, p, tape.constant(xt.sample(b)), xt.sample_times(b))));
  }
  return from_rows(outs, xt, xt.time);
}

TensorBatch Model::extend_horizon(const TensorBatch& z) const {
  z.validate();
  std::vector<Mat> outs;
  for (std::size_t b = 0; b < z.batch; ++b) {
    Tape tape(false);
    const Bound p = bind(tape);
    outs.push_back(tape.value(extend_horizon(tape, p, tape.constant(z.sample(b)))));
  }
  return from_rows(outs, z, cfg_.total_len());
}

TensorBatch Model::temporal_backbone(const TensorBatch& z) const {
  z.validate();
  std::vector<Mat> outs;
  for (std::size_t b = 0; b < z.batch; ++b) {
    Tape tape(false);
    const Bound p = bind(tape);
    outs.push_back(tape.value(temporal_backbone(tape, p, tape.constant(z.sample(b)))));
  }
  return from_rows(outs, z, z.time);
}

TensorBatch Model::project(const TensorBatch& y) const {
  y.validate();
  std::vector<Mat> outs;
  for (std::size_t b = 0; b < y.batch; ++b) {
    Tape tape(false);
    const Bound p = bind(tape);
    outs.push_back(tape.value(project(tape, p, tape.constant(y.sample(b)))));
  }
  return from_rows(outs, y, y.time);
}

}  // namespace gazestab
