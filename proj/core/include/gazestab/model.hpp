#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazestab/autodiff.hpp"
#include "gazestab/tensor.hpp"

namespace gazestab {

enum class ProjectionMode { fused, attention_only, linear_only };

std::string to_string(ProjectionMode mode);
ProjectionMode projection_mode_from_string(std::string_view s);

struct ModelConfig {
  std::size_t c_in = 4;  // pos_x, pos_y, lin_speed, ang_speed
  std::size_t d_model = 16;
  std::size_t n_heads = 8;
  std::size_t n_blocks = 2;
  std::size_t top_k_periods = 2;
  std::vector<std::size_t> inception_kernels{1, 3, 5};
  std::size_t d_ff = 16;  // hidden width inside each backbone block
  std::size_t hist_len = 64;
  std::size_t horizon = 64;
  double alpha_init = 0.5;
  double std_epsilon = 1e-5;
  ProjectionMode projection = ProjectionMode::fused;

  std::size_t total_len() const { return hist_len + horizon; }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class ParamGroup { token_conv, time_proj, predict_linear, backbone, mha, attn_out, linear, alpha };

std::string to_string(ParamGroup group);

struct NamedTensor {
  std::string name;
  ParamGroup group = ParamGroup::backbone;
  bool decay = true;               // included in the L2 penalty
  std::vector<std::size_t> shape;  // logical shape; value holds it row-major
  ad::Mat value;
};

/// All learnable tensors in a fixed order.
class ModelParams {
 public:
  void add(NamedTensor t);
  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t index_of(std::string_view name) const;  // throws ConfigError
  const NamedTensor& get(std::string_view name) const { return tensors_[index_of(name)]; }
  NamedTensor& get(std::string_view name) { return tensors_[index_of(name)]; }
  std::size_t coordinate_count() const;
  bool all_finite() const;
  /// Copy with every value rounded to the nearest float32, which is what a
  /// checkpoint stores.
  ModelParams quantized() const;

 private:
  std::vector<NamedTensor> tensors_;
};

/// Per-sample, per-channel statistics from standardize().
struct NormStats {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::vector<double> mu;     // [batch x channels]
  std::vector<double> sigma;  // [batch x channels], already floored at eps
};

/// Standardizes each (sample, channel) over time with population variance:
/// (x - mu) / max(sigma, eps). Throws InsufficientDataError for time < 2.
std::pair<TensorBatch, NormStats> standardize(const TensorBatch& x, double eps);
TensorBatch destandardize(const TensorBatch& x, const NormStats& stats);

/// Sinusoidal position code for steps t = 1..len, [len x d].
ad::Mat positional_encoding(std::size_t len, std::size_t d);

/// Dominant nonzero frequencies of x (channel-averaged amplitude, ties to the
/// lower frequency) and the matching periods ceil(len / f).
struct PeriodChoice {
  std::vector<std::size_t> freqs;
  std::vector<std::size_t> periods;
};
PeriodChoice select_periods(const ad::Mat& x, std::size_t k);

/// Period choices made by each backbone block during one forward pass.
using PeriodTrace = std::vector<std::vector<std::size_t>>;

struct ForwardOptions {
  /// When set, blocks reuse these frequencies instead of selecting them.
  const PeriodTrace* pinned = nullptr;
  /// When set, receives the frequencies each block used.
  PeriodTrace* record = nullptr;
};

class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0);
  Model(ModelConfig cfg, ModelParams params);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  /// sigmoid(raw alpha) for the fused projection; 1 or 0 for single-branch
  /// modes.
  double alpha() const;

  /// Parameters bound to a tape, in ModelParams order.
  struct Bound {
    std::vector<ad::Var> vars;
  };
  Bound bind(ad::Tape& tape) const;

  /// Differentiable forward for one sample: x is [hist_len x c_in], times is
  /// [hist_len x 1]. Returns the forecast segment [horizon x c_in].
  ad::Var forward(ad::Tape& tape, const Bound& p, ad::Var x, const ad::Mat& times,
                  ForwardOptions opts = {}) const;

  // Stages, each on one sample.
  ad::Var embed(ad::Tape& tape, const Bound& p, ad::Var xt, const ad::Mat& times) const;
  ad::Var extend_horizon(ad::Tape& tape, const Bound& p, ad::Var z) const;
  ad::Var temporal_backbone(ad::Tape& tape, const Bound& p, ad::Var z, ForwardOptions opts = {}) const;
  struct Branches {
    ad::Var attention;
    ad::Var linear;
    ad::Var alpha;
  };
  Branches project_branches(ad::Tape& tape, const Bound& p, ad::Var y) const;
  ad::Var project(ad::Tape& tape, const Bound& p, ad::Var y) const;

  /// Inference on plain matrices.
  ad::Mat predict(const ad::Mat& x, const ad::Mat& times) const;

  // Batch stage API.
  TensorBatch forward(const TensorBatch& x) const;
  TensorBatch embed(const TensorBatch& xt) const;
  TensorBatch extend_horizon(const TensorBatch& z) const;
  TensorBatch temporal_backbone(const TensorBatch& z) const;
  TensorBatch project(const TensorBatch& y) const;

 private:
  void check_params() const;

  ModelConfig cfg_;
  ModelParams params_;
  // Indices into params_.
  std::size_t token_conv_ = 0, time_proj_ = 0, predict_linear_ = 0;
  std::size_t wq_ = 0, wk_ = 0, wv_ = 0, wo_ = 0;
  std::size_t attn_out_w_ = 0, attn_out_b_ = 0, linear_w_ = 0, linear_b_ = 0, alpha_ = 0;
  struct BlockIndex {
    std::vector<std::size_t> conv1_w, conv1_b, conv2_w, conv2_b;
  };
  std::vector<BlockIndex> blocks_;
  void resolve_indices();
};

/// Builds the parameter set for cfg with seeded initialization. The horizon
/// extension starts as identity on the history rows and repeats the last
/// history step for the forecast rows.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace gazestab
