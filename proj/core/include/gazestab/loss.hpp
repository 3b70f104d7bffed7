#pragma once

#include "gazestab/autodiff.hpp"
#include "gazestab/model.hpp"

namespace gazestab {

struct LossConfig {
  double lambda_c = 0.001;  // centroid term weight
  double lambda_v = 0.05;   // dispersion term weight
  double lambda = 0.9;      // share of the combined loss vs the velocity loss
  double weight_decay = 1e-4;
  /// Step used to turn position differences into velocities. 1 measures
  /// velocity per sample; 1 / sample_rate gives m/s.
  double velocity_dt = 1.0;
  /// Sweep toggles for the centroid and dispersion terms.
  bool use_center = true;
  bool use_dispersion = true;

  void validate() const;
};

/// Mean squared point distance plus lambda_c * squared centroid gap plus
/// lambda_v * L1 gap of per-axis population variances. pred and truth are
/// [n x 2]. When grad is non-null it receives d(loss)/d(pred).
double loss_comb(const ad::Mat& pred, const ad::Mat& truth, double lambda_c, double lambda_v,
                 ad::Mat* grad = nullptr);

/// Mean over steps of the squared velocity difference (summed over axes).
/// Throws InsufficientDataError for fewer than 2 points.
double loss_velocity(const ad::Mat& pred, const ad::Mat& truth, double dt = 1.0, ad::Mat* grad = nullptr);

/// lambda * comb + (1 - lambda) * velocity on the first two columns of pred.
double data_loss(const ad::Mat& pred, const ad::Mat& truth, const LossConfig& cfg, ad::Mat* grad = nullptr);

/// weight_decay * sum of squares over decayed tensors (weights only).
double weight_penalty(const ModelParams& params, double weight_decay);

/// data_loss + weight_penalty.
double total_loss(const ad::Mat& pred, const ad::Mat& truth, const LossConfig& cfg, const ModelParams& params);

/// Tape node for data_loss with pred [n x c], c >= 2, and truth [n x 2].
ad::Var data_loss(ad::Tape& tape, ad::Var pred, const ad::Mat& truth, const LossConfig& cfg);

/// Tape node for the full objective including the weight penalty over the
/// bound parameters.
ad::Var total_loss(ad::Tape& tape, ad::Var pred, const ad::Mat& truth, const LossConfig& cfg,
                   const ModelParams& params, const Model::Bound& bound);

}  // namespace gazestab
