#include "gazestab/loss.hpp"

#include <cmath>
#include <vector>

#include "gazestab/errors.hpp"

namespace gazestab {

using ad::Mat;

void LossConfig::validate() const {
  if (!(lambda_c >= 0.0)) throw ConfigError("loss.lambda_c must be >= 0");
  if (!(lambda_v >= 0.0)) throw ConfigError("loss.lambda_v must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("loss.lambda must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("loss.weight_decay must be >= 0");
  if (!(velocity_dt > 0.0)) throw ConfigError("loss.velocity_dt must be > 0");
}

namespace {

void check_points(const Mat& pred, const Mat& truth, std::size_t min_rows) {
  if (pred.rows() != truth.rows() || pred.cols() != 2 || truth.cols() != 2)
    throw ShapeError("loss: pred and truth must both be [n x 2] with equal n");
  if (static_cast<std::size_t>(pred.rows()) < min_rows) {
    if (min_rows <= 1) throw ShapeError("loss: empty point sets");
    throw InsufficientDataError("loss: need at least " + std::to_string(min_rows) + " points");
  }
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double loss_comb(const Mat& pred, const Mat& truth, double lambda_c, double lambda_v, Mat* grad) {
  check_points(pred, truth, 1);
  const auto n = static_cast<double>(pred.rows());
  const Mat diff = pred - truth;
  const double mse = diff.squaredNorm() / n;

  const Eigen::RowVector2d mu_p = pred.colwise().mean();
  const Eigen::RowVector2d mu_t = truth.colwise().mean();
  const Eigen::RowVector2d dmu = mu_p - mu_t;
  const double center = dmu.squaredNorm();

  const Mat cp = pred.rowwise() - mu_p;
  const Mat ct = truth.rowwise() - mu_t;
  const Eigen::RowVector2d var_p = cp.colwise().squaredNorm() / n;
  const Eigen::RowVector2d var_t = ct.colwise().squaredNorm() / n;
  const double dispersion = std::abs(var_p(0) - var_t(0)) + std::abs(var_p(1) - var_t(1));

  if (grad) {
    *grad = (2.0 / n) * diff;
    grad->rowwise() += (2.0 * lambda_c / n) * dmu;
    for (int a = 0; a < 2; ++a)
      grad->col(a) += (lambda_v * sign(var_p(a) - var_t(a)) * 2.0 / n) * cp.col(a);
  }
  return mse + lambda_c * center + lambda_v * dispersion;
}

double loss_velocity(const Mat& pred, const Mat& truth, double dt, Mat* grad) {
  check_points(pred, truth, 2);
  if (!(dt > 0.0)) throw ConfigError("loss_velocity: dt must be > 0");
  const Eigen::Index n = pred.rows();
  const auto steps = static_cast<double>(n - 1);
  const Mat vp = (pred.bottomRows(n - 1) - pred.topRows(n - 1)) / dt;
  const Mat vt = (truth.bottomRows(n - 1) - truth.topRows(n - 1)) / dt;
  const Mat dv = vp - vt;
  if (grad) {
    const Mat g = (2.0 / (steps * dt)) * dv;
    grad->setZero(n, 2);
    grad->bottomRows(n - 1) += g;
    grad->topRows(n - 1) -= g;
  }
  return dv.squaredNorm() / steps;
}

double data_loss(const Mat& pred, const Mat& truth, const LossConfig& cfg, Mat* grad) {
  if (pred.cols() < 2) throw ShapeError("data_loss: prediction needs at least 2 channels");
  const Mat pos = pred.leftCols(2);
  const double lc = cfg.use_center ? cfg.lambda_c : 0.0;
  const double lv = cfg.use_dispersion ? cfg.lambda_v : 0.0;
  Mat gc, gv;
  double value = cfg.lambda * loss_comb(pos, truth, lc, lv, grad ? &gc : nullptr);
  if (cfg.lambda < 1.0) value += (1.0 - cfg.lambda) * loss_velocity(pos, truth, cfg.velocity_dt, grad ? &gv : nullptr);
  if (grad) {
    grad->setZero(pred.rows(), pred.cols());
    grad->leftCols(2) = cfg.lambda * gc;
    if (cfg.lambda < 1.0) grad->leftCols(2) += (1.0 - cfg.lambda) * gv;
  }
  return value;
}

double weight_penalty(const ModelParams& params, double weight_decay) {
  double s = 0.0;
  for (const auto& t : params.tensors())
    if (t.decay) s += t.value.squaredNorm();
  return weight_decay * s;
}

double total_loss(const Mat& pred, const Mat& truth, const LossConfig& cfg, const ModelParams& params) {
  return data_loss(pred, truth, cfg) + weight_penalty(params, cfg.weight_decay);
}

ad::Var data_loss(ad::Tape& tape, ad::Var pred, const Mat& truth, const LossConfig& cfg) {
  return ad::scalar_fn(tape, pred, [truth, cfg](const Mat& value, Mat* grad) {
    return data_loss(value, truth, cfg, grad);
  });
}

ad::Var total_loss(ad::Tape& tape, ad::Var pred, const Mat& truth, const LossConfig& cfg, const ModelParams& params,
                   const Model::Bound& bound) {
  ad::Var loss = data_loss(tape, pred, truth, cfg);
  if (cfg.weight_decay == 0.0) return loss;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.tensors()[i].decay) continue;
    loss = ad::add(tape, loss, ad::scale(tape, ad::sum_squares(tape, bound.vars[i]), cfg.weight_decay));
  }
  return loss;
}

}  // namespace gazestab
