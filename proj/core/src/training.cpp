#include "gazestab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "gazestab/errors.hpp"
#include "gazestab/parallel.hpp"
#include "gazestab/simulator.hpp"

namespace gazestab {

using ad::Mat;
using ad::Tape;
using ad::Var;

void TrainConfig::validate(const ModelConfig& mcfg) const {
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (window < 1) throw ConfigError("train.window must be >= 1");
  if (window > mcfg.horizon) throw ConfigError("train.window must not exceed model.horizon");
  if (hist_buffer < mcfg.hist_len) throw ConfigError("train.hist_buffer must be >= model.hist_len");
  if (min_history < 1 || min_history > hist_buffer) throw ConfigError("train.min_history must lie in [1, train.hist_buffer]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in [0, 1)");
  if (!(sample_rate > 0.0)) throw ConfigError("train.sample_rate must be > 0");
}

double cosine_lr(double lr0, std::size_t epoch, std::size_t epochs) {
  if (epochs == 0) throw ConfigError("cosine_lr: epochs must be >= 1");
  return lr0 / 2.0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

Mat features(const GazeSample& s) {
  Mat row(1, 4);
  row << s.pos.x, s.pos.y, s.lin_speed, s.ang_speed;
  return row;
}

namespace {

std::string group_of(const std::string& id) { return id.substr(0, id.find("#syn")); }

}  // namespace

std::optional<Example> make_example(const Trial& trial, std::size_t hist_buffer, std::size_t horizon,
                                    std::size_t min_history, double sample_rate) {
  if (!trial.fixation_onset) return std::nullopt;
  const std::size_t onset = *trial.fixation_onset;
  if (onset >= trial.samples.size() || onset < min_history || onset == 0) return std::nullopt;
  Example ex;
  ex.trial_id = trial.id;
  ex.group = group_of(trial.id);
  ex.goal = trial.target;
  ex.history.resize(static_cast<Eigen::Index>(hist_buffer), 4);
  ex.history_times.resize(static_cast<Eigen::Index>(hist_buffer), 1);
  const double t0 = trial.samples[onset].t;
  const std::size_t real = std::min(onset, hist_buffer);
  ex.padded = hist_buffer - real;
  for (std::size_t r = 0; r < hist_buffer; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    if (r < ex.padded) {
      // Edge padding: repeat the first real sample at the nominal spacing.
      const GazeSample& first = trial.samples[onset - real];
      ex.history.row(row) = features(first);
      ex.history_times(row, 0) =
          first.t - t0 - static_cast<double>(ex.padded - r) / sample_rate;
    } else {
      const GazeSample& s = trial.samples[onset - hist_buffer + r];
      ex.history.row(row) = features(s);
      ex.history_times(row, 0) = s.t - t0;
    }
  }
  const std::size_t n = std::min(horizon, trial.samples.size() - onset);
  ex.target.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    ex.target(static_cast<Eigen::Index>(i), 0) = trial.samples[onset + i].pos.x;
    ex.target(static_cast<Eigen::Index>(i), 1) = trial.samples[onset + i].pos.y;
  }
  return ex;
}

std::size_t rollout_steps(std::size_t window, std::size_t horizon) {
  if (window < 1) throw ConfigError("rollout: window must be >= 1");
  return (horizon + window - 1) / window;
}

namespace {

void check_rollout(std::size_t history_rows, std::size_t times_rows, std::size_t hist_len, std::size_t window,
                   std::size_t horizon) {
  if (window < 1) throw ConfigError("rollout: window must be >= 1");
  if (window > horizon) throw ConfigError("rollout: window must not exceed the horizon");
  if (history_rows < hist_len) throw ShapeError("rollout: history shorter than the model input length");
  if (times_rows != history_rows) throw ShapeError("rollout: history and times differ in length");
}

Mat next_times(const Mat& times, std::size_t count, double sample_rate) {
  const double last = times(times.rows() - 1, 0);
  Mat out(static_cast<Eigen::Index>(count), 1);
  for (std::size_t i = 0; i < count; ++i) out(static_cast<Eigen::Index>(i), 0) = last + static_cast<double>(i + 1) / sample_rate;
  return out;
}

Mat shift_in(const Mat& buffer, const Mat& rows) {
  const Eigen::Index n = buffer.rows();
  Mat out(n, buffer.cols());
  if (rows.rows() >= n) {
    out = rows.bottomRows(n);
  } else {
    out.topRows(n - rows.rows()) = buffer.bottomRows(n - rows.rows());
    out.bottomRows(rows.rows()) = rows;
  }
  return out;
}

}  // namespace

Mat sliding_rollout(const Forecaster& model, const Mat& history, const Mat& history_times, std::size_t hist_len,
                    std::size_t window, std::size_t horizon, double sample_rate) {
  check_rollout(static_cast<std::size_t>(history.rows()), static_cast<std::size_t>(history_times.rows()), hist_len,
                window, horizon);
  const auto T = static_cast<Eigen::Index>(hist_len);
  Mat x = history.bottomRows(T);
  Mat times = history_times.bottomRows(T);
  Mat out(static_cast<Eigen::Index>(horizon), history.cols());
  std::size_t produced = 0;
  while (produced < horizon) {
    const Mat pred = model(x, times);
    if (static_cast<std::size_t>(pred.rows()) < window || pred.cols() != history.cols())
      throw ShapeError("rollout: forecaster returned an unexpected shape");
    const std::size_t take = std::min(window, horizon - produced);
    out.middleRows(static_cast<Eigen::Index>(produced), static_cast<Eigen::Index>(take)) =
        pred.topRows(static_cast<Eigen::Index>(take));
    produced += take;
    if (produced < horizon) {
      const Mat seg = pred.topRows(static_cast<Eigen::Index>(window));
      times = shift_in(times, next_times(times, window, sample_rate));
      x = shift_in(x, seg);
    }
  }
  return out;
}

Var sliding_rollout(Tape& tape, const Model& model, const Model::Bound& bound, const Mat& history,
                    const Mat& history_times, std::size_t window, double sample_rate, bool detach,
                    const std::vector<PeriodTrace>* pinned, std::vector<PeriodTrace>* record) {
  const ModelConfig& cfg = model.config();
  check_rollout(static_cast<std::size_t>(history.rows()), static_cast<std::size_t>(history_times.rows()),
                cfg.hist_len, window, cfg.horizon);
  const std::size_t T = cfg.hist_len;
  Var x = tape.constant(history.bottomRows(static_cast<Eigen::Index>(T)));
  Mat times = history_times.bottomRows(static_cast<Eigen::Index>(T));
  Var out{};
  bool have_out = false;
  std::size_t produced = 0;
  std::size_t call = 0;
  while (produced < cfg.horizon) {
    ForwardOptions opts;
    if (pinned && call < pinned->size()) opts.pinned = &(*pinned)[call];
    if (record) {
      record->emplace_back();
      opts.record = &record->back();
    }
    Var pred = model.forward(tape, bound, x, times, opts);
    ++call;
    const std::size_t take = std::min(window, cfg.horizon - produced);
    Var part = ad::rows(tape, pred, 0, take);
    out = have_out ? ad::concat_rows(tape, out, part) : part;
    have_out = true;
    produced += take;
    if (produced < cfg.horizon) {
      Var seg = ad::rows(tape, pred, 0, window);
      if (detach) seg = tape.constant(tape.value(seg));
      times = shift_in(times, next_times(times, window, sample_rate));
      x = window < T ? ad::concat_rows(tape, ad::rows(tape, x, window, T - window), seg)
                     : ad::rows(tape, seg, window - T, T);
    }
  }
  return out;
}

Mat rollout(const Model& model, const Mat& history, const Mat& history_times, std::size_t window,
            double sample_rate) {
  const Forecaster f = [&model](const Mat& x, const Mat& t) { return model.predict(x, t); };
  return sliding_rollout(f, history, history_times, model.config().hist_len, window, model.config().horizon,
                         sample_rate);
}

Adam::Adam(const ModelParams& shape_like, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& t : shape_like.tensors()) {
    m_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
    v_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
  }
}

void Adam::step(ModelParams& params, const std::vector<Mat>& grads, double lr) {
  if (grads.size() != m_.size() || params.size() != m_.size()) throw ShapeError("Adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    auto& w = params.tensors()[i].value;
    w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

ExampleGrad example_gradient(const Model& model, const Example& ex, const LossConfig& lcfg, std::size_t window,
                             double sample_rate, bool detach) {
  Tape tape;
  const Model::Bound bound = model.bind(tape);
  Var pred = sliding_rollout(tape, model, bound, ex.history, ex.history_times, window, sample_rate, detach);
  Var loss = total_loss(tape, pred, ex.target, lcfg, model.params(), bound);
  tape.backward(loss);
  ExampleGrad out;
  out.loss = tape.value(loss)(0, 0);
  out.grads.reserve(bound.vars.size());
  for (Var v : bound.vars) out.grads.push_back(tape.grad(v));
  return out;
}

double example_loss(const Model& model, const Example& ex, const LossConfig& lcfg, std::size_t window,
                    double sample_rate) {
  const Mat pred = rollout(model, ex.history, ex.history_times, window, sample_rate);
  return total_loss(pred, ex.target, lcfg, model.params());
}

void write_train_log(std::ostream& out, const TrainLog& log) {
  out << "epoch,train_loss,val_loss,lr,alpha\n";
  out.precision(10);
  for (const auto& r : log.epochs)
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << ',' << r.alpha << '\n';
}

std::pair<std::vector<Example>, std::vector<Example>> split_examples(std::vector<Example> examples,
                                                                     double val_fraction, std::uint64_t seed) {
  std::vector<std::string> groups;
  for (const auto& e : examples) groups.push_back(e.group);
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(groups.size())));
  if (val_fraction > 0.0 && groups.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, groups.size() - 1);
  std::sort(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Example> train_set, val_set;
  for (auto& e : examples) {
    const bool is_val = std::binary_search(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_val), e.group);
    (is_val ? val_set : train_set).push_back(std::move(e));
  }
  return {std::move(train_set), std::move(val_set)};
}

TrainResult train(const std::vector<Trial>& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const LossConfig& lcfg) {
  mcfg.validate();
  tcfg.validate(mcfg);
  lcfg.validate();

  TrainLog log;
  std::vector<Example> examples;
  for (const Trial& trial : corpus) {
    auto ex = make_example(trial, tcfg.hist_buffer, mcfg.horizon, tcfg.min_history, tcfg.sample_rate);
    if (!ex || static_cast<std::size_t>(ex->target.rows()) < mcfg.horizon) {
      ++log.n_skipped;
      continue;
    }
    examples.push_back(std::move(*ex));
  }
  auto [train_set, val_set] = split_examples(std::move(examples), tcfg.val_fraction, split_seed(tcfg.seed, 1));
  log.n_train = train_set.size();
  log.n_val = val_set.size();
  if (train_set.size() < tcfg.batch_size)
    throw DomainError("training set has " + std::to_string(train_set.size()) + " examples, fewer than one batch of " +
                      std::to_string(tcfg.batch_size));

  Model model(mcfg, tcfg.seed);
  Adam adam(model.params());
  std::mt19937_64 rng(split_seed(tcfg.seed, 2));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  ModelParams best = model.params().quantized();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = cosine_lr(tcfg.lr0, epoch, tcfg.epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t count = std::min(tcfg.batch_size, order.size() - start);
      std::vector<ExampleGrad> results(count);
      parallel_for(count, tcfg.threads, [&](std::size_t i) {
        results[i] = example_gradient(model, train_set[order[start + i]], lcfg, tcfg.window, tcfg.sample_rate,
                                      tcfg.detach_windows);
      });
      std::vector<Mat> grads = std::move(results[0].grads);
      train_sum += results[0].loss;
      for (std::size_t i = 1; i < count; ++i) {
        for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += results[i].grads[p];
        train_sum += results[i].loss;
      }
      for (auto& g : grads) g /= static_cast<double>(count);
      adam.step(model.params(), grads, lr);
    }
    if (!model.params().all_finite()) throw DomainError("training diverged: non-finite parameters at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(order.size());
    rec.lr = lr;
    rec.alpha = model.alpha();
    if (val_set.empty()) {
      rec.val_loss = rec.train_loss;
    } else {
      std::vector<double> losses(val_set.size());
      parallel_for(val_set.size(), tcfg.threads, [&](std::size_t i) {
        losses[i] = example_loss(model, val_set[i], lcfg, tcfg.window, tcfg.sample_rate);
      });
      double s = 0.0;
      for (double l : losses) s += l;
      rec.val_loss = s / static_cast<double>(losses.size());
    }
    log.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = model.params().quantized();
      log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      log.stopped_early = true;
      break;
    }
  }

  TrainResult result;
  result.checkpoint = Checkpoint{mcfg, std::move(best), log.best_epoch, best_val};
  result.log = std::move(log);
  return result;
}

}  // namespace gazestab
