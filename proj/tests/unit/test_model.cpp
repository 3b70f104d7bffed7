#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gazestab/checkpoint.hpp"
#include "gazestab/errors.hpp"
#include "gazestab/model.hpp"

using namespace gazestab;
using ad::Mat;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  c.hist_len = 16;
  c.horizon = 8;
  return c;
}

TensorBatch random_batch(std::size_t b, std::size_t t, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  TensorBatch x(b, t, c);
  for (auto& v : x.data) v = n(rng);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t; ++j) x.time_at(i, j) = (static_cast<double>(j) - static_cast<double>(t)) / 60.0;
  return x;
}

}  // namespace

TEST_CASE("standardize examples") {
  TensorBatch x(1, 3, 2);
  for (std::size_t t = 0; t < 3; ++t) {
    x.at(0, t, 0) = 5.0;
    x.at(0, t, 1) = static_cast<double>(t + 1);
  }
  auto [xt, stats] = standardize(x, 1e-5);
  for (std::size_t t = 0; t < 3; ++t) CHECK(xt.at(0, t, 0) == 0.0);
  CHECK(xt.at(0, 0, 1) == doctest::Approx(-1.224744871));
  CHECK(xt.at(0, 1, 1) == doctest::Approx(0.0));
  CHECK(xt.at(0, 2, 1) == doctest::Approx(1.224744871));
  const TensorBatch back = destandardize(xt, stats);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(x.data[i]));

  const TensorBatch r = random_batch(3, 20, 4, 1);
  const TensorBatch rr = destandardize(standardize(r, 1e-5).first, standardize(r, 1e-5).second);
  for (std::size_t i = 0; i < r.data.size(); ++i) CHECK(std::abs(rr.data[i] - r.data[i]) < 1e-12);

  TensorBatch scaled = r;
  for (std::size_t t = 0; t < r.time; ++t) scaled.at(0, t, 2) *= 10.0;
  const TensorBatch a = standardize(r, 1e-5).first, b = standardize(scaled, 1e-5).first;
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));
}

TEST_CASE("positional encoding values") {
  const Mat pe = positional_encoding(4, 16);
  CHECK(pe(0, 0) == doctest::Approx(0.84147).epsilon(1e-5));
  CHECK(pe(0, 1) == doctest::Approx(0.54030).epsilon(1e-5));
  CHECK(pe(1, 2) == doctest::Approx(std::sin(2.0 / std::pow(10000.0, 2.0 / 16.0))));
}

TEST_CASE("embed of zero input equals the positional encoding") {
  ModelConfig cfg;
  const Model m(cfg, 3);
  TensorBatch z(2, 64, 4);
  const TensorBatch e = m.embed(z);
  CHECK(e.time == 64);
  CHECK(e.channels == 16);
  const Mat pe = positional_encoding(64, 16);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 64; ++t)
      for (std::size_t j = 0; j < 16; ++j) CHECK(e.at(b, t, j) == pe(t, j));
}

TEST_CASE("extend_horizon length and identity prefix") {
  ModelConfig cfg;
  const Model m(cfg, 0);
  const TensorBatch z = random_batch(2, 64, 16, 4);
  const TensorBatch e = m.extend_horizon(z);
  CHECK(e.time == 128);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 64; ++t)
      for (std::size_t j = 0; j < 16; ++j) CHECK(e.at(b, t, j) == z.at(b, t, j));
}

TEST_CASE("extend_horizon passes gradient to every output step") {
  const ModelConfig cfg = small_config();
  const Model m(cfg, 2);
  ad::Tape tape;
  auto p = m.bind(tape);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Mat x(cfg.hist_len, cfg.c_in);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  Mat times(cfg.hist_len, 1);
  for (Eigen::Index i = 0; i < times.rows(); ++i) times(i, 0) = -0.25 + i / 60.0;
  ad::Var out = m.forward(tape, p, tape.constant(x), times);
  ad::Var loss = ad::sum_squares(tape, out);
  tape.backward(loss);
  const Mat g = tape.grad(p.vars[m.params().index_of("predict_linear")]);
  for (Eigen::Index r = 0; r < g.rows(); ++r) CHECK(g.row(r).norm() > 0.0);
}

TEST_CASE("zero backbone weights give an identity backbone") {
  ModelConfig cfg;
  Model m(cfg, 5);
  for (auto& t : m.params().tensors())
    if (t.group == ParamGroup::backbone) t.value.setZero();
  const TensorBatch z = random_batch(1, 128, 16, 6);
  const TensorBatch y = m.temporal_backbone(z);
  REQUIRE(y.time == z.time);
  REQUIRE(y.channels == z.channels);
  for (std::size_t i = 0; i < z.data.size(); ++i) CHECK(y.data[i] == z.data[i]);
}

TEST_CASE("a sinusoid of period 16 selects period 16") {
  Mat x(128, 3);
  for (Eigen::Index t = 0; t < 128; ++t)
    for (Eigen::Index c = 0; c < 3; ++c) x(t, c) = std::sin(2 * M_PI * t / 16.0 + c) + 0.1 * std::cos(2 * M_PI * t / 64.0);
  const PeriodChoice pc = select_periods(x, 2);
  CHECK(pc.periods[0] == 16);
  CHECK(pc.freqs[0] == 8);
  // Oracle: direct DFT amplitude at every bin.
  std::size_t best = 0;
  double best_amp = -1;
  for (std::size_t f = 1; f <= 64; ++f) {
    double amp = 0;
    for (Eigen::Index c = 0; c < 3; ++c) {
      double re = 0, im = 0;
      for (Eigen::Index t = 0; t < 128; ++t) {
        re += x(t, c) * std::cos(2 * M_PI * f * t / 128.0);
        im -= x(t, c) * std::sin(2 * M_PI * f * t / 128.0);
      }
      amp += std::hypot(re, im);
    }
    if (amp > best_amp) best_amp = amp, best = f;
  }
  CHECK(best == pc.freqs[0]);
}

TEST_CASE("projection endpoints and convex combination") {
  ModelConfig cfg = small_config();
  Model m(cfg, 7);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Mat y(cfg.total_len(), cfg.d_model);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = n(rng);

  auto run = [&](double raw) {
    m.params().get("alpha_raw").value(0, 0) = raw;
    ad::Tape tape(false);
    auto p = m.bind(tape);
    auto br = m.project_branches(tape, p, tape.constant(y));
    return std::tuple{tape.value(m.project(tape, p, tape.constant(y))), tape.value(br.attention), tape.value(br.linear)};
  };
  {
    auto [out, a, l] = run(-800.0);
    CHECK((out - l).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    auto [out, a, l] = run(800.0);
    CHECK((out - a).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    auto [out, a, l] = run(std::log(0.4 / 0.6));
    CHECK((out - (0.4 * a + 0.6 * l)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.alpha() == doctest::Approx(0.4));
  }
}

TEST_CASE("forward shape, determinism and finiteness") {
  ModelConfig cfg;
  const Model m(cfg, 1);
  const TensorBatch x = random_batch(1, 64, 4, 2);
  const TensorBatch a = m.forward(x), b = m.forward(x);
  CHECK(a.batch == 1);
  CHECK(a.time == 64);
  CHECK(a.channels == 4);
  CHECK(a.data == b.data);

  const Model s(small_config(), 9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TensorBatch r = random_batch(3, 16, 4, seed);
    for (auto& v : r.data) v *= std::pow(10.0, static_cast<double>(seed % 7) - 3);
    const TensorBatch out = s.forward(r);
    CHECK(out.batch == 3);
    for (double v : out.data) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(m.forward(random_batch(1, 32, 4, 1)), ShapeError);
}

TEST_CASE("alpha stays within [0, 1]") {
  Model m(small_config(), 0);
  for (double raw : {-1e6, -40.0, -1.0, 0.0, 3.0, 1e6}) {
    m.params().get("alpha_raw").value(0, 0) = raw;
    CHECK(m.alpha() >= 0.0);
    CHECK(m.alpha() <= 1.0);
  }
}

TEST_CASE("model config validation") {
  ModelConfig c;
  c.n_heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.horizon = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(projection_mode_from_string("fused") == ProjectionMode::fused);
  CHECK_THROWS(projection_mode_from_string("bogus"));
}

TEST_CASE("checkpoint round trip gives bit-identical forward") {
  const ModelConfig cfg = small_config();
  Checkpoint ck{cfg, init_params(cfg, 4).quantized(), 3, 0.25};
  std::stringstream buf;
  save_checkpoint(buf, ck);
  CHECK(buf.str().rfind("TGZR1", 0) == 0);
  const Checkpoint back = load_checkpoint(buf);
  CHECK(back.epoch == 3);
  CHECK(back.val_loss == 0.25f);
  const Model a(ck.config, ck.params), b(back.config, back.params);
  const TensorBatch x = random_batch(2, 16, 4, 8);
  CHECK(a.forward(x).data == b.forward(x).data);

  std::string bytes = buf.str();
  bytes[2] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(load_checkpoint(bad), SchemaError);
  std::stringstream cut(buf.str().substr(0, buf.str().size() - 5));
  CHECK_THROWS(load_checkpoint(cut));
}
