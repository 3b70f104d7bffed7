#include "gazestab/autodiff.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "gazestab/errors.hpp"

namespace gazestab::ad {

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, false, false});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, record_, false});
  return Var{nodes_.size() - 1};
}

Var Tape::push(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(Mat value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (record_)
    for (Var v : inputs) needs = needs || nodes_[v.id].requires_grad;
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(backward) : nullptr, needs, false});
  return Var{nodes_.size() - 1};
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Mat& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw ShapeError("gradient shape does not match node value");
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var out) {
  if (!record_) throw StateError("backward on a tape that does not record");
  if (nodes_[out.id].value.size() != 1) throw ShapeError("backward needs a scalar output");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(out, Mat::Ones(1, 1));
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  return t.push(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  return t.push(t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Mat& av = t.value(a);
  const Mat& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw ShapeError("add_row: shape mismatch");
  Mat out = av.rowwise() + rv.row(0);
  return t.push(std::move(out), {a, row}, [a, row](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(row, g.colwise().sum());
  });
}

Var add_const(Tape& t, Var a, const Mat& c) {
  require_same_shape(t.value(a), c, "add_const");
  return t.push(t.value(a) + c, {a}, [a](Tape& tp, const Mat& g) { tp.accumulate(a, g); });
}

Var scale(Tape& t, Var a, double s) {
  return t.push(s * t.value(a), {a}, [a, s](Tape& tp, const Mat& g) { tp.accumulate(a, s * g); });
}

Var matmul(Tape& t, Var a, Var b) {
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat out = av * bv;
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var gelu(Tape& t, Var a) {
  const Mat& x = t.value(a);
  Mat out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  return t.push(std::move(out), {a}, [a](Tape& tp, const Mat& g) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Mat d = tp.value(a).unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    tp.accumulate(a, g.cwiseProduct(d));
  });
}

Var sigmoid(Tape& t, Var a) {
  Mat out = t.value(a).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Mat s = out;
  return t.push(std::move(out), {a}, [a, s](Tape& tp, const Mat& g) {
    tp.accumulate(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var rows(Tape& t, Var a, std::size_t start, std::size_t count) {
  const Mat& av = t.value(a);
  if (start + count > static_cast<std::size_t>(av.rows())) throw ShapeError("rows: out of range");
  Mat out = av.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  const Eigen::Index r = av.rows();
  const Eigen::Index c = av.cols();
  return t.push(std::move(out), {a}, [a, start, count, r, c](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(r, c);
    full.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) = g;
    tp.accumulate(a, full);
  });
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column mismatch");
  Mat out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Eigen::Index ra = av.rows();
  const Eigen::Index rb = bv.rows();
  return t.push(std::move(out), {a, b}, [a, b, ra, rb](Tape& tp, const Mat& g) {
    tp.accumulate(a, g.topRows(ra));
    tp.accumulate(b, g.bottomRows(rb));
  });
}

Var pad_rows(Tape& t, Var a, std::size_t total_rows) {
  const Mat& av = t.value(a);
  const auto r = av.rows();
  if (static_cast<Eigen::Index>(total_rows) < r) throw ShapeError("pad_rows: target shorter than input");
  Mat out = Mat::Zero(static_cast<Eigen::Index>(total_rows), av.cols());
  out.topRows(r) = av;
  return t.push(std::move(out), {a}, [a, r](Tape& tp, const Mat& g) { tp.accumulate(a, g.topRows(r)); });
}

Var mean_of(Tape& t, std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("mean_of: no inputs");
  Mat out = t.value(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require_same_shape(out, t.value(xs[i]), "mean_of");
    out += t.value(xs[i]);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  out *= inv;
  std::vector<Var> inputs(xs.begin(), xs.end());
  return t.push(std::move(out), xs, [inputs, inv](Tape& tp, const Mat& g) {
    for (Var v : inputs) tp.accumulate(v, inv * g);
  });
}

Var sum_squares(Tape& t, Var a) {
  Mat out(1, 1);
  out(0, 0) = t.value(a).squaredNorm();
  return t.push(std::move(out), {a}, [a](Tape& tp, const Mat& g) {
    tp.accumulate(a, (2.0 * g(0, 0)) * tp.value(a));
  });
}

namespace {

// Kernel taps that can reach the image at all. On short images (one or two
// folded cycles) most rows of a k x k kernel only ever see zero padding.
struct TapRange {
  std::size_t i0, i1, j0, j1;
  std::size_t rows() const { return i1 - i0; }
  std::size_t cols() const { return j1 - j0; }
  std::size_t count() const { return rows() * cols(); }
};

TapRange live_taps(std::size_t h, std::size_t w, std::size_t k) {
  const std::size_t r = k / 2;
  auto range = [&](std::size_t n, std::size_t& lo, std::size_t& hi) {
    lo = r >= n ? r - (n - 1) : 0;
    hi = std::min(k, r + n);
  };
  TapRange t{};
  range(h, t.i0, t.i1);
  range(w, t.j0, t.j1);
  return t;
}

// im2col for a row-major image [h*w x c]. Rows of the result are output
// pixels, columns are (tap_i, tap_j, channel) over the live taps.
Mat im2col(const Mat& img, std::size_t h, std::size_t w, std::size_t k, const TapRange& taps) {
  const auto c = static_cast<std::size_t>(img.cols());
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(taps.count() * c));
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double* dst = cols.row(static_cast<Eigen::Index>(i * w + j)).data();
      for (std::size_t di = taps.i0; di < taps.i1; ++di) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + di) - r;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t dj = taps.j0; dj < taps.j1; ++dj) {
          const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j + dj) - r;
          if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = img.row(si * static_cast<std::ptrdiff_t>(w) + sj).data();
          std::copy(src, src + c, dst + ((di - taps.i0) * taps.cols() + (dj - taps.j0)) * c);
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col.
Mat col2im(const Mat& cols, std::size_t h, std::size_t w, std::size_t k, std::size_t c, const TapRange& taps) {
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Mat img = Mat::Zero(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* src = cols.row(static_cast<Eigen::Index>(i * w + j)).data();
      for (std::size_t di = taps.i0; di < taps.i1; ++di) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + di) - r;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t dj = taps.j0; dj < taps.j1; ++dj) {
          const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j + dj) - r;
          if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
          double* dst = img.row(si * static_cast<std::ptrdiff_t>(w) + sj).data();
          const double* s = src + ((di - taps.i0) * taps.cols() + (dj - taps.j0)) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += s[ch];
        }
      }
    }
  }
  return img;
}

// Rows of a [k*k*c x out] kernel that belong to the live taps, and back.
Mat gather_taps(const Mat& kernel, std::size_t k, std::size_t c, const TapRange& taps) {
  Mat out(static_cast<Eigen::Index>(taps.count() * c), kernel.cols());
  const auto n = static_cast<Eigen::Index>(c);
  for (std::size_t di = taps.i0; di < taps.i1; ++di)
    for (std::size_t dj = taps.j0; dj < taps.j1; ++dj)
      out.middleRows(static_cast<Eigen::Index>(((di - taps.i0) * taps.cols() + (dj - taps.j0)) * c), n) =
          kernel.middleRows(static_cast<Eigen::Index>((di * k + dj) * c), n);
  return out;
}

Mat scatter_taps(const Mat& rows, std::size_t k, std::size_t c, const TapRange& taps) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(k * k * c), rows.cols());
  const auto n = static_cast<Eigen::Index>(c);
  for (std::size_t di = taps.i0; di < taps.i1; ++di)
    for (std::size_t dj = taps.j0; dj < taps.j1; ++dj)
      out.middleRows(static_cast<Eigen::Index>((di * k + dj) * c), n) =
          rows.middleRows(static_cast<Eigen::Index>(((di - taps.i0) * taps.cols() + (dj - taps.j0)) * c), n);
  return out;
}

}  // namespace

Var conv1d_same(Tape& t, Var x, Var w, std::size_t kernel) {
  const Mat& xv = t.value(x);
  const Mat& wv = t.value(w);
  const auto c_in = static_cast<std::size_t>(xv.cols());
  if (kernel % 2 == 0) throw ShapeError("conv1d_same: kernel must be odd");
  if (static_cast<std::size_t>(wv.rows()) != kernel * c_in) throw ShapeError("conv1d_same: weight rows != k * c_in");
  const auto len = static_cast<std::size_t>(xv.rows());
  // A 1D conv is the 2D conv of a [len x 1] image with a k x 1 kernel; the
  // plain loop below avoids the square-kernel restriction.
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  auto cols = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(kernel * c_in)));
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < kernel; ++j) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(i + j) - r;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
      cols->row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(j * c_in), static_cast<Eigen::Index>(c_in)) = xv.row(s);
    }
  Mat out = (*cols) * wv;
  return t.push(std::move(out), {x, w}, [x, w, cols, kernel, c_in, len, r](Tape& tp, const Mat& g) {
    if (tp.requires_grad(w)) tp.accumulate(w, cols->transpose() * g);
    if (tp.requires_grad(x)) {
      Mat gcols = g * tp.value(w).transpose();
      Mat gx = Mat::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(c_in));
      for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < kernel; ++j) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(i + j) - r;
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
          gx.row(s) += gcols.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(j * c_in), static_cast<Eigen::Index>(c_in));
        }
      tp.accumulate(x, gx);
    }
  });
}

Var conv2d_same(Tape& t, Var image, std::size_t height, std::size_t width, Var kernel, Var bias,
                std::size_t k) {
  const Mat& img = t.value(image);
  const Mat& kv = t.value(kernel);
  const auto c_in = static_cast<std::size_t>(img.cols());
  if (static_cast<std::size_t>(img.rows()) != height * width) throw ShapeError("conv2d_same: image rows != h * w");
  if (static_cast<std::size_t>(kv.rows()) != k * k * c_in) throw ShapeError("conv2d_same: kernel rows != k * k * c_in");
  if (t.value(bias).rows() != 1 || t.value(bias).cols() != kv.cols()) throw ShapeError("conv2d_same: bias shape");
  const TapRange taps = live_taps(height, width, k);
  const bool full = taps.count() == k * k;
  auto cols = std::make_shared<Mat>(im2col(img, height, width, k, taps));
  Mat out = full ? Mat((*cols) * kv) : Mat((*cols) * gather_taps(kv, k, c_in, taps));
  out.rowwise() += t.value(bias).row(0);
  return t.push(std::move(out), {image, kernel, bias},
                [image, kernel, bias, cols, height, width, k, c_in, taps, full](Tape& tp, const Mat& g) {
                  if (tp.requires_grad(kernel)) {
                    const Mat gk = cols->transpose() * g;
                    tp.accumulate(kernel, full ? gk : scatter_taps(gk, k, c_in, taps));
                  }
                  if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
                  if (tp.requires_grad(image)) {
                    const Mat& kv = tp.value(kernel);
                    const Mat live = full ? kv : gather_taps(kv, k, c_in, taps);
                    tp.accumulate(image, col2im(g * live.transpose(), height, width, k, c_in, taps));
                  }
                });
}

Var embed_kernels(Tape& t, std::span<const Var> kernels, std::span<const std::size_t> sizes,
                  std::size_t c_in) {
  if (kernels.empty() || kernels.size() != sizes.size()) throw ShapeError("embed_kernels: size list mismatch");
  std::size_t kmax = 0;
  for (std::size_t s : sizes) kmax = std::max(kmax, s);
  const Eigen::Index c_out = t.value(kernels[0]).cols();
  const double inv = 1.0 / static_cast<double>(kernels.size());
  Mat out = Mat::Zero(static_cast<Eigen::Index>(kmax * kmax * c_in), c_out);
  auto tap_row = [kmax, c_in](std::size_t s, std::size_t di, std::size_t dj) {
    const std::size_t off = (kmax - s) / 2;
    return static_cast<Eigen::Index>(((di + off) * kmax + (dj + off)) * c_in);
  };
  for (std::size_t n = 0; n < kernels.size(); ++n) {
    const Mat& kv = t.value(kernels[n]);
    const std::size_t s = sizes[n];
    if (s % 2 == 0 || static_cast<std::size_t>(kv.rows()) != s * s * c_in || kv.cols() != c_out)
      throw ShapeError("embed_kernels: kernel shape");
    for (std::size_t di = 0; di < s; ++di)
      for (std::size_t dj = 0; dj < s; ++dj)
        out.middleRows(tap_row(s, di, dj), static_cast<Eigen::Index>(c_in)) +=
            inv * kv.middleRows(static_cast<Eigen::Index>((di * s + dj) * c_in), static_cast<Eigen::Index>(c_in));
  }
  std::vector<Var> ins(kernels.begin(), kernels.end());
  std::vector<std::size_t> szs(sizes.begin(), sizes.end());
  return t.push(std::move(out), kernels, [ins, szs, c_in, inv, tap_row](Tape& tp, const Mat& g) {
    for (std::size_t n = 0; n < ins.size(); ++n) {
      if (!tp.requires_grad(ins[n])) continue;
      const std::size_t s = szs[n];
      Mat gk(static_cast<Eigen::Index>(s * s * c_in), g.cols());
      for (std::size_t di = 0; di < s; ++di)
        for (std::size_t dj = 0; dj < s; ++dj)
          gk.middleRows(static_cast<Eigen::Index>((di * s + dj) * c_in), static_cast<Eigen::Index>(c_in)) =
              inv * g.middleRows(tap_row(s, di, dj), static_cast<Eigen::Index>(c_in));
      tp.accumulate(ins[n], gk);
    }
  });
}

namespace {

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

// FFTW planning is not thread-safe; execution with the new-array interface is.
fftw_plan r2c_plan(int n) {
  static std::map<int, fftw_plan> plans;
  std::lock_guard lock(fftw_mutex());
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan p = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, p);
  return p;
}

}  // namespace

std::vector<double> amplitude_spectrum(const Mat& x) {
  const int n = static_cast<int>(x.rows());
  if (n < 2) throw ShapeError("amplitude_spectrum: need at least 2 rows");
  const std::size_t bins = static_cast<std::size_t>(n / 2 + 1);
  fftw_plan plan = r2c_plan(n);
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(bins);
  std::vector<double> amp(bins, 0.0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (int i = 0; i < n; ++i) in[i] = x(i, c);
    fftw_execute_dft_r2c(plan, in, out);
    for (std::size_t f = 0; f < bins; ++f) amp[f] += std::hypot(out[f][0], out[f][1]);
  }
  fftw_free(in);
  fftw_free(out);
  for (double& a : amp) a /= static_cast<double>(x.cols());
  return amp;
}

Var spectral_amplitude(Tape& t, Var x, std::span<const std::size_t> freqs) {
  const Mat& xv = t.value(x);
  const auto len = xv.rows();
  const auto ch = xv.cols();
  const std::size_t k = freqs.size();
  // Per (frequency, channel) real and imaginary parts.
  auto re = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(k), ch));
  auto im = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(k), ch));
  Mat out = Mat::Zero(1, static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    for (Eigen::Index r = 0; r < len; ++r) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(freqs[i]) * static_cast<double>(r) / static_cast<double>(len);
      (*re).row(static_cast<Eigen::Index>(i)) += std::cos(theta) * xv.row(r);
      (*im).row(static_cast<Eigen::Index>(i)) -= std::sin(theta) * xv.row(r);
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < ch; ++c) sum += std::hypot((*re)(static_cast<Eigen::Index>(i), c), (*im)(static_cast<Eigen::Index>(i), c));
    out(0, static_cast<Eigen::Index>(i)) = sum / static_cast<double>(ch);
  }
  std::vector<std::size_t> fs(freqs.begin(), freqs.end());
  return t.push(std::move(out), {x}, [x, fs, re, im, len, ch](Tape& tp, const Mat& g) {
    Mat gx = Mat::Zero(len, ch);
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (Eigen::Index c = 0; c < ch; ++c) {
        const double mag = std::hypot((*re)(ii, c), (*im)(ii, c));
        if (mag == 0.0) continue;
        const double coef = g(0, ii) / static_cast<double>(ch) / mag;
        for (Eigen::Index r = 0; r < len; ++r) {
          const double theta = 2.0 * std::numbers::pi * static_cast<double>(fs[i]) * static_cast<double>(r) / static_cast<double>(len);
          gx(r, c) += coef * ((*re)(ii, c) * std::cos(theta) - (*im)(ii, c) * std::sin(theta));
        }
      }
    }
    tp.accumulate(x, gx);
  });
}

Var softmax_row(Tape& t, Var a) {
  const Mat& av = t.value(a);
  if (av.rows() != 1) throw ShapeError("softmax_row: expects a single row");
  Mat out = (av.array() - av.maxCoeff()).exp().matrix();
  out /= out.sum();
  Mat s = out;
  return t.push(std::move(out), {a}, [a, s](Tape& tp, const Mat& g) {
    const double dot = g.cwiseProduct(s).sum();
    tp.accumulate(a, s.cwiseProduct((g.array() - dot).matrix()));
  });
}

Var weighted_sum(Tape& t, std::span<const Var> branches, Var weights) {
  const Mat& wv = t.value(weights);
  if (wv.rows() != 1 || static_cast<std::size_t>(wv.cols()) != branches.size())
    throw ShapeError("weighted_sum: weight count mismatch");
  Mat out = wv(0, 0) * t.value(branches[0]);
  for (std::size_t i = 1; i < branches.size(); ++i) out += wv(0, static_cast<Eigen::Index>(i)) * t.value(branches[i]);
  std::vector<Var> ins(branches.begin(), branches.end());
  std::vector<Var> all = ins;
  all.push_back(weights);
  return t.push(std::move(out), all, [ins, weights](Tape& tp, const Mat& g) {
    const Mat& w = tp.value(weights);
    Mat gw(1, static_cast<Eigen::Index>(ins.size()));
    for (std::size_t i = 0; i < ins.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      tp.accumulate(ins[i], w(0, ii) * g);
      gw(0, ii) = g.cwiseProduct(tp.value(ins[i])).sum();
    }
    tp.accumulate(weights, gw);
  });
}

Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads) {
  const Mat& qv = t.value(q);
  const Mat& kv = t.value(k);
  const Mat& vv = t.value(v);
  require_same_shape(qv, kv, "attention");
  require_same_shape(qv, vv, "attention");
  const auto d = static_cast<std::size_t>(qv.cols());
  if (heads == 0 || d % heads != 0) throw ConfigError("attention: d_model not divisible by heads");
  const auto hd = static_cast<Eigen::Index>(d / heads);
  const double scale_f = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto n = qv.rows();
  auto probs = std::make_shared<std::vector<Mat>>(heads);
  Mat out(n, static_cast<Eigen::Index>(d));
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * hd;
    Mat s = scale_f * (qv.middleCols(c0, hd) * kv.middleCols(c0, hd).transpose());
    for (Eigen::Index r = 0; r < n; ++r) {
      auto row = s.row(r);
      row = (row.array() - row.maxCoeff()).exp().matrix();
      row /= row.sum();
    }
    out.middleCols(c0, hd) = s * vv.middleCols(c0, hd);
    (*probs)[h] = std::move(s);
  }
  return t.push(std::move(out), {q, k, v}, [q, k, v, probs, heads, hd, scale_f, n, d](Tape& tp, const Mat& g) {
    const Mat& qv2 = tp.value(q);
    const Mat& kv2 = tp.value(k);
    const Mat& vv2 = tp.value(v);
    Mat gq = Mat::Zero(n, static_cast<Eigen::Index>(d));
    Mat gk = Mat::Zero(n, static_cast<Eigen::Index>(d));
    Mat gv = Mat::Zero(n, static_cast<Eigen::Index>(d));
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * hd;
      const Mat& a = (*probs)[h];
      const Mat go = g.middleCols(c0, hd);
      gv.middleCols(c0, hd) = a.transpose() * go;
      Mat ga = go * vv2.middleCols(c0, hd).transpose();
      Mat gs = a.cwiseProduct((ga.colwise() - ga.cwiseProduct(a).rowwise().sum()));
      gq.middleCols(c0, hd) = scale_f * (gs * kv2.middleCols(c0, hd));
      gk.middleCols(c0, hd) = scale_f * (gs.transpose() * qv2.middleCols(c0, hd));
    }
    tp.accumulate(q, gq);
    tp.accumulate(k, gk);
    tp.accumulate(v, gv);
  });
}

Var blend(Tape& t, Var alpha, Var a, Var b) {
  const Mat& al = t.value(alpha);
  if (al.size() != 1) throw ShapeError("blend: alpha must be 1x1");
  require_same_shape(t.value(a), t.value(b), "blend");
  const double w = al(0, 0);
  Mat out = w * t.value(a) + (1.0 - w) * t.value(b);
  return t.push(std::move(out), {alpha, a, b}, [alpha, a, b](Tape& tp, const Mat& g) {
    const double w2 = tp.value(alpha)(0, 0);
    if (tp.requires_grad(alpha)) {
      Mat ga(1, 1);
      ga(0, 0) = g.cwiseProduct(tp.value(a) - tp.value(b)).sum();
      tp.accumulate(alpha, ga);
    }
    tp.accumulate(a, w2 * g);
    tp.accumulate(b, (1.0 - w2) * g);
  });
}

Var column_stats(Tape& t, Var x, double eps) {
  const Mat& xv = t.value(x);
  const auto n = xv.rows();
  if (n < 2) throw InsufficientDataError("column_stats: need at least 2 rows");
  Mat out(2, xv.cols());
  auto sigma = std::make_shared<Eigen::RowVectorXd>(xv.cols());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    const double mu = xv.col(c).mean();
    const double var = (xv.col(c).array() - mu).square().mean();
    (*sigma)(c) = std::sqrt(var);
    out(0, c) = mu;
    out(1, c) = std::max((*sigma)(c), eps);
  }
  return t.push(std::move(out), {x}, [x, sigma, eps, n](Tape& tp, const Mat& g) {
    const Mat& xv2 = tp.value(x);
    Mat gx(xv2.rows(), xv2.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index c = 0; c < xv2.cols(); ++c) {
      const double mu = xv2.col(c).mean();
      const double s = (*sigma)(c);
      // d(sigma)/dx = (x - mu) / (n * sigma); the eps floor is flat.
      const double g_over_sigma = s > eps ? g(1, c) / s : 0.0;
      for (Eigen::Index r = 0; r < n; ++r)
        gx(r, c) = (g(0, c) + g_over_sigma * (xv2(r, c) - mu)) * inv_n;
    }
    tp.accumulate(x, gx);
  });
}

Var normalize(Tape& t, Var x, Var stats) {
  const Mat& xv = t.value(x);
  const Mat& st = t.value(stats);
  if (st.rows() != 2 || st.cols() != xv.cols()) throw ShapeError("normalize: stats shape");
  Mat out = (xv.rowwise() - st.row(0)).array().rowwise() / st.row(1).array();
  return t.push(std::move(out), {x, stats}, [x, stats](Tape& tp, const Mat& g) {
    const Mat& xv2 = tp.value(x);
    const Mat& st2 = tp.value(stats);
    Mat gx = g.array().rowwise() / st2.row(1).array();
    tp.accumulate(x, gx);
    if (tp.requires_grad(stats)) {
      Mat gs(2, xv2.cols());
      gs.row(0) = -gx.colwise().sum();
      Mat centered = xv2.rowwise() - st2.row(0);
      gs.row(1) = -(gx.cwiseProduct(centered).colwise().sum().array() / st2.row(1).array()).matrix();
      tp.accumulate(stats, gs);
    }
  });
}

Var denormalize(Tape& t, Var y, Var stats) {
  const Mat& yv = t.value(y);
  const Mat& st = t.value(stats);
  if (st.rows() != 2 || st.cols() != yv.cols()) throw ShapeError("denormalize: stats shape");
  Mat out = (yv.array().rowwise() * st.row(1).array()).matrix().rowwise() + st.row(0);
  return t.push(std::move(out), {y, stats}, [y, stats](Tape& tp, const Mat& g) {
    const Mat& st2 = tp.value(stats);
    tp.accumulate(y, g.array().rowwise() * st2.row(1).array());
    if (tp.requires_grad(stats)) {
      Mat gs(2, g.cols());
      gs.row(0) = g.colwise().sum();
      gs.row(1) = g.cwiseProduct(tp.value(y)).colwise().sum();
      tp.accumulate(stats, gs);
    }
  });
}

Var scalar_fn(Tape& t, Var x, ScalarFn fn) {
  Mat out(1, 1);
  out(0, 0) = fn(t.value(x), nullptr);
  return t.push(std::move(out), {x}, [x, fn](Tape& tp, const Mat& g) {
    Mat grad(tp.value(x).rows(), tp.value(x).cols());
    fn(tp.value(x), &grad);
    tp.accumulate(x, g(0, 0) * grad);
  });
}

}  // namespace gazestab::ad
