#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gazestab::ad {

/// Row-major dense matrix; rows are time steps, columns are channels.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape. Ops append nodes in evaluation order; backward() walks
/// them in reverse and calls each node's closure with its accumulated output
/// gradient. With recording disabled only values are kept, which is the
/// inference path.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Mat value);
  Var parameter(Mat value);

  Var push(Mat value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Mat value, std::span<const Var> inputs, Backward backward);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() target w.r.t. v; zeros when v was not
  /// reached.
  Mat grad(Var v) const;

  /// Adds g into v's gradient slot. No-op for nodes that need no gradient.
  void accumulate(Var v, const Mat& g);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(Var out);

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// Elementwise and structural ops.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);  // broadcast a 1 x n row over every row of a
Var add_const(Tape& t, Var a, const Mat& c);
Var scale(Tape& t, Var a, double s);
Var matmul(Tape& t, Var a, Var b);
Var gelu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var rows(Tape& t, Var a, std::size_t start, std::size_t count);
Var concat_rows(Tape& t, Var a, Var b);
Var pad_rows(Tape& t, Var a, std::size_t total_rows);  // zero rows appended
Var mean_of(Tape& t, std::span<const Var> xs);
Var sum_squares(Tape& t, Var a);                     // 1 x 1

/// Same-length 1D convolution along rows with zero padding; `w` is
/// [k * c_in x c_out] with tap-major layout.
Var conv1d_same(Tape& t, Var x, Var w, std::size_t kernel);

/// Same-size 2D convolution of an image stored row-major as [h * w x c_in]
/// (pixel (i, j) in row i * w + j) with a square kernel [k * k * c_in x c_out]
/// and bias [1 x c_out]. Zero padding.
Var conv2d_same(Tape& t, Var image, std::size_t height, std::size_t width, Var kernel,
                Var bias, std::size_t k);

/// Averages square kernels of different odd sizes by embedding each one at
/// the center of the largest; the result feeds a single conv2d_same.
Var embed_kernels(Tape& t, std::span<const Var> kernels, std::span<const std::size_t> sizes,
                  std::size_t c_in);

/// Channel-averaged DFT magnitude of x (rows = time) at the given integer
/// frequencies; returns [1 x freqs.size()].
Var spectral_amplitude(Tape& t, Var x, std::span<const std::size_t> freqs);

Var softmax_row(Tape& t, Var a);  // a is 1 x k
/// sum_i weights(0, i) * branches[i]
Var weighted_sum(Tape& t, std::span<const Var> branches, Var weights);

/// Scaled dot-product self attention over rows, split into `heads` column
/// blocks of equal width. q, k, v are [n x d]; returns the concatenated head
/// outputs [n x d] (before the output projection).
Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads);

/// alpha * a + (1 - alpha) * b with alpha a 1 x 1 node.
Var blend(Tape& t, Var alpha, Var a, Var b);

/// Per-column mean and standard deviation over rows: row 0 is the mean, row 1
/// is max(population std, eps).
Var column_stats(Tape& t, Var x, double eps);
/// (x - mean) / std per column using a column_stats node.
Var normalize(Tape& t, Var x, Var stats);
/// y * std + mean per column.
Var denormalize(Tape& t, Var y, Var stats);

/// 1 x 1 node from a scalar function with analytic gradient.
/// fn(value, grad_out_or_null) returns f(value) and, when grad_out is given,
/// writes df/dvalue into it.
using ScalarFn = std::function<double(const Mat&, Mat*)>;
Var scalar_fn(Tape& t, Var x, ScalarFn fn);

/// Full DFT amplitude spectrum averaged over channels for frequencies
/// 0..rows/2 (real FFT via FFTW).
std::vector<double> amplitude_spectrum(const Mat& x);

}  // namespace gazestab::ad
