#pragma once

#include <cstddef>
#include <vector>

#include "gazestab/autodiff.hpp"

namespace gazestab {

/// Batch-major rank-3 array [batch x time x channels] with a parallel
/// [batch x time] array of relative timestamps (seconds).
struct TensorBatch {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::size_t channels = 0;
  std::vector<double> data;
  std::vector<double> times;

  TensorBatch() = default;
  TensorBatch(std::size_t b, std::size_t t, std::size_t c)
      : batch(b), time(t), channels(c), data(b * t * c, 0.0), times(b * t, 0.0) {}

  double& at(std::size_t b, std::size_t t, std::size_t c) { return data[(b * time + t) * channels + c]; }
  double at(std::size_t b, std::size_t t, std::size_t c) const { return data[(b * time + t) * channels + c]; }
  double& time_at(std::size_t b, std::size_t t) { return times[b * time + t]; }
  double time_at(std::size_t b, std::size_t t) const { return times[b * time + t]; }

  /// Sample b as a [time x channels] matrix.
  ad::Mat sample(std::size_t b) const;
  /// Timestamps of sample b as a [time x 1] column.
  ad::Mat sample_times(std::size_t b) const;
  void set_sample(std::size_t b, const ad::Mat& m);

  /// Throws ShapeError for empty dimensions or inconsistent storage and
  /// DomainError for non-finite entries.
  void validate() const;
};

}  // namespace gazestab
