#include "gazestab/tensor.hpp"

#include <cmath>

#include "gazestab/errors.hpp"

namespace gazestab {

ad::Mat TensorBatch::sample(std::size_t b) const {
  ad::Mat m(static_cast<Eigen::Index>(time), static_cast<Eigen::Index>(channels));
  for (std::size_t t = 0; t < time; ++t)
    for (std::size_t c = 0; c < channels; ++c) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = at(b, t, c);
  return m;
}

ad::Mat TensorBatch::sample_times(std::size_t b) const {
  ad::Mat m(static_cast<Eigen::Index>(time), 1);
  for (std::size_t t = 0; t < time; ++t) m(static_cast<Eigen::Index>(t), 0) = time_at(b, t);
  return m;
}

void TensorBatch::set_sample(std::size_t b, const ad::Mat& m) {
  if (static_cast<std::size_t>(m.rows()) != time || static_cast<std::size_t>(m.cols()) != channels)
    throw ShapeError("set_sample: shape mismatch");
  for (std::size_t t = 0; t < time; ++t)
    for (std::size_t c = 0; c < channels; ++c) at(b, t, c) = m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
}

void TensorBatch::validate() const {
  if (batch == 0 || time == 0 || channels == 0) throw ShapeError("TensorBatch dimensions must be >= 1");
  if (data.size() != batch * time * channels || times.size() != batch * time)
    throw ShapeError("TensorBatch storage does not match its dimensions");
  for (double v : data)
    if (!std::isfinite(v)) throw DomainError("TensorBatch contains a non-finite value");
  for (double v : times)
    if (!std::isfinite(v)) throw DomainError("TensorBatch contains a non-finite timestamp");
}

}  // namespace gazestab
