#include "slgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slgan/error.hpp"

namespace slgan {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != element_count(shape_)) {
    throw ConfigError("tensor data size " + std::to_string(data_.size()) +
                      " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(std::vector<int> shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(std::vector<int> shape) && {
  if (element_count(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::rows(int begin, int end) const {
  if (shape_.empty() || begin < 0 || end > shape_[0] || begin > end) {
    throw ConfigError("row slice out of range for " + shape_string(shape_));
  }
  const std::size_t stride = shape_[0] == 0 ? 0 : data_.size() / static_cast<std::size_t>(shape_[0]);
  std::vector<int> shape = shape_;
  shape[0] = end - begin;
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                         data_.begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(out));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor concat_columns(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw ConfigError("concat_columns: incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out({n, ca + cb});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data() + static_cast<std::size_t>(i) * ca, ca,
                out.data() + static_cast<std::size_t>(i) * (ca + cb));
    std::copy_n(b.data() + static_cast<std::size_t>(i) * cb, cb,
                out.data() + static_cast<std::size_t>(i) * (ca + cb) + ca);
  }
  return out;
}

Tensor stack_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ConfigError("stack_rows: nothing to stack");
  std::vector<int> shape = parts.front().shape();
  int rows = 0;
  std::vector<float> data;
  for (const Tensor& t : parts) {
    if (t.rank() != static_cast<int>(shape.size()) ||
        !std::equal(t.shape().begin() + 1, t.shape().end(), shape.begin() + 1)) {
      throw ConfigError("stack_rows: trailing shape mismatch");
    }
    rows += t.dim(0);
    data.insert(data.end(), t.storage().begin(), t.storage().end());
  }
  shape[0] = rows;
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace slgan
