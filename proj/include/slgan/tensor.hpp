#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <new>
#include <vector>

namespace slgan {

// SIMD-aligned so Eigen reductions take the same path for every buffer; results are then
// bit-reproducible regardless of where the allocator puts the data.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using FloatStorage = std::vector<float, AlignedAllocator<float>>;

// Dense row-major float array with a shape. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> data);

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  FloatStorage& storage() noexcept { return data_; }
  const FloatStorage& storage() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int> shape) const&;
  Tensor reshaped(std::vector<int> shape) &&;

  // Rows [begin, end) along the leading dimension.
  Tensor rows(int begin, int end) const;

  void fill(float v);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  FloatStorage data_;
};

std::size_t element_count(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

// Concatenates rank-2 tensors [N, A] and [N, B] into [N, A + B].
Tensor concat_columns(const Tensor& a, const Tensor& b);

// Stacks tensors with identical trailing shapes along the leading dimension.
Tensor stack_rows(std::span<const Tensor> parts);

}  // namespace slgan
