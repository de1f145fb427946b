#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "slgan/tensor.hpp"

namespace slgan::nn {

// Ordered collection of named tensors. Insertion order is the serialization order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<int> shape);
  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor>& tensors() noexcept { return tensors_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t element_count() const noexcept;

  // Same names and shapes, all zeros.
  ParamStore zeros_like() const;
  void set_zero();
  bool all_finite() const noexcept;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// Activations a layer keeps from its forward pass for the backward pass.
struct LayerCache {
  std::vector<int> input_shape;
  Tensor input;
  Tensor output;
  Tensor aux;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const = 0;

  // grads == nullptr computes only the input gradient. need_dx == false skips it.
  virtual Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                          ParamStore* grads, bool need_dx) const = 0;

  virtual void declare(ParamStore& /*params*/) const {}
  virtual void initialize(ParamStore& /*params*/, std::mt19937_64& /*rng*/) const {}
  virtual std::vector<std::string> param_names() const { return {}; }
};

// Conv weight [out, in*k*k]; input NCHW.
class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad);
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;
  void declare(ParamStore& params) const override;
  void initialize(ParamStore& params, std::mt19937_64& rng) const override;
  std::vector<std::string> param_names() const override { return {weight_, bias_}; }

 private:
  std::string weight_, bias_;
  int in_, out_, kernel_, stride_, pad_;
};

// Transposed convolution, weight [in, out*k*k]; the adjoint of Conv2d's data path.
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int pad);
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;
  void declare(ParamStore& params) const override;
  void initialize(ParamStore& params, std::mt19937_64& rng) const override;
  std::vector<std::string> param_names() const override { return {weight_, bias_}; }

 private:
  std::string weight_, bias_;
  int in_, out_, kernel_, stride_, pad_;
};

// y = x W^T + b with x [N, in], W [out, in].
class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features);
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;
  void declare(ParamStore& params) const override;
  void initialize(ParamStore& params, std::mt19937_64& rng) const override;
  std::vector<std::string> param_names() const override { return {weight_, bias_}; }
  int out_features() const noexcept { return out_; }

 private:
  std::string weight_, bias_;
  int in_, out_;
};

class LeakyRelu final : public Layer {
 public:
  explicit LeakyRelu(float slope = 0.2f) : slope_(slope) {}
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;

 private:
  float slope_;
};

class Relu final : public Layer {
 public:
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;
};

// Scales each spatial position's channel vector to unit root-mean-square. No parameters.
class PixelNorm final : public Layer {
 public:
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;
};

class Tanh final : public Layer {
 public:
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;
};

// Reshapes the per-sample part, keeping the batch dimension.
class Reshape final : public Layer {
 public:
  explicit Reshape(std::vector<int> sample_shape) : sample_shape_(std::move(sample_shape)) {}
  Tensor forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const override;
  Tensor backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                  ParamStore* grads, bool need_dx) const override;

 private:
  std::vector<int> sample_shape_;
};

using Trace = std::vector<LayerCache>;

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
    return *this;
  }

  Tensor forward(const ParamStore& params, const Tensor& x, Trace* trace = nullptr) const;
  Tensor backward(const ParamStore& params, const Trace& trace, const Tensor& dy, ParamStore* grads,
                  bool need_dx) const;

  void declare(ParamStore& params) const;
  void initialize(ParamStore& params, std::mt19937_64& rng) const;
  std::vector<std::string> param_names() const;
  std::size_t layer_count() const noexcept { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Adds b into a elementwise; shapes must match.
void accumulate(Tensor& a, const Tensor& b);

}  // namespace slgan::nn
