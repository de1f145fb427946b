#include "slgan/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>

#include "slgan/error.hpp"

namespace slgan::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

constexpr float kInitStddev = 0.02f;

MatMap as_matrix(Tensor& t, int rows, int cols) { return MatMap(t.data(), rows, cols); }
ConstMatMap as_matrix(const Tensor& t, int rows, int cols) {
  return ConstMatMap(t.data(), rows, cols);
}

void init_normal(Tensor& t, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, kInitStddev);
  for (float& v : t.values()) v = dist(rng);
}

struct Geometry {
  int n, channels, height, width, kernel, stride, pad, out_h, out_w;
  long rows() const { return static_cast<long>(channels) * kernel * kernel; }
  long cols() const { return static_cast<long>(n) * out_h * out_w; }
};

// cols[(c*k + kh)*k + kw][(n*oh_count + oh)*ow_count + ow] = img[n, c, oh*s - p + kh, ow*s - p + kw]
void im2col(const float* img, const Geometry& g, float* cols) {
  const long plane = static_cast<long>(g.out_h) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int kh = 0; kh < g.kernel; ++kh) {
      for (int kw = 0; kw < g.kernel; ++kw) {
        float* row = cols + ((static_cast<long>(c) * g.kernel + kh) * g.kernel + kw) * g.cols();
        for (int n = 0; n < g.n; ++n) {
          const float* src = img + (static_cast<long>(n) * g.channels + c) * g.height * g.width;
          float* dst = row + n * plane;
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh * g.stride - g.pad + kh;
            float* out = dst + static_cast<long>(oh) * g.out_w;
            if (ih < 0 || ih >= g.height) {
              std::fill_n(out, g.out_w, 0.0f);
              continue;
            }
            const float* line = src + static_cast<long>(ih) * g.width;
            for (int ow = 0; ow < g.out_w; ++ow) {
              const int iw = ow * g.stride - g.pad + kw;
              out[ow] = (iw >= 0 && iw < g.width) ? line[iw] : 0.0f;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into img.
void col2im(const float* cols, const Geometry& g, float* img) {
  const long plane = static_cast<long>(g.out_h) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int kh = 0; kh < g.kernel; ++kh) {
      for (int kw = 0; kw < g.kernel; ++kw) {
        const float* row =
            cols + ((static_cast<long>(c) * g.kernel + kh) * g.kernel + kw) * g.cols();
        for (int n = 0; n < g.n; ++n) {
          float* dst = img + (static_cast<long>(n) * g.channels + c) * g.height * g.width;
          const float* src = row + n * plane;
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh * g.stride - g.pad + kh;
            if (ih < 0 || ih >= g.height) continue;
            float* line = dst + static_cast<long>(ih) * g.width;
            const float* in = src + static_cast<long>(oh) * g.out_w;
            for (int ow = 0; ow < g.out_w; ++ow) {
              const int iw = ow * g.stride - g.pad + kw;
              if (iw >= 0 && iw < g.width) line[iw] += in[ow];
            }
          }
        }
      }
    }
  }
}

// NCHW <-> [C, N*H*W]
Tensor to_channel_major(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1);
  const long plane = static_cast<long>(x.dim(2)) * x.dim(3);
  Tensor out({c, static_cast<int>(n * plane)});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(x.data() + (static_cast<long>(i) * c + ch) * plane, plane,
                  out.data() + (static_cast<long>(ch) * n + i) * plane);
  return out;
}

void from_channel_major(const float* cm, int n, int c, long plane, float* nchw) {
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(cm + (static_cast<long>(ch) * n + i) * plane, plane,
                  nchw + (static_cast<long>(i) * c + ch) * plane);
}

void require_rank(const Tensor& x, int rank, const char* who) {
  if (x.rank() != rank) {
    throw ConfigError(std::string(who) + ": expected rank " + std::to_string(rank) +
                      " input, got " + shape_string(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

Tensor& ParamStore::add(const std::string& name, std::vector<int> shape) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  tensors_.emplace_back(std::move(shape));
  return tensors_.back();
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return tensors_[it->second];
}

std::size_t ParamStore::element_count() const noexcept {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], tensors_[i].shape());
  return out;
}

void ParamStore::set_zero() {
  for (Tensor& t : tensors_) t.fill(0.0f);
}

bool ParamStore::all_finite() const noexcept {
  return std::all_of(tensors_.begin(), tensors_.end(),
                     [](const Tensor& t) { return t.all_finite(); });
}

void accumulate(Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ConfigError("accumulate: size mismatch");
  float* pa = a.data();
  const float* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

// -------------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad)
    : weight_(name + ".w"),
      bias_(name + ".b"),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

void Conv2d::declare(ParamStore& params) const {
  params.add(weight_, {out_, in_ * kernel_ * kernel_});
  params.add(bias_, {out_});
}

void Conv2d::initialize(ParamStore& params, std::mt19937_64& rng) const {
  init_normal(params.at(weight_), rng);
  params.at(bias_).fill(0.0f);
}

Tensor Conv2d::forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const {
  require_rank(x, 4, "Conv2d");
  if (x.dim(1) != in_) throw ConfigError("Conv2d: expected " + std::to_string(in_) + " channels");
  const Geometry g{x.dim(0),
                   in_,
                   x.dim(2),
                   x.dim(3),
                   kernel_,
                   stride_,
                   pad_,
                   (x.dim(2) + 2 * pad_ - kernel_) / stride_ + 1,
                   (x.dim(3) + 2 * pad_ - kernel_) / stride_ + 1};
  Tensor cols({static_cast<int>(g.rows()), static_cast<int>(g.cols())});
  im2col(x.data(), g, cols.data());

  const Tensor& w = params.at(weight_);
  const Tensor& b = params.at(bias_);
  Tensor out_cm({out_, static_cast<int>(g.cols())});
  as_matrix(out_cm, out_, static_cast<int>(g.cols())).noalias() =
      as_matrix(w, out_, static_cast<int>(g.rows())) *
      as_matrix(cols, static_cast<int>(g.rows()), static_cast<int>(g.cols()));

  const long plane = static_cast<long>(g.out_h) * g.out_w;
  Tensor y({g.n, out_, g.out_h, g.out_w});
  from_channel_major(out_cm.data(), g.n, out_, plane, y.data());
  for (int i = 0; i < g.n; ++i)
    for (int c = 0; c < out_; ++c) {
      float* p = y.data() + (static_cast<long>(i) * out_ + c) * plane;
      for (long j = 0; j < plane; ++j) p[j] += b[c];
    }
  if (cache) {
    cache->input_shape = x.shape();
    cache->aux = std::move(cols);
  }
  return y;
}

Tensor Conv2d::backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                        ParamStore* grads, bool need_dx) const {
  const std::vector<int>& xs = cache.input_shape;
  const Geometry g{xs[0], in_, xs[2], xs[3], kernel_, stride_, pad_, dy.dim(2), dy.dim(3)};
  const int rows = static_cast<int>(g.rows()), cols = static_cast<int>(g.cols());
  const Tensor dy_cm = to_channel_major(dy);
  const auto dy_mat = as_matrix(dy_cm, out_, cols);

  if (grads) {
    Tensor& dw = grads->at(weight_);
    as_matrix(dw, out_, rows).noalias() += dy_mat * as_matrix(cache.aux, rows, cols).transpose();
    Tensor& db = grads->at(bias_);
    for (int c = 0; c < out_; ++c) db[c] += dy_mat.row(c).sum();
  }
  if (!need_dx) return {};
  Tensor dcols({rows, cols});
  as_matrix(dcols, rows, cols).noalias() =
      as_matrix(params.at(weight_), out_, rows).transpose() * dy_mat;
  Tensor dx(xs);
  col2im(dcols.data(), g, dx.data());
  return dx;
}

// ----------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel,
                                 int stride, int pad)
    : weight_(name + ".w"),
      bias_(name + ".b"),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

void ConvTranspose2d::declare(ParamStore& params) const {
  params.add(weight_, {in_, out_ * kernel_ * kernel_});
  params.add(bias_, {out_});
}

void ConvTranspose2d::initialize(ParamStore& params, std::mt19937_64& rng) const {
  init_normal(params.at(weight_), rng);
  params.at(bias_).fill(0.0f);
}

Tensor ConvTranspose2d::forward(const ParamStore& params, const Tensor& x,
                                LayerCache* cache) const {
  require_rank(x, 4, "ConvTranspose2d");
  if (x.dim(1) != in_) {
    throw ConfigError("ConvTranspose2d: expected " + std::to_string(in_) + " channels");
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int out_h = (h - 1) * stride_ - 2 * pad_ + kernel_;
  const int out_w = (w - 1) * stride_ - 2 * pad_ + kernel_;
  // The output image plays the role of a convolution input whose output grid is x's grid.
  const Geometry g{n, out_, out_h, out_w, kernel_, stride_, pad_, h, w};
  const int rows = static_cast<int>(g.rows()), cols = static_cast<int>(g.cols());

  Tensor x_cm = to_channel_major(x);
  Tensor col_buf({rows, cols});
  as_matrix(col_buf, rows, cols).noalias() =
      as_matrix(params.at(weight_), in_, rows).transpose() * as_matrix(x_cm, in_, cols);

  Tensor y({n, out_, out_h, out_w});
  col2im(col_buf.data(), g, y.data());
  const Tensor& b = params.at(bias_);
  const long plane = static_cast<long>(out_h) * out_w;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < out_; ++c) {
      float* p = y.data() + (static_cast<long>(i) * out_ + c) * plane;
      for (long j = 0; j < plane; ++j) p[j] += b[c];
    }
  if (cache) {
    cache->input_shape = x.shape();
    cache->aux = std::move(x_cm);
  }
  return y;
}

Tensor ConvTranspose2d::backward(const ParamStore& params, const LayerCache& cache,
                                 const Tensor& dy, ParamStore* grads, bool need_dx) const {
  const std::vector<int>& xs = cache.input_shape;
  const int n = xs[0], h = xs[2], w = xs[3];
  const Geometry g{n, out_, dy.dim(2), dy.dim(3), kernel_, stride_, pad_, h, w};
  const int rows = static_cast<int>(g.rows()), cols = static_cast<int>(g.cols());
  Tensor dcols({rows, cols});
  im2col(dy.data(), g, dcols.data());
  const auto dcol_mat = as_matrix(dcols, rows, cols);

  if (grads) {
    Tensor& dw = grads->at(weight_);
    as_matrix(dw, in_, rows).noalias() += as_matrix(cache.aux, in_, cols) * dcol_mat.transpose();
    Tensor& db = grads->at(bias_);
    const long plane = static_cast<long>(dy.dim(2)) * dy.dim(3);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < out_; ++c) {
        const float* p = dy.data() + (static_cast<long>(i) * out_ + c) * plane;
        double s = 0.0;
        for (long j = 0; j < plane; ++j) s += p[j];
        db[c] += static_cast<float>(s);
      }
  }
  if (!need_dx) return {};
  Tensor dx_cm({in_, cols});
  as_matrix(dx_cm, in_, cols).noalias() = as_matrix(params.at(weight_), in_, rows) * dcol_mat;
  Tensor dx(xs);
  from_channel_major(dx_cm.data(), n, in_, static_cast<long>(h) * w, dx.data());
  return dx;
}

// -------------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : weight_(name + ".w"), bias_(name + ".b"), in_(in_features), out_(out_features) {}

void Linear::declare(ParamStore& params) const {
  params.add(weight_, {out_, in_});
  params.add(bias_, {out_});
}

// Affine weights are N(0, 1/fan_in); convolutions keep the fixed 0.02.
void Linear::initialize(ParamStore& params, std::mt19937_64& rng) const {
  std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(in_)));
  for (float& v : params.at(weight_).values()) v = dist(rng);
  params.at(bias_).fill(0.0f);
}

Tensor Linear::forward(const ParamStore& params, const Tensor& x, LayerCache* cache) const {
  require_rank(x, 2, "Linear");
  if (x.dim(1) != in_) {
    throw ConfigError("Linear: expected " + std::to_string(in_) + " features, got " +
                      std::to_string(x.dim(1)));
  }
  const int n = x.dim(0);
  Tensor y({n, out_});
  auto ym = as_matrix(y, n, out_);
  ym.noalias() = as_matrix(x, n, in_) * as_matrix(params.at(weight_), out_, in_).transpose();
  const Tensor& b = params.at(bias_);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.data(), out_);
  if (cache) {
    cache->input_shape = x.shape();
    cache->input = x;
  }
  return y;
}

Tensor Linear::backward(const ParamStore& params, const LayerCache& cache, const Tensor& dy,
                        ParamStore* grads, bool need_dx) const {
  const int n = dy.dim(0);
  const auto dym = as_matrix(dy, n, out_);
  if (grads) {
    as_matrix(grads->at(weight_), out_, in_).noalias() +=
        dym.transpose() * as_matrix(cache.input, n, in_);
    Eigen::Map<Eigen::RowVectorXf>(grads->at(bias_).data(), out_) += dym.colwise().sum();
  }
  if (!need_dx) return {};
  Tensor dx({n, in_});
  as_matrix(dx, n, in_).noalias() = dym * as_matrix(params.at(weight_), out_, in_);
  return dx;
}

// --------------------------------------------------------------- activations

Tensor LeakyRelu::forward(const ParamStore&, const Tensor& x, LayerCache* cache) const {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : slope_ * v;
  if (cache) {
    cache->input_shape = x.shape();
    cache->input = x;
  }
  return y;
}

Tensor LeakyRelu::backward(const ParamStore&, const LayerCache& cache, const Tensor& dy,
                           ParamStore*, bool need_dx) const {
  if (!need_dx) return {};
  Tensor dx = dy;
  const float* in = cache.input.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(in[i] > 0.0f)) d[i] *= slope_;
  return dx;
}

Tensor Relu::forward(const ParamStore&, const Tensor& x, LayerCache* cache) const {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : 0.0f;
  if (cache) {
    cache->input_shape = x.shape();
    cache->input = x;
  }
  return y;
}

Tensor Relu::backward(const ParamStore&, const LayerCache& cache, const Tensor& dy, ParamStore*,
                      bool need_dx) const {
  if (!need_dx) return {};
  Tensor dx = dy;
  const float* in = cache.input.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(in[i] > 0.0f)) d[i] = 0.0f;
  return dx;
}

namespace {

// (batch, channels, positions) view of a rank-2 or rank-4 activation.
std::array<int, 3> channel_view(const Tensor& x) {
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  require_rank(x, 4, "PixelNorm");
  return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
}

constexpr float kPixelNormEps = 1e-8f;

}  // namespace

Tensor PixelNorm::forward(const ParamStore&, const Tensor& x, LayerCache* cache) const {
  const auto [n, c, p] = channel_view(x);
  Tensor y = x;
  Tensor inv({n, p});
  for (int i = 0; i < n; ++i) {
    const float* in = x.data() + static_cast<std::size_t>(i) * c * p;
    float* out = y.data() + static_cast<std::size_t>(i) * c * p;
    for (int q = 0; q < p; ++q) {
      double sum = 0.0;
      for (int k = 0; k < c; ++k) sum += static_cast<double>(in[k * p + q]) * in[k * p + q];
      const float r = static_cast<float>(1.0 / std::sqrt(sum / c + kPixelNormEps));
      inv[static_cast<std::size_t>(i) * p + q] = r;
      for (int k = 0; k < c; ++k) out[k * p + q] *= r;
    }
  }
  if (cache) {
    cache->input_shape = x.shape();
    cache->input = x;
    cache->aux = std::move(inv);
  }
  return y;
}

Tensor PixelNorm::backward(const ParamStore&, const LayerCache& cache, const Tensor& dy,
                           ParamStore*, bool need_dx) const {
  if (!need_dx) return {};
  const auto [n, c, p] = channel_view(cache.input);
  Tensor dx = dy;
  for (int i = 0; i < n; ++i) {
    const float* in = cache.input.data() + static_cast<std::size_t>(i) * c * p;
    const float* g = dy.data() + static_cast<std::size_t>(i) * c * p;
    float* out = dx.data() + static_cast<std::size_t>(i) * c * p;
    for (int q = 0; q < p; ++q) {
      const double r = cache.aux[static_cast<std::size_t>(i) * p + q];
      double dot = 0.0;
      for (int k = 0; k < c; ++k) dot += static_cast<double>(g[k * p + q]) * in[k * p + q];
      const double coef = r * r * r * dot / c;
      for (int k = 0; k < c; ++k)
        out[k * p + q] = static_cast<float>(r * g[k * p + q] - coef * in[k * p + q]);
    }
  }
  return dx;
}

Tensor Tanh::forward(const ParamStore&, const Tensor& x, LayerCache* cache) const {
  Tensor y = x;
  for (float& v : y.values()) v = std::tanh(v);
  if (cache) {
    cache->input_shape = x.shape();
    cache->output = y;
  }
  return y;
}

Tensor Tanh::backward(const ParamStore&, const LayerCache& cache, const Tensor& dy, ParamStore*,
                      bool need_dx) const {
  if (!need_dx) return {};
  Tensor dx = dy;
  const float* y = cache.output.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] *= 1.0f - y[i] * y[i];
  return dx;
}

Tensor Reshape::forward(const ParamStore&, const Tensor& x, LayerCache* cache) const {
  std::vector<int> shape{x.dim(0)};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  if (cache) cache->input_shape = x.shape();
  return x.reshaped(std::move(shape));
}

Tensor Reshape::backward(const ParamStore&, const LayerCache& cache, const Tensor& dy, ParamStore*,
                         bool need_dx) const {
  if (!need_dx) return {};
  return dy.reshaped(cache.input_shape);
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const ParamStore& params, const Tensor& x, Trace* trace) const {
  if (trace) {
    trace->clear();
    trace->resize(layers_.size());
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    h = layers_[i]->forward(params, h, trace ? &(*trace)[i] : nullptr);
  return h;
}

Tensor Sequential::backward(const ParamStore& params, const Trace& trace, const Tensor& dy,
                            ParamStore* grads, bool need_dx) const {
  if (trace.size() != layers_.size()) throw ConfigError("Sequential: trace/layer count mismatch");
  Tensor g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want_dx = i > 0 || need_dx;
    g = layers_[i]->backward(params, trace[i], g, grads, want_dx);
    if (!want_dx) return {};
  }
  return g;
}

void Sequential::declare(ParamStore& params) const {
  for (const auto& l : layers_) l->declare(params);
}

void Sequential::initialize(ParamStore& params, std::mt19937_64& rng) const {
  for (const auto& l : layers_) l->initialize(params, rng);
}

std::vector<std::string> Sequential::param_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) {
    auto names = l->param_names();
    out.insert(out.end(), names.begin(), names.end());
  }
  return out;
}

}  // namespace slgan::nn
