#include "slgan/optimizer.hpp"

#include <cmath>

#include "slgan/error.hpp"

namespace slgan {

AdamState AdamState::for_params(const nn::ParamStore& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

double clip_global_norm(nn::ParamStore& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& t : grads.tensors())
    for (float g : t.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (Tensor& t : grads.tensors())
      for (float& g : t.values()) g *= scale;
  }
  return norm;
}

void adam_step(nn::ParamStore& params, const nn::ParamStore& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size())
    throw ConfigError("adam_step: parameter/gradient/state layout mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const float step_size = static_cast<float>(cfg.learning_rate / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float eps = static_cast<float>(cfg.epsilon);

  for (std::size_t t = 0; t < params.size(); ++t) {
    float* p = params.tensors()[t].data();
    const float* g = grads.tensors()[t].data();
    float* m = state.first_moment.tensors()[t].data();
    float* v = state.second_moment.tensors()[t].data();
    const std::size_t n = params.tensors()[t].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace slgan
