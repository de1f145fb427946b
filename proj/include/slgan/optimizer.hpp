#pragma once

#include <cstdint>

#include "slgan/nn.hpp"

namespace slgan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers mirroring one network's parameters.
struct AdamState {
  nn::ParamStore first_moment;
  nn::ParamStore second_moment;
  std::int64_t step = 0;

  static AdamState for_params(const nn::ParamStore& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Scales grads in place so their global L2 norm is at most max_norm (<= 0 disables).
// Returns the norm before clipping.
double clip_global_norm(nn::ParamStore& grads, double max_norm);

void adam_step(nn::ParamStore& params, const nn::ParamStore& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace slgan
