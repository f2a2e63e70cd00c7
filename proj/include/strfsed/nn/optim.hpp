#pragma once

#include <cstddef>
#include <vector>

#include "strfsed/nn/layer.hpp"
#include "strfsed/tensor.hpp"

namespace strfsed::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::size_t step = 0;
};

// One bias-corrected Adam update. Throws std::domain_error on a non-finite
// gradient and leaves `param` and `state` untouched in that case.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg, bool round_to_float = true);

  // Applies one update to every trainable parameter, then zeroes grads.
  void step();
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
  bool round_;
};

}  // namespace strfsed::nn
