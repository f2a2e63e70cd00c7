#include <cmath>
#include <stdexcept>

#include "strfsed/nn/optim.hpp"

namespace strfsed::nn {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
  if (param.shape() != grad.shape()) throw std::invalid_argument("adam: grad shape mismatch");
  if (!grad.all_finite()) throw std::domain_error("adam: non-finite gradient");
  if (state.m.shape() != param.shape()) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mh = state.m[i] / bc1;
    const double vh = state.v[i] / bc2;
    param[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg, bool round_to_float)
    : cfg_(cfg), round_(round_to_float) {
  for (Parameter* p : params) {
    if (p->trainable) params_.push_back(p);
  }
  states_.resize(params_.size());
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->grad.all_finite()) throw std::domain_error("adam: non-finite gradient in " + p->name);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(params_[i]->value, params_[i]->grad, states_[i], cfg_);
    if (round_) nn::round_to_float(params_[i]->value);
    params_[i]->grad.fill(0.0);
  }
}

}  // namespace strfsed::nn
