#pragma once

#include <algorithm>
#include <cstddef>
#include <random>

#include "strfsed/nn/layer.hpp"

namespace strfsed::nn {

struct FdyConfig {
  std::size_t n_basis = 4;
  double temperature = 1.0;
  std::size_t hidden = 0;  // 0: max(C_in / 4, 4)

  std::size_t hidden_for(std::size_t c_in) const {
    return hidden ? hidden : std::max<std::size_t>(c_in / 4, 4);
  }
};

// Frequency-dynamic convolution. Each frequency bin f uses the kernel
// sum_k a[f][k] * basis_k, where a[f] is a softmax over K logits computed from
// the time-averaged input at that bin by a small map shared across bins.
// [N, C_in, T, F] -> [N, C_out, T, F]
class FdyConv final : public Layer {
 public:
  FdyConv(std::size_t c_in, std::size_t c_out, std::size_t k_t, std::size_t k_f,
          const FdyConfig& cfg, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::fdyconv; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override {
    return {&basis_, &basis_bias_, &att_w1_, &att_b1_, &att_w2_, &att_b2_};
  }

  // Attention weights [F x K] for one sample [C_in x T x F].
  Tensor attention(const Tensor& sample) const;

  // Single sample with caller-supplied attention [F x K].
  Tensor apply_with_attention(const Tensor& sample, const Tensor& weights) const;

  // Test hook: replace the attention with 1/K everywhere. Attention
  // parameters then receive zero gradient.
  void force_uniform_attention(bool on) { uniform_ = on; }

  std::size_t in_channels() const { return c_in_; }
  std::size_t out_channels() const { return c_out_; }
  std::size_t kernel_t() const { return k_t_; }
  std::size_t kernel_f() const { return k_f_; }
  const FdyConfig& config() const { return cfg_; }

  Parameter& basis() { return basis_; }            // [K * C_out, C_in, k_t, k_f], basis-major
  Parameter& basis_bias() { return basis_bias_; }  // [K, C_out]
  Parameter& att_w1() { return att_w1_; }          // [hidden, C_in]
  Parameter& att_b1() { return att_b1_; }
  Parameter& att_w2() { return att_w2_; }          // [K, hidden]
  Parameter& att_b2() { return att_b2_; }

 private:
  struct AttentionTrace {
    Tensor pooled;  // [C_in x F]
    Tensor hidden;  // [F x hidden], post-ReLU
    Tensor weights; // [F x K]
  };
  AttentionTrace attend(const double* sample, std::size_t t, std::size_t f) const;
  void basis_responses(const double* sample, std::vector<double>& padded, std::vector<double>& acc,
                       Tensor& basis_out) const;
  void mix(const Tensor& basis_out, const Tensor& weights, double* y) const;

  std::size_t c_in_, c_out_, k_t_, k_f_;
  FdyConfig cfg_;
  bool uniform_ = false;
  Parameter basis_, basis_bias_, att_w1_, att_b1_, att_w2_, att_b2_;
};

// Single-sample functional forms over [C_in x T x F].
Tensor fdy_attention(const Tensor& input, const FdyConv& layer);
Tensor fdy_forward(const Tensor& input, const FdyConv& layer);
// The layer's per-bin kernel mix under a fixed attention, which makes it a
// linear operator of the input.
Tensor fdy_apply(const Tensor& input, const FdyConv& layer, const Tensor& attention);

// Accumulates parameter gradients into `layer` and returns dL/dinput.
Tensor fdy_backward(const Tensor& upstream, const Tensor& input, FdyConv& layer);

}  // namespace strfsed::nn
