#pragma once

#include <cstddef>
#include <random>

#include "strfsed/nn/layer.hpp"

namespace strfsed::nn {

// [N, C_in, T, F] -> [N, C_out, T, F]
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t c_in, std::size_t c_out, std::size_t k_t, std::size_t k_f,
         std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::conv2d; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

  std::size_t in_channels() const { return c_in_; }
  std::size_t out_channels() const { return c_out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t c_in_, c_out_, k_t_, k_f_;
  Parameter weight_;
  Parameter bias_;
};

// Per-channel batch normalization over (N, T, F).
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  LayerKind kind() const override { return LayerKind::batchnorm; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
  void commit(const std::any& cache) override;
  std::vector<Parameter*> parameters() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  const Tensor& running_mean() const { return running_mean_.value; }
  const Tensor& running_var() const { return running_var_.value; }

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter gamma_, beta_, running_mean_, running_var_;
};

class ReLU final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
};

class Sigmoid final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::sigmoid; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
};

// [N, C, T, F] -> [N, C, T / p_t, F / p_f]
class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::size_t pool_t, std::size_t pool_f);

  LayerKind kind() const override { return LayerKind::maxpool2d; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;

  std::size_t pool_t() const { return pool_t_; }
  std::size_t pool_f() const { return pool_f_; }

 private:
  std::size_t pool_t_, pool_f_;
};

// [N, C, T, F] -> [N, T, C * F] with feature index c * F + f.
class ToSequence final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::to_sequence; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
};

// Affine map over the last axis.
class Dense final : public Layer {
 public:
  Dense(std::size_t d_in, std::size_t d_out, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::dense; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t d_in_, d_out_;
  Parameter weight_, bias_;
};

// Bidirectional GRU, [N, T, D] -> [N, T, 2H] (forward states, then
// backward states). Gate layout per direction follows (reset, update, new).
class BiGru final : public Layer {
 public:
  BiGru(std::size_t input_size, std::size_t hidden_size, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::bigru; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override;

  std::size_t input_size() const { return d_; }
  std::size_t hidden_size() const { return h_; }

  struct Direction {
    Parameter w_ih;  // [3H x D]
    Parameter w_hh;  // [3H x H]
    Parameter b_ih;  // [3H]
    Parameter b_hh;  // [3H]
  };
  Direction& forward_direction() { return dirs_[0]; }
  Direction& backward_direction() { return dirs_[1]; }

 private:
  std::size_t d_, h_;
  Direction dirs_[2];
};

}  // namespace strfsed::nn
