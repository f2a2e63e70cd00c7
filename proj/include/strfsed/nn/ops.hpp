#pragma once

#include <cstddef>

#include "strfsed/tensor.hpp"

// Per-sample functional forms of the primitives. Layers batch them over the
// leading dimension.
namespace strfsed::nn::ops {

// Cross-correlation, zero "same" padding, stride 1, odd kernel dims.
// input [C_in x T x F], weights [C_out x C_in x k_t x k_f], bias [C_out].
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct Conv2dGrads {
  Tensor input;    // empty when not requested
  Tensor weights;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& grad_output, const Tensor& input,
                            const Tensor& weights, bool need_input_grad);

// Non-overlapping windows, floor division of both spatial dims.
// input [C x T x F] -> [C x T/p_t x F/p_f].
Tensor maxpool2d(const Tensor& input, std::size_t pool_t, std::size_t pool_f);

// Affine map over the last axis: [..., D_in] x W[D_out x D_in] + b -> [..., D_out].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);
double sigmoid(double x);

// Joins along axis `axis`; every other dim must match.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

double mse_loss(const Tensor& pred, const Tensor& target);
Tensor mse_grad(const Tensor& pred, const Tensor& target);

}  // namespace strfsed::nn::ops

namespace strfsed::nn::detail {

// Padded-width planes: each row is F + 2*pad_f wide so that one tap of the
// kernel is a single contiguous axpy over all rows. Pad columns of outputs
// hold garbage and are cropped.
struct ConvGeometry {
  std::size_t c_in, c_out, t, f, k_t, k_f;
  std::size_t pad_t() const { return (k_t - 1) / 2; }
  std::size_t pad_f() const { return (k_f - 1) / 2; }
  std::size_t width() const { return f + 2 * pad_f(); }
  std::size_t in_plane() const { return (t + 2 * pad_t()) * width() + 2 * pad_f(); }
  std::size_t out_plane() const { return t * width(); }
};

// input [c_in x t x f] -> zero-padded planes (c_in * in_plane()).
void pad_input(const double* input, const ConvGeometry& g, double* padded);
// Accumulates weights (*) padded input into out planes (c_out * out_plane()).
void conv_accumulate(const double* padded, const double* weights, const ConvGeometry& g,
                     double* out);
// Crops out planes into [c_out x t x f] and adds bias (may be null).
void crop_output(const double* out, const double* bias, const ConvGeometry& g, double* result);
// grad [c_out x t x f] -> widened planes with zero pad columns.
void widen_grad(const double* grad, const ConvGeometry& g, double* widened);
// dW[co][ci][i][j] += <widened grad, shifted padded input>.
void conv_weight_grad(const double* widened, const double* padded, const ConvGeometry& g,
                      double* dweights);
// Scatters widened grad through the weights into padded input-grad planes.
void conv_input_grad(const double* widened, const double* weights, const ConvGeometry& g,
                     double* dpadded);
// Crops padded input-grad planes into [c_in x t x f].
void crop_input_grad(const double* dpadded, const ConvGeometry& g, double* dinput);

}  // namespace strfsed::nn::detail
