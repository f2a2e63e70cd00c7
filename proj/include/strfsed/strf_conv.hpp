#pragma once

#include <complex>
#include <cstddef>
#include <random>
#include <vector>

#include "strfsed/fft.hpp"
#include "strfsed/frontend.hpp"
#include "strfsed/nn/layer.hpp"
#include "strfsed/strf.hpp"

namespace strfsed {

// FFT-backed "same" cross-correlation of one [T x F] plane with kernels of a
// fixed size. Transform sizes are padded so circular wrap never reaches valid
// output cells. Not thread-safe; use one instance per thread.
class PlaneCorrelator {
 public:
  PlaneCorrelator(std::size_t t, std::size_t f, const KernelAxes& axes);

  using Spectrum = std::vector<std::complex<double>>;

  Spectrum input_spectrum(const double* plane);                  // plane [T x F]
  Spectrum kernel_spectrum(const double* kernel);                // kernel [n_t x n_f]
  Spectrum grad_spectrum(const double* grad) { return input_spectrum(grad); }

  // out[t][f] = sum_ij K[i][j] x[t + i - c_t][f + j - c_f]
  void correlate(const Spectrum& input, const Spectrum& kernel, double* out);
  // dK[i][j] += sum_tf G[t][f] x[t + i - c_t][f + j - c_f]
  void accumulate_kernel_grad(const Spectrum& grad, const Spectrum& input, double* dkernel);
  // dx[t][f] += sum_ij G[t - i + c_t][f - j + c_f] K[i][j]
  void accumulate_input_grad(const Spectrum& grad, const Spectrum& kernel, double* dinput);

 private:
  void inverse(const Spectrum& spec);

  std::size_t t_, f_;
  KernelAxes axes_;
  std::size_t pt_, pf_;
  RealFft fft_;
  std::vector<double> real_;
  Spectrum work_;
};

// [T x F] -> [K x T x F], one channel per bank kernel.
Tensor strf_conv_forward(const Tensor& input, const StrfBank& bank);
Tensor strf_conv_forward(const MelSpectrogram& input, const StrfBank& bank);

// dL/dK for every kernel, each [n_t x n_f], from upstream [K x T x F].
std::vector<Tensor> strf_kernel_grad(const Tensor& upstream, const Tensor& input,
                                     const StrfBank& bank);

struct StrfParamGrad {
  std::vector<double> d_log_scale;  // one per pair
  std::vector<double> d_log_rate;
};

// Chains dL/dK through the kernel builder's derivatives. Each pair collects
// the contributions of both its up and down kernels.
StrfParamGrad strf_param_grad(const Tensor& upstream, const Tensor& input, const StrfBank& bank);

namespace nn {

// [N, 1, T, F] -> [N, 2P, T, F]. The only trainable scalars are P pairs of
// (log scale, log rate), stored as a [P x 2] parameter.
class StrfConvLayer final : public Layer {
 public:
  StrfConvLayer(std::vector<ScaleRateParam> init, const KernelAxes& axes = {});

  LayerKind kind() const override { return LayerKind::strfconv; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, std::any* cache) const override;
  Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&pairs_}; }

  std::size_t pair_count() const { return pairs_.value.dim(0); }
  std::size_t out_channels() const { return 2 * pair_count(); }
  const KernelAxes& axes() const { return axes_; }
  std::vector<ScaleRateParam> current_params() const;
  StrfBank bank() const;

 private:
  KernelAxes axes_;
  StrfSynthesizer synth_;
  Parameter pairs_;
};

}  // namespace nn
}  // namespace strfsed
