#include "strfsed/strf_conv.hpp"

#include <stdexcept>

#include "strfsed/nn/layers.hpp"

namespace strfsed {

namespace {

std::size_t wrap(std::ptrdiff_t v, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

void check_plane(const Tensor& input, const char* who) {
  if (input.rank() != 2 || input.empty()) {
    throw std::invalid_argument(std::string(who) + ": expected non-empty [T x F] input, got " +
                                shape_string(input.shape()));
  }
}

void check_upstream(const Tensor& upstream, const Tensor& input, const StrfBank& bank) {
  const Shape want{bank.kernel_count(), input.dim(0), input.dim(1)};
  if (upstream.shape() != want) {
    throw std::invalid_argument("strf_conv: upstream shape " + shape_string(upstream.shape()) +
                                " does not match " + shape_string(want));
  }
}

}  // namespace

PlaneCorrelator::PlaneCorrelator(std::size_t t, std::size_t f, const KernelAxes& axes)
    : t_(t),
      f_(f),
      axes_(axes),
      pt_(fft_friendly_size(t + axes.n_t - 1)),
      pf_(fft_friendly_size(f + axes.n_f - 1)),
      fft_(pt_, pf_),
      real_(pt_ * pf_),
      work_(fft_.complex_size()) {
  if (t == 0 || f == 0) throw std::invalid_argument("strf_conv: empty input");
}

PlaneCorrelator::Spectrum PlaneCorrelator::input_spectrum(const double* plane) {
  std::fill(real_.begin(), real_.end(), 0.0);
  for (std::size_t t = 0; t < t_; ++t) {
    std::copy_n(plane + t * f_, f_, real_.data() + t * pf_);
  }
  Spectrum out(fft_.complex_size());
  fft_.forward(real_, out);
  return out;
}

PlaneCorrelator::Spectrum PlaneCorrelator::kernel_spectrum(const double* kernel) {
  std::fill(real_.begin(), real_.end(), 0.0);
  const auto ct = static_cast<std::ptrdiff_t>(axes_.time_center());
  const auto cf = static_cast<std::ptrdiff_t>(axes_.freq_center());
  for (std::size_t i = 0; i < axes_.n_t; ++i) {
    const std::size_t row = wrap(ct - static_cast<std::ptrdiff_t>(i), pt_);
    for (std::size_t j = 0; j < axes_.n_f; ++j) {
      real_[row * pf_ + wrap(cf - static_cast<std::ptrdiff_t>(j), pf_)] = kernel[i * axes_.n_f + j];
    }
  }
  Spectrum out(fft_.complex_size());
  fft_.forward(real_, out);
  return out;
}

void PlaneCorrelator::inverse(const Spectrum& spec) { fft_.inverse(spec, real_); }

void PlaneCorrelator::correlate(const Spectrum& input, const Spectrum& kernel, double* out) {
  for (std::size_t k = 0; k < work_.size(); ++k) work_[k] = input[k] * kernel[k];
  inverse(work_);
  const double scale = 1.0 / static_cast<double>(pt_ * pf_);
  for (std::size_t t = 0; t < t_; ++t) {
    for (std::size_t f = 0; f < f_; ++f) out[t * f_ + f] = real_[t * pf_ + f] * scale;
  }
}

void PlaneCorrelator::accumulate_kernel_grad(const Spectrum& grad, const Spectrum& input,
                                             double* dkernel) {
  for (std::size_t k = 0; k < work_.size(); ++k) work_[k] = std::conj(grad[k]) * input[k];
  inverse(work_);
  const double scale = 1.0 / static_cast<double>(pt_ * pf_);
  const auto ct = static_cast<std::ptrdiff_t>(axes_.time_center());
  const auto cf = static_cast<std::ptrdiff_t>(axes_.freq_center());
  for (std::size_t i = 0; i < axes_.n_t; ++i) {
    const std::size_t row = wrap(static_cast<std::ptrdiff_t>(i) - ct, pt_);
    for (std::size_t j = 0; j < axes_.n_f; ++j) {
      dkernel[i * axes_.n_f + j] +=
          real_[row * pf_ + wrap(static_cast<std::ptrdiff_t>(j) - cf, pf_)] * scale;
    }
  }
}

void PlaneCorrelator::accumulate_input_grad(const Spectrum& grad, const Spectrum& kernel,
                                            double* dinput) {
  for (std::size_t k = 0; k < work_.size(); ++k) work_[k] = grad[k] * std::conj(kernel[k]);
  inverse(work_);
  const double scale = 1.0 / static_cast<double>(pt_ * pf_);
  for (std::size_t t = 0; t < t_; ++t) {
    for (std::size_t f = 0; f < f_; ++f) dinput[t * f_ + f] += real_[t * pf_ + f] * scale;
  }
}

Tensor strf_conv_forward(const Tensor& input, const StrfBank& bank) {
  check_plane(input, "strf_conv_forward");
  if (!input.all_finite()) throw std::invalid_argument("strf_conv_forward: non-finite input");
  const std::size_t t = input.dim(0), f = input.dim(1);
  PlaneCorrelator corr(t, f, bank.axes);
  const auto x = corr.input_spectrum(input.data());
  Tensor out({bank.kernel_count(), t, f});
  for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
    corr.correlate(x, corr.kernel_spectrum(bank.kernels[k].values.data()), out.data() + k * t * f);
  }
  return out;
}

Tensor strf_conv_forward(const MelSpectrogram& input, const StrfBank& bank) {
  return strf_conv_forward(input.values, bank);
}

std::vector<Tensor> strf_kernel_grad(const Tensor& upstream, const Tensor& input,
                                     const StrfBank& bank) {
  check_plane(input, "strf_kernel_grad");
  check_upstream(upstream, input, bank);
  const std::size_t t = input.dim(0), f = input.dim(1);
  PlaneCorrelator corr(t, f, bank.axes);
  const auto x = corr.input_spectrum(input.data());
  std::vector<Tensor> grads;
  grads.reserve(bank.kernel_count());
  for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
    Tensor dk({bank.axes.n_t, bank.axes.n_f});
    corr.accumulate_kernel_grad(corr.grad_spectrum(upstream.data() + k * t * f), x, dk.data());
    grads.push_back(std::move(dk));
  }
  return grads;
}

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Kernel k belongs to pair k mod P with direction up for k < P.
StrfParamGrad chain_kernel_grads(const std::vector<Tensor>& dkernels,
                                 const std::vector<ScaleRateParam>& params,
                                 const StrfSynthesizer& synth) {
  const std::size_t p = params.size();
  StrfParamGrad g{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
  for (std::size_t k = 0; k < dkernels.size(); ++k) {
    ScaleRateParam param = params[k % p];
    param.direction = k < p ? Direction::up : Direction::down;
    const StrfKernelJet jet = synth.build_with_derivatives(param);
    g.d_log_scale[k % p] += dot(dkernels[k], jet.d_log_scale);
    g.d_log_rate[k % p] += dot(dkernels[k], jet.d_log_rate);
  }
  return g;
}

}  // namespace

StrfParamGrad strf_param_grad(const Tensor& upstream, const Tensor& input, const StrfBank& bank) {
  const auto dkernels = strf_kernel_grad(upstream, input, bank);
  if (bank.kernel_count() != 2 * bank.pair_count()) {
    throw std::invalid_argument("strf_param_grad: bank must hold an up and a down kernel per pair");
  }
  return chain_kernel_grads(dkernels, bank.params, StrfSynthesizer(bank.axes));
}

namespace nn {

StrfConvLayer::StrfConvLayer(std::vector<ScaleRateParam> init, const KernelAxes& axes)
    : axes_(axes), synth_(axes) {
  if (init.empty()) throw std::invalid_argument("strfconv: no scale-rate pairs");
  axes.validate();
  pairs_ = Parameter{"scale_rate", Tensor({init.size(), 2}), Tensor({init.size(), 2}), true};
  for (std::size_t p = 0; p < init.size(); ++p) {
    pairs_.value.at(p, 0) = init[p].log_scale;
    pairs_.value.at(p, 1) = init[p].log_rate;
  }
  round_to_float(pairs_.value);
}

std::vector<ScaleRateParam> StrfConvLayer::current_params() const {
  std::vector<ScaleRateParam> out(pair_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p].log_scale = pairs_.value.at(p, 0);
    out[p].log_rate = pairs_.value.at(p, 1);
  }
  return out;
}

StrfBank StrfConvLayer::bank() const {
  StrfBank bank;
  bank.axes = axes_;
  bank.params = current_params();
  for (Direction dir : {Direction::up, Direction::down}) {
    for (ScaleRateParam p : bank.params) {
      p.direction = dir;
      bank.kernels.push_back(synth_.build(p));
    }
  }
  return bank;
}

Shape StrfConvLayer::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != 1) {
    throw std::invalid_argument("strfconv: expected [N,1,T,F], got " + shape_string(input));
  }
  return {input[0], out_channels(), input[2], input[3]};
}

Tensor StrfConvLayer::forward(const Tensor& input, Mode, std::any* cache) const {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t n = input.dim(0), t = input.dim(2), f = input.dim(3);
  const StrfBank kernels = bank();
  PlaneCorrelator corr(t, f, axes_);
  std::vector<PlaneCorrelator::Spectrum> kspec;
  for (const auto& k : kernels.kernels) kspec.push_back(corr.kernel_spectrum(k.values.data()));
  Tensor out(out_shape);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = corr.input_spectrum(input.data() + s * t * f);
    for (std::size_t k = 0; k < kspec.size(); ++k) {
      corr.correlate(x, kspec[k], out.data() + (s * kspec.size() + k) * t * f);
    }
  }
  if (cache) *cache = input;
  return out;
}

Tensor StrfConvLayer::backward(const Tensor& grad_output, const std::any& cache,
                               bool need_input_grad) {
  const auto& input = std::any_cast<const Tensor&>(cache);
  const std::size_t n = input.dim(0), t = input.dim(2), f = input.dim(3);
  const std::size_t kc = out_channels();
  PlaneCorrelator corr(t, f, axes_);
  std::vector<Tensor> dkernels(kc, Tensor({axes_.n_t, axes_.n_f}));
  std::vector<PlaneCorrelator::Spectrum> kspec;
  Tensor dinput;
  if (need_input_grad) {
    dinput = Tensor(input.shape());
    for (const auto& k : bank().kernels) kspec.push_back(corr.kernel_spectrum(k.values.data()));
  }
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = corr.input_spectrum(input.data() + s * t * f);
    for (std::size_t k = 0; k < kc; ++k) {
      const auto g = corr.grad_spectrum(grad_output.data() + (s * kc + k) * t * f);
      corr.accumulate_kernel_grad(g, x, dkernels[k].data());
      if (need_input_grad) corr.accumulate_input_grad(g, kspec[k], dinput.data() + s * t * f);
    }
  }
  const StrfParamGrad g = chain_kernel_grads(dkernels, current_params(), synth_);
  for (std::size_t p = 0; p < pair_count(); ++p) {
    pairs_.grad.at(p, 0) += g.d_log_scale[p];
    pairs_.grad.at(p, 1) += g.d_log_rate[p];
  }
  return dinput;
}

}  // namespace nn
}  // namespace strfsed
