#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "strfsed/tensor.hpp"

namespace strfsed {

// Down: spectral peaks drift toward lower frequency as time advances.
enum class Direction { up, down };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

// One STRF parameterization. Scale (cycles/octave) and rate (Hz) are stored
// as logarithms so that optimization never leaves the positive orthant.
struct ScaleRateParam {
  double log_scale = 0.0;
  double log_rate = 0.0;
  Direction direction = Direction::down;

  static ScaleRateParam from_physical(double scale_cyc_per_oct, double rate_hz,
                                      Direction direction = Direction::down);
  double scale() const;
  double rate() const;
};

struct KernelAxes {
  std::size_t n_t = 50;
  std::size_t n_f = 48;
  double time_step_s = 0.2;
  double freq_step_oct = 1.0 / 24.0;

  void validate() const;
  // Tap of the kernel aligned with the output cell under "same" padding.
  std::size_t time_center() const { return (n_t - 1) / 2; }
  std::size_t freq_center() const { return (n_f - 1) / 2; }
  double time_nyquist_hz() const { return 0.5 / time_step_s; }
  double freq_nyquist_cyc_per_oct() const { return 0.5 / freq_step_oct; }
};

struct StrfKernel {
  Tensor values;  // [n_t x n_f], unit L2 norm
  KernelAxes axes;
  ScaleRateParam param;
};

// Kernels are ordered [up kernels in param order, then down kernels].
struct StrfBank {
  std::vector<ScaleRateParam> params;
  std::vector<StrfKernel> kernels;
  KernelAxes axes;

  std::size_t pair_count() const { return params.size(); }
  std::size_t kernel_count() const { return kernels.size(); }
};

// Kernel values plus derivatives with respect to (log_scale, log_rate).
struct StrfKernelJet {
  Tensor values;
  Tensor d_log_scale;
  Tensor d_log_rate;
};

// Precomputed axis tables for one KernelAxes. Immutable after construction
// and safe to share between threads.
class StrfSynthesizer {
 public:
  explicit StrfSynthesizer(const KernelAxes& axes);

  const KernelAxes& axes() const { return axes_; }
  StrfKernel build(const ScaleRateParam& param) const;
  StrfKernelJet build_with_derivatives(const ScaleRateParam& param) const;

  // Test hook: scales every built kernel by `factor` after normalization.
  void set_normalization_fault(double factor) { fault_ = factor; }

 private:
  template <class T>
  void synthesize(const T& log_scale, const T& log_rate, Direction direction,
                  std::vector<T>& out) const;

  KernelAxes axes_;
  std::vector<double> times_;         // t_i = i * dt
  std::vector<double> circ_re_, circ_im_;  // DFT analytic-signal circulant
  std::vector<double> nodes_;         // quadrature nodes in cyc/oct
  std::vector<double> weights_;
  std::vector<double> cos_, sin_;     // [n_f x n_nodes] of 2*pi*nu*x
  double fault_ = 1.0;
};

StrfKernel build_strf(const ScaleRateParam& param, const KernelAxes& axes = {});
StrfBank build_bank(std::span<const ScaleRateParam> params, const KernelAxes& axes = {});

// 8 log-spaced scales in [0.25, 8] cyc/oct x 4 log-spaced rates in
// [0.3, 2.4] Hz, scale-major.
std::vector<ScaleRateParam> default_init_params();
std::vector<double> log_spaced(double lo, double hi, std::size_t n);

struct RippleSpec {
  double omega_hz = 1.0;
  double scale_cyc_per_oct = 1.0;
  Direction direction = Direction::down;
  std::size_t n_frames = 150;
  std::size_t n_bins = 64;
  double frame_period_s = 0.2;
  double bins_per_octave = 24.0;
  double amplitude = 1.0;
  double phase = 0.0;
};

struct RippleStimulus {
  Tensor values;  // [n_frames x n_bins]
  RippleSpec spec;
};

// values[t][x] = 1 + A cos(2 pi (w t dt + s W x dx) + phi), s = +1 down, -1 up.
RippleStimulus ripple_stimulus(const RippleSpec& spec);

struct ModulationPeak {
  double rate_hz = 0.0;
  double scale_cyc_per_oct = 0.0;
  Direction direction = Direction::down;
  std::size_t rate_bin = 0;
  std::ptrdiff_t scale_bin = 0;  // signed: > 0 down, < 0 up
};

// Peak of the mean-removed 2-D DFT magnitude over the positive-rate half
// plane, DC row and column excluded. Ties resolve to the lowest linear bin.
ModulationPeak modulation_peak(const Tensor& grid, double time_step_s, double freq_step_oct);

// Calibration of the seed dilations: the undilated temporal seed
// t^2 exp(-3.5 t) sin(2 pi t) has its spectral peak at this frequency, and the
// spectral seed (1 - x^2) exp(-x^2 / 2) at 1 / (sqrt(2) pi).
inline constexpr double kTemporalSeedPeak = 1.0044795740994037;
inline constexpr double kSpectralSeedPeak = 0.22507907903927651;
inline constexpr std::size_t kSpectralQuadratureIntervals = 2048;

}  // namespace strfsed
