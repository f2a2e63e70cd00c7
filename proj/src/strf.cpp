#include "strfsed/strf.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "strfsed/dual.hpp"

namespace strfsed {
namespace {

using std::numbers::pi;
using Jet = Dual<2>;

constexpr double kTemporalDecay = 3.5;

template <class T>
T temporal_seed(const T& u) {
  using std::exp;
  using std::sin;
  return u * u * exp(-kTemporalDecay * u) * sin(2.0 * pi * u);
}

// Fourier transform of (1 - y^2) exp(-y^2 / 2) dilated to y = x / s,
// evaluated at nu cycles per octave: s * sqrt(2 pi) (2 pi nu s)^2 exp(-2 pi^2 (nu s)^2).
template <class T>
T spectral_seed_ft(double nu, const T& s) {
  using std::exp;
  const T xi = nu * s;
  const T w = 2.0 * pi * xi;
  return std::sqrt(2.0 * pi) * s * w * w * exp(-0.5 * w * w);
}

std::ptrdiff_t signed_bin(std::size_t j, std::size_t n) {
  return j <= n / 2 ? static_cast<std::ptrdiff_t>(j)
                    : static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(n);
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::up ? "up" : "down"; }

Direction direction_from_string(const std::string& s) {
  if (s == "up") return Direction::up;
  if (s == "down") return Direction::down;
  throw std::invalid_argument("unknown direction '" + s + "'");
}

ScaleRateParam ScaleRateParam::from_physical(double scale_cyc_per_oct, double rate_hz,
                                             Direction direction) {
  if (!(scale_cyc_per_oct > 0.0) || !(rate_hz > 0.0)) {
    throw std::invalid_argument("scale and rate must be positive");
  }
  return {std::log(scale_cyc_per_oct), std::log(rate_hz), direction};
}

double ScaleRateParam::scale() const { return std::exp(log_scale); }
double ScaleRateParam::rate() const { return std::exp(log_rate); }

void KernelAxes::validate() const {
  if (n_t < 2 || n_f < 2) throw std::invalid_argument("kernel axes: need at least 2 taps per axis");
  if (!(time_step_s > 0.0) || !(freq_step_oct > 0.0)) {
    throw std::invalid_argument("kernel axes: steps must be positive");
  }
}

StrfSynthesizer::StrfSynthesizer(const KernelAxes& axes) : axes_(axes) {
  axes_.validate();
  const std::size_t nt = axes_.n_t;
  const std::size_t nf = axes_.n_f;

  times_.resize(nt);
  for (std::size_t i = 0; i < nt; ++i) times_[i] = static_cast<double>(i) * axes_.time_step_s;

  // Analytic signal through the DFT (keep DC, double positive bins, keep
  // Nyquist, drop negative bins) is the circulant with these coefficients.
  circ_re_.assign(nt, 0.0);
  circ_im_.assign(nt, 0.0);
  for (std::size_t d = 0; d < nt; ++d) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k <= nt / 2; ++k) {
      double gain = 2.0;
      if (k == 0 || (nt % 2 == 0 && k == nt / 2)) gain = 1.0;
      acc += gain * std::polar(1.0, 2.0 * pi * static_cast<double>(k * d) / static_cast<double>(nt));
    }
    circ_re_[d] = acc.real() / static_cast<double>(nt);
    circ_im_[d] = acc.imag() / static_cast<double>(nt);
  }

  // Band-limited analytic signal along frequency: trapezoid quadrature of
  // 2 H(nu) exp(i 2 pi nu x) over [0, Nyquist].
  const std::size_t q = kSpectralQuadratureIntervals;
  const double nyq = axes_.freq_nyquist_cyc_per_oct();
  nodes_.resize(q + 1);
  weights_.resize(q + 1);
  for (std::size_t k = 0; k <= q; ++k) {
    nodes_[k] = nyq * static_cast<double>(k) / static_cast<double>(q);
    weights_[k] = 2.0 * nyq / static_cast<double>(q) * ((k == 0 || k == q) ? 0.5 : 1.0);
  }
  cos_.resize(nf * (q + 1));
  sin_.resize(nf * (q + 1));
  for (std::size_t j = 0; j < nf; ++j) {
    const double x = (static_cast<double>(j) - 0.5 * static_cast<double>(nf - 1)) * axes_.freq_step_oct;
    for (std::size_t k = 0; k <= q; ++k) {
      const double phase = 2.0 * pi * nodes_[k] * x;
      cos_[j * (q + 1) + k] = std::cos(phase);
      sin_[j * (q + 1) + k] = std::sin(phase);
    }
  }
}

template <class T>
void StrfSynthesizer::synthesize(const T& log_scale, const T& log_rate, Direction direction,
                                 std::vector<T>& out) const {
  using std::exp;
  using std::sqrt;
  const std::size_t nt = axes_.n_t;
  const std::size_t nf = axes_.n_f;
  const std::size_t nq = nodes_.size();

  // Temporal factor: dilated seed, then analytic extension.
  const T dilation = exp(log_rate) * (1.0 / kTemporalSeedPeak);
  std::vector<T> seed(nt);
  for (std::size_t i = 0; i < nt; ++i) seed[i] = temporal_seed(T(times_[i]) * dilation);
  std::vector<T> at_re(nt), at_im(nt);
  for (std::size_t m = 0; m < nt; ++m) {
    T re(0.0), im(0.0);
    for (std::size_t j = 0; j < nt; ++j) {
      const std::size_t d = (m + nt - j) % nt;
      re += circ_re_[d] * seed[j];
      im += circ_im_[d] * seed[j];
    }
    at_re[m] = re;
    at_im[m] = im;
  }

  // Spectral factor: seed spectrum at dilation s = peak / scale.
  const T s = kSpectralSeedPeak * exp(-log_scale);
  std::vector<T> weighted(nq);
  for (std::size_t k = 0; k < nq; ++k) weighted[k] = weights_[k] * spectral_seed_ft(nodes_[k], s);
  std::vector<T> as_re(nf), as_im(nf);
  for (std::size_t j = 0; j < nf; ++j) {
    const double* c = cos_.data() + j * nq;
    const double* sn = sin_.data() + j * nq;
    T re(0.0), im(0.0);
    for (std::size_t k = 0; k < nq; ++k) {
      re += c[k] * weighted[k];
      im += sn[k] * weighted[k];
    }
    as_re[j] = re;
    as_im[j] = im;
  }

  // Re(At * As) for down, Re(At * conj(As)) for up.
  const double sign = direction == Direction::down ? -1.0 : 1.0;
  out.resize(nt * nf);
  T energy(0.0);
  for (std::size_t i = 0; i < nt; ++i) {
    for (std::size_t j = 0; j < nf; ++j) {
      T v = at_re[i] * as_re[j] + sign * (at_im[i] * as_im[j]);
      energy += v * v;
      out[i * nf + j] = v;
    }
  }
  const T inv_norm = T(1.0) / sqrt(energy);
  for (T& v : out) v *= inv_norm;
}

StrfKernel StrfSynthesizer::build(const ScaleRateParam& param) const {
  std::vector<double> values;
  synthesize(param.log_scale, param.log_rate, param.direction, values);
  if (fault_ != 1.0) {
    for (double& v : values) v *= fault_;
  }
  return {Tensor({axes_.n_t, axes_.n_f}, std::move(values)), axes_, param};
}

StrfKernelJet StrfSynthesizer::build_with_derivatives(const ScaleRateParam& param) const {
  std::vector<Jet> values;
  synthesize(Jet::variable(param.log_scale, 0), Jet::variable(param.log_rate, 1),
             param.direction, values);
  StrfKernelJet jet{Tensor({axes_.n_t, axes_.n_f}), Tensor({axes_.n_t, axes_.n_f}),
                    Tensor({axes_.n_t, axes_.n_f})};
  for (std::size_t i = 0; i < values.size(); ++i) {
    jet.values[i] = values[i].v;
    jet.d_log_scale[i] = values[i].d[0];
    jet.d_log_rate[i] = values[i].d[1];
  }
  return jet;
}

StrfKernel build_strf(const ScaleRateParam& param, const KernelAxes& axes) {
  return StrfSynthesizer(axes).build(param);
}

StrfBank build_bank(std::span<const ScaleRateParam> params, const KernelAxes& axes) {
  if (params.empty()) throw std::invalid_argument("build_bank: empty parameter list");
  const StrfSynthesizer synth(axes);
  StrfBank bank;
  bank.axes = axes;
  bank.params.assign(params.begin(), params.end());
  bank.kernels.reserve(2 * params.size());
  for (Direction dir : {Direction::up, Direction::down}) {
    for (ScaleRateParam p : params) {
      p.direction = dir;
      bank.kernels.push_back(synth.build(p));
    }
  }
  return bank;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  std::vector<double> out(n);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<ScaleRateParam> default_init_params() {
  std::vector<ScaleRateParam> params;
  for (double scale : log_spaced(0.25, 8.0, 8)) {
    for (double rate : log_spaced(0.3, 2.4, 4)) {
      params.push_back(ScaleRateParam::from_physical(scale, rate));
    }
  }
  return params;
}

RippleStimulus ripple_stimulus(const RippleSpec& spec) {
  if (!(spec.amplitude >= 0.0 && spec.amplitude <= 1.0)) {
    throw std::invalid_argument("ripple: amplitude must lie in [0, 1]");
  }
  if (spec.n_frames == 0 || spec.n_bins == 0 || !(spec.frame_period_s > 0.0) ||
      !(spec.bins_per_octave > 0.0)) {
    throw std::invalid_argument("ripple: empty grid or non-positive step");
  }
  if (!(spec.omega_hz >= 0.0) || !(spec.scale_cyc_per_oct >= 0.0)) {
    throw std::invalid_argument("ripple: modulation frequencies must be non-negative");
  }
  if (spec.omega_hz >= 0.5 / spec.frame_period_s || spec.scale_cyc_per_oct >= 0.5 * spec.bins_per_octave) {
    throw std::invalid_argument("ripple: modulation above Nyquist");
  }
  const double s = spec.direction == Direction::down ? 1.0 : -1.0;
  const double dx = 1.0 / spec.bins_per_octave;
  RippleStimulus out{Tensor({spec.n_frames, spec.n_bins}), spec};
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    for (std::size_t x = 0; x < spec.n_bins; ++x) {
      const double arg = spec.omega_hz * static_cast<double>(t) * spec.frame_period_s +
                         s * spec.scale_cyc_per_oct * static_cast<double>(x) * dx;
      out.values.at(t, x) = 1.0 + spec.amplitude * std::cos(2.0 * pi * arg + spec.phase);
    }
  }
  return out;
}

ModulationPeak modulation_peak(const Tensor& grid, double time_step_s, double freq_step_oct) {
  if (grid.rank() != 2 || grid.dim(0) < 4 || grid.dim(1) < 4) {
    throw std::invalid_argument("modulation_peak: grid must be at least 4x4");
  }
  const std::size_t n1 = grid.dim(0);
  const std::size_t n2 = grid.dim(1);
  const double mean = sum(grid) / static_cast<double>(grid.size());
  double scale_ref = 0.0;
  for (double v : grid.values()) scale_ref += std::abs(v - mean);

  // Separable DFT: along frequency, then along time.
  std::vector<std::complex<double>> rows(n1 * n2);
  for (std::size_t t = 0; t < n1; ++t) {
    for (std::size_t k = 0; k < n2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t x = 0; x < n2; ++x) {
        acc += (grid.at(t, x) - mean) *
               std::polar(1.0, -2.0 * pi * static_cast<double>((k * x) % n2) / static_cast<double>(n2));
      }
      rows[t * n2 + k] = acc;
    }
  }
  double best = -1.0;
  std::size_t best_i = 0, best_j = 0;
  for (std::size_t i = 1; i <= n1 / 2; ++i) {
    for (std::size_t j = 1; j < n2; ++j) {
      std::complex<double> acc = 0.0;
      for (std::size_t t = 0; t < n1; ++t) {
        acc += rows[t * n2 + j] *
               std::polar(1.0, -2.0 * pi * static_cast<double>((i * t) % n1) / static_cast<double>(n1));
      }
      const double mag = std::abs(acc);
      if (mag > best) {
        best = mag;
        best_i = i;
        best_j = j;
      }
    }
  }
  if (!(best > 1e-12 * scale_ref) || best <= 0.0) {
    throw std::invalid_argument("modulation_peak: no peak (grid is constant)");
  }
  ModulationPeak peak;
  peak.rate_bin = best_i;
  peak.scale_bin = signed_bin(best_j, n2);
  peak.rate_hz = static_cast<double>(best_i) / (static_cast<double>(n1) * time_step_s);
  peak.scale_cyc_per_oct =
      static_cast<double>(std::abs(peak.scale_bin)) / (static_cast<double>(n2) * freq_step_oct);
  peak.direction = peak.scale_bin > 0 ? Direction::down : Direction::up;
  return peak;
}

}  // namespace strfsed
