#include <doctest.h>

#include <cmath>
#include <numbers>

#include "strfsed/strf.hpp"
#include "support.hpp"

using namespace strfsed;

namespace {

double l2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// Bin index nearest to a physical frequency on an n-point axis of step `step`.
double nominal_bin(double freq, std::size_t n, double step) { return freq * double(n) * step; }

}  // namespace

TEST_CASE("kernel has requested shape and unit norm") {
  const StrfKernel k = build_strf(ScaleRateParam::from_physical(1.0, 1.0));
  CHECK(k.values.shape() == Shape{50, 48});
  CHECK(std::abs(l2(k.values) - 1.0) < 1e-9);
  CHECK(k.values.all_finite());
}

TEST_CASE("every default-grid kernel peaks within one bin of its parameters") {
  const KernelAxes axes;
  const StrfSynthesizer synth(axes);
  std::size_t hits = 0;
  for (const ScaleRateParam& base : default_init_params()) {
    for (Direction dir : {Direction::up, Direction::down}) {
      ScaleRateParam p = base;
      p.direction = dir;
      const StrfKernel k = synth.build(p);
      CHECK(std::abs(l2(k.values) - 1.0) < 1e-9);
      const ModulationPeak peak = modulation_peak(k.values, axes.time_step_s, axes.freq_step_oct);
      const double rate_bin = nominal_bin(p.rate(), axes.n_t, axes.time_step_s);
      const double scale_bin = nominal_bin(p.scale(), axes.n_f, axes.freq_step_oct);
      const bool ok = std::abs(double(peak.rate_bin) - rate_bin) <= 1.0 + 1e-9 &&
                      std::abs(double(std::abs(peak.scale_bin)) - scale_bin) <= 1.0 + 1e-9 &&
                      peak.direction == dir;
      if (!ok) {
        MESSAGE("scale " << p.scale() << " rate " << p.rate() << " " << to_string(dir) << " -> bins ("
                         << peak.rate_bin << ", " << peak.scale_bin << ")");
      }
      hits += ok;
    }
  }
  CHECK(hits == 64);
}

TEST_CASE("up kernel mirrors down kernel along frequency") {
  const KernelAxes axes;
  const StrfSynthesizer synth(axes);
  double worst = 0.0;
  for (const ScaleRateParam& base : default_init_params()) {
    ScaleRateParam up = base, down = base;
    up.direction = Direction::up;
    down.direction = Direction::down;
    const Tensor u = synth.build(up).values;
    const Tensor d = synth.build(down).values;
    for (std::size_t t = 0; t < axes.n_t; ++t) {
      for (std::size_t f = 0; f < axes.n_f; ++f) {
        worst = std::max(worst, std::abs(u.at(t, f) - d.at(t, axes.n_f - 1 - f)));
      }
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("specific example: scale 2, rate 0.5, up") {
  const KernelAxes axes;
  const StrfKernel k = build_strf(ScaleRateParam::from_physical(2.0, 0.5, Direction::up), axes);
  const ModulationPeak peak = modulation_peak(k.values, axes.time_step_s, axes.freq_step_oct);
  CHECK(peak.direction == Direction::up);
  CHECK(std::abs(peak.rate_hz - 0.5) <= 0.1 + 1e-12);
  CHECK(std::abs(peak.scale_cyc_per_oct - 2.0) <= 0.5 + 1e-12);
}

TEST_CASE("bank ordering and determinism") {
  const auto params = default_init_params();
  const StrfBank bank = build_bank(params);
  REQUIRE(bank.kernel_count() == 64);
  for (std::size_t k = 0; k < 64; ++k) {
    CHECK(bank.kernels[k].param.direction == (k < 32 ? Direction::up : Direction::down));
    CHECK(bank.kernels[k].param.log_scale == params[k % 32].log_scale);
  }
  const std::vector<ScaleRateParam> one{params[5]};
  const StrfBank small = build_bank(one);
  REQUIRE(small.kernel_count() == 2);
  CHECK(small.kernels[0].param.direction == Direction::up);
  CHECK(small.kernels[1].param.direction == Direction::down);

  const std::vector<ScaleRateParam> dup{params[3], params[3]};
  const StrfBank twin = build_bank(dup);
  CHECK(max_abs_diff(twin.kernels[0].values, twin.kernels[1].values) == 0.0);
  CHECK_THROWS(build_bank(std::vector<ScaleRateParam>{}));
}

TEST_CASE("default init grid endpoints") {
  const auto params = default_init_params();
  REQUIRE(params.size() == 32);
  double lo = 1e9, hi = 0.0;
  for (const auto& p : params) {
    lo = std::min(lo, p.scale());
    hi = std::max(hi, p.scale());
    CHECK(p.rate() < 2.5);
    CHECK(p.rate() >= 0.3 - 1e-12);
  }
  CHECK(lo == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(hi == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("ripple stimulus formula") {
  RippleSpec spec;
  spec.amplitude = 0.0;
  const Tensor flat = ripple_stimulus(spec).values;
  for (double v : flat.values()) CHECK(v == 1.0);

  spec.amplitude = 0.8;
  spec.omega_hz = 1.0;
  spec.scale_cyc_per_oct = 0.5;
  spec.phase = 0.3;
  const Tensor r = ripple_stimulus(spec).values;
  // t = 0 column: period of 2 octaves = 48 bins.
  for (std::size_t x = 0; x + 48 < spec.n_bins; ++x) CHECK(std::abs(r.at(0, x) - r.at(0, x + 48)) < 1e-12);
  for (double v : r.values()) CHECK(v >= 0.0);

  spec.omega_hz = 2.5;
  CHECK_THROWS(ripple_stimulus(spec));
  spec.omega_hz = 1.0;
  spec.amplitude = 1.5;
  CHECK_THROWS(ripple_stimulus(spec));
}

TEST_CASE("ripple modulation peak lands on its parameters") {
  for (Direction dir : {Direction::up, Direction::down}) {
    RippleSpec spec;
    spec.omega_hz = 0.8;
    spec.scale_cyc_per_oct = 1.5;
    spec.direction = dir;
    const Tensor r = ripple_stimulus(spec).values;
    const ModulationPeak p = modulation_peak(r, 0.2, 1.0 / 24.0);
    CHECK(p.direction == dir);
    CHECK(std::abs(double(p.rate_bin) - nominal_bin(0.8, 150, 0.2)) <= 1.0);
    CHECK(std::abs(double(std::abs(p.scale_bin)) - nominal_bin(1.5, 64, 1.0 / 24.0)) <= 1.0);
  }
}

TEST_CASE("modulation peak on an on-grid cosine is exact") {
  const std::size_t n1 = 40, n2 = 30;
  Tensor g({n1, n2});
  for (std::size_t t = 0; t < n1; ++t) {
    for (std::size_t x = 0; x < n2; ++x) {
      g.at(t, x) = std::cos(2.0 * std::numbers::pi * (3.0 * double(t) / n1 + 5.0 * double(x) / n2));
    }
  }
  const ModulationPeak p = modulation_peak(g, 0.1, 0.25);
  CHECK(p.rate_bin == 3);
  CHECK(p.scale_bin == 5);
  CHECK(p.direction == Direction::down);
  CHECK(p.rate_hz == doctest::Approx(3.0 / (40 * 0.1)));
  CHECK(p.scale_cyc_per_oct == doctest::Approx(5.0 / (30 * 0.25)));

  CHECK_THROWS_WITH_AS(modulation_peak(Tensor({8, 8}), 0.2, 0.1), doctest::Contains("no peak"),
                       std::invalid_argument);
  CHECK_THROWS(modulation_peak(Tensor({3, 8}), 0.2, 0.1));
}

TEST_CASE("kernel derivatives match central differences at every init point") {
  const KernelAxes axes;
  const StrfSynthesizer synth(axes);
  double worst = 0.0;
  const double h = 1e-4;
  for (const ScaleRateParam& base : default_init_params()) {
    for (Direction dir : {Direction::up, Direction::down}) {
      ScaleRateParam p = base;
      p.direction = dir;
      const StrfKernelJet jet = synth.build_with_derivatives(p);
      CHECK(max_abs_diff(jet.values, synth.build(p).values) < 1e-12);
      for (int which = 0; which < 2; ++which) {
        ScaleRateParam plus = p, minus = p;
        (which == 0 ? plus.log_scale : plus.log_rate) += h;
        (which == 0 ? minus.log_scale : minus.log_rate) -= h;
        const Tensor a = synth.build(plus).values;
        const Tensor b = synth.build(minus).values;
        const Tensor& analytic = which == 0 ? jet.d_log_scale : jet.d_log_rate;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double fd = (a[i] - b[i]) / (2.0 * h);
          num += (fd - analytic[i]) * (fd - analytic[i]);
          den += analytic[i] * analytic[i];
        }
        worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-8));
      }
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("normalization fault hook breaks the unit norm") {
  StrfSynthesizer synth{KernelAxes{}};
  synth.set_normalization_fault(1.5);
  CHECK(std::abs(l2(synth.build(ScaleRateParam::from_physical(1.0, 1.0)).values) - 1.5) < 1e-9);
}
