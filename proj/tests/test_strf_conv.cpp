#include <doctest.h>

#include <cmath>

#include "strfsed/strf_conv.hpp"
#include "support.hpp"

using namespace strfsed;

namespace {

// out[t][f] = sum_ij K[i][j] x[t + i - ct][f + j - cf], zero outside.
Tensor naive_correlate(const Tensor& x, const Tensor& k, std::size_t ct, std::size_t cf) {
  const auto T = static_cast<std::ptrdiff_t>(x.dim(0)), F = static_cast<std::ptrdiff_t>(x.dim(1));
  Tensor out({x.dim(0), x.dim(1)});
  for (std::ptrdiff_t t = 0; t < T; ++t) {
    for (std::ptrdiff_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k.dim(0); ++i) {
        const std::ptrdiff_t tt = t + static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(ct);
        if (tt < 0 || tt >= T) continue;
        for (std::size_t j = 0; j < k.dim(1); ++j) {
          const std::ptrdiff_t ff = f + static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(cf);
          if (ff < 0 || ff >= F) continue;
          acc += k.at(i, j) * x.at(static_cast<std::size_t>(tt), static_cast<std::size_t>(ff));
        }
      }
      out.at(static_cast<std::size_t>(t), static_cast<std::size_t>(f)) = acc;
    }
  }
  return out;
}

std::vector<ScaleRateParam> random_params(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ls(std::log(0.3), std::log(6.0));
  std::uniform_real_distribution<double> lr(std::log(0.3), std::log(2.2));
  std::vector<ScaleRateParam> out(n);
  for (auto& p : out) {
    p.log_scale = ls(rng);
    p.log_rate = lr(rng);
  }
  return out;
}

double objective(const Tensor& input, const std::vector<ScaleRateParam>& params, const Tensor& w) {
  return testing::weighted_sum(strf_conv_forward(input, build_bank(params)), w);
}

}  // namespace

TEST_CASE("zero input gives zero output; empty and non-finite input are rejected") {
  const StrfBank bank = build_bank(default_init_params());
  const Tensor out = strf_conv_forward(Tensor({30, 64}), bank);
  CHECK(out.shape() == Shape{64, 30, 64});
  for (double v : out.values()) CHECK(v == 0.0);
  CHECK_THROWS(strf_conv_forward(Tensor({0, 64}), bank));
  Tensor bad({5, 5});
  bad[3] = std::nan("");
  CHECK_THROWS(strf_conv_forward(bad, bank));
}

TEST_CASE("impulse response is the kernel reversed about the impulse") {
  const std::vector<ScaleRateParam> params{ScaleRateParam::from_physical(1.0, 1.0)};
  const StrfBank bank = build_bank(params);
  const std::size_t T = 70, F = 64, t0 = 35, f0 = 30;
  Tensor x({T, F});
  x.at(t0, f0) = 1.0;
  const Tensor out = strf_conv_forward(x, bank);
  const KernelAxes& ax = bank.axes;
  double worst = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor& K = bank.kernels[k].values;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        const auto i = static_cast<std::ptrdiff_t>(t0 + ax.time_center()) - static_cast<std::ptrdiff_t>(t);
        const auto j = static_cast<std::ptrdiff_t>(f0 + ax.freq_center()) - static_cast<std::ptrdiff_t>(f);
        const bool inside = i >= 0 && i < static_cast<std::ptrdiff_t>(ax.n_t) && j >= 0 &&
                            j < static_cast<std::ptrdiff_t>(ax.n_f);
        const double expect = inside ? K.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) : 0.0;
        worst = std::max(worst, std::abs(out.at(k, t, f) - expect));
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("fft correlation matches a naive loop") {
  std::mt19937_64 rng(5);
  const StrfBank bank = build_bank(random_params(2, rng));
  const Tensor x = testing::random_tensor({23, 17}, rng);
  const Tensor out = strf_conv_forward(x, bank);
  for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
    const Tensor ref = naive_correlate(x, bank.kernels[k].values, bank.axes.time_center(), bank.axes.freq_center());
    CHECK(max_abs_diff(slice_leading(out, k), ref) < 1e-10);
  }
}

TEST_CASE("matched ripples select their own channel") {
  const StrfBank bank = build_bank(default_init_params());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
    RippleSpec spec;
    spec.scale_cyc_per_oct = bank.kernels[k].param.scale();
    spec.omega_hz = bank.kernels[k].param.rate();
    spec.direction = bank.kernels[k].param.direction;
    const Tensor out = strf_conv_forward(ripple_stimulus(spec).values, bank);
    std::size_t best = 0;
    double best_e = -1.0;
    for (std::size_t c = 0; c < bank.kernel_count(); ++c) {
      const Tensor ch = slice_leading(out, c);
      double e = 0.0;
      for (double v : ch.values()) e += v * v;
      if (e > best_e) {
        best_e = e;
        best = c;
      }
    }
    hits += best == k;
  }
  MESSAGE("selectivity " << hits << "/64");
  CHECK(hits >= 58);
}

TEST_CASE("parameter gradients match central differences over 10 configurations") {
  std::mt19937_64 rng(2024);
  const double h = 1e-4;
  double worst = 0.0;
  for (int config = 0; config < 10; ++config) {
    auto params = random_params(2, rng);
    const Tensor x = testing::random_tensor({26, 20}, rng);
    const Tensor w = testing::random_tensor({4, 26, 20}, rng);
    const StrfParamGrad g = strf_param_grad(w, x, build_bank(params));
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (int which = 0; which < 2; ++which) {
        double& theta = which == 0 ? params[p].log_scale : params[p].log_rate;
        const double fd = testing::central_diff(theta, [&] { return objective(x, params, w); }, h);
        const double an = which == 0 ? g.d_log_scale[p] : g.d_log_rate[p];
        worst = std::max(worst, testing::rel_err(an, fd));
      }
    }
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("zero upstream and channel separability") {
  std::mt19937_64 rng(8);
  const StrfBank bank = build_bank(random_params(3, rng));
  const Tensor x = testing::random_tensor({20, 16}, rng);
  const StrfParamGrad zero = strf_param_grad(Tensor({6, 20, 16}), x, bank);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(zero.d_log_scale[p] == 0.0);
    CHECK(zero.d_log_rate[p] == 0.0);
  }
  // Only pair 1's kernels (up index 1, down index 4) receive gradient.
  Tensor up = testing::random_tensor({6, 20, 16}, rng);
  for (std::size_t k : {0, 2, 3, 5}) {
    for (std::size_t i = 0; i < 20 * 16; ++i) up[k * 320 + i] = 0.0;
  }
  const StrfParamGrad g = strf_param_grad(up, x, bank);
  CHECK(g.d_log_scale[0] == 0.0);
  CHECK(g.d_log_rate[2] == 0.0);
  CHECK(g.d_log_scale[1] != 0.0);
  CHECK(g.d_log_rate[1] != 0.0);
  CHECK_THROWS(strf_param_grad(Tensor({5, 20, 16}), x, bank));
}

TEST_CASE("layer backward: parameter and input gradients") {
  std::mt19937_64 rng(31);
  nn::StrfConvLayer layer(random_params(2, rng));
  const Tensor x = testing::random_tensor({2, 1, 18, 14}, rng);
  const Tensor w = testing::random_tensor({2, 4, 18, 14}, rng);
  std::any cache;
  const Tensor out = layer.forward(x, nn::Mode::train, &cache);
  CHECK(out.shape() == Shape{2, 4, 18, 14});
  layer.zero_grad();
  const Tensor dx = layer.backward(w, cache, true);
  auto loss = [&] { return testing::weighted_sum(layer.forward(x, nn::Mode::eval, nullptr), w); };

  nn::Parameter& pairs = *layer.parameters()[0];
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.value.size(); ++i) {
    const double fd = testing::central_diff(pairs.value[i], loss);
    worst = std::max(worst, testing::rel_err(pairs.grad[i], fd));
  }
  Tensor xv = x;
  auto loss_x = [&] { return testing::weighted_sum(layer.forward(xv, nn::Mode::eval, nullptr), w); };
  for (std::size_t i = 0; i < xv.size(); i += 7) {
    const double fd = testing::central_diff(xv[i], loss_x);
    worst = std::max(worst, testing::rel_err(dx[i], fd));
  }
  CHECK(worst < 1e-3);
}
