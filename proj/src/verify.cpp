#include "strfsed/verify.hpp"

#include <algorithm>
#include <any>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "strfsed/fdy_conv.hpp"
#include "strfsed/metrics.hpp"
#include "strfsed/nn/layers.hpp"
#include "strfsed/nn/ops.hpp"
#include "strfsed/nn/optim.hpp"
#include "strfsed/strf_conv.hpp"

namespace strfsed::verify {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double weighted_sum(const Tensor& out, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

double central_diff(double& x, const std::function<double()>& loss, double h = 1e-4) {
  const double saved = x;
  x = saved + h;
  const double up = loss();
  x = saved - h;
  const double down = loss();
  x = saved;
  return (up - down) / (2.0 * h);
}

double nominal_bin(double freq, std::size_t n, double step) { return freq * double(n) * step; }

double l2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// Backward vs central differences on every `stride`-th entry of each
// trainable parameter and of the input.
double layer_fd_error(nn::Layer& layer, Tensor x, nn::Mode mode, std::mt19937_64& rng,
                      std::size_t stride = 1) {
  std::any cache;
  const Tensor out = layer.forward(x, mode, &cache);
  const Tensor w = random_tensor(out.shape(), rng);
  layer.zero_grad();
  const Tensor dx = layer.backward(w, cache, true);
  auto loss = [&] { return weighted_sum(layer.forward(x, mode, nullptr), w); };
  double worst = 0.0;
  for (nn::Parameter* p : layer.parameters()) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); i += stride) {
      worst = std::max(worst, rel_err(p->grad[i], central_diff(p->value[i], loss)));
    }
  }
  for (std::size_t i = 0; i < x.size(); i += stride) {
    worst = std::max(worst, rel_err(dx[i], central_diff(x[i], loss)));
  }
  return worst;
}

// Zero-padded "same" conv of one sample [C x T x F], centred taps.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t ci = x.dim(0), T = x.dim(1), F = x.dim(2), co = w.dim(0), kt = w.dim(2), kf = w.dim(3);
  Tensor out({co, T, F});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        double acc = b[o];
        for (std::size_t c = 0; c < ci; ++c) {
          for (std::size_t i = 0; i < kt; ++i) {
            for (std::size_t j = 0; j < kf; ++j) {
              const auto tt = std::ptrdiff_t(t + i) - std::ptrdiff_t(kt / 2);
              const auto ff = std::ptrdiff_t(f + j) - std::ptrdiff_t(kf / 2);
              if (tt < 0 || ff < 0 || tt >= std::ptrdiff_t(T) || ff >= std::ptrdiff_t(F)) continue;
              acc += w.at(o, c, i, j) * x.at(c, std::size_t(tt), std::size_t(ff));
            }
          }
        }
        out.at(o, t, f) = acc;
      }
    }
  }
  return out;
}

// Per-bin loop with the attention-mixed kernel.
Tensor naive_fdy(const Tensor& x, nn::FdyConv& layer, const Tensor& att) {
  const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t O = layer.out_channels(), K = layer.config().n_basis;
  const std::size_t kt = layer.kernel_t(), kf = layer.kernel_f();
  const Tensor& basis = layer.basis().value;
  const Tensor& bias = layer.basis_bias().value;
  Tensor out({O, T, F});
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t o = 0; o < O; ++o) {
      double b = 0.0;
      for (std::size_t k = 0; k < K; ++k) b += att.at(f, k) * bias.at(k, o);
      for (std::size_t t = 0; t < T; ++t) {
        double acc = b;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t i = 0; i < kt; ++i) {
            for (std::size_t j = 0; j < kf; ++j) {
              const auto tt = std::ptrdiff_t(t + i) - std::ptrdiff_t(kt / 2);
              const auto ff = std::ptrdiff_t(f + j) - std::ptrdiff_t(kf / 2);
              if (tt < 0 || ff < 0 || tt >= std::ptrdiff_t(T) || ff >= std::ptrdiff_t(F)) continue;
              double w = 0.0;
              for (std::size_t k = 0; k < K; ++k) w += att.at(f, k) * basis.at(k * O + o, c, i, j);
              acc += w * x.at(c, std::size_t(tt), std::size_t(ff));
            }
          }
        }
        out.at(o, t, f) = acc;
      }
    }
  }
  return out;
}

// Recomputes attention from the raw parameters.
Tensor naive_attention(const Tensor& x, nn::FdyConv& layer) {
  const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2), K = layer.config().n_basis;
  const Tensor& w1 = layer.att_w1().value;
  const Tensor& b1 = layer.att_b1().value;
  const Tensor& w2 = layer.att_w2().value;
  const Tensor& b2 = layer.att_b2().value;
  const std::size_t H = w1.dim(0);
  Tensor out({F, K});
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<double> pooled(C, 0.0), hidden(H), logits(K);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < T; ++t) pooled[c] += x.at(c, t, f) / double(T);
    }
    for (std::size_t h = 0; h < H; ++h) {
      double a = b1[h];
      for (std::size_t c = 0; c < C; ++c) a += w1.at(h, c) * pooled[c];
      hidden[h] = std::max(a, 0.0);
    }
    double mx = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
      double a = b2[k];
      for (std::size_t h = 0; h < H; ++h) a += w2.at(k, h) * hidden[h];
      logits[k] = a / layer.config().temperature;
      mx = std::max(mx, logits[k]);
    }
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t k = 0; k < K; ++k) out.at(f, k) = logits[k] / z;
  }
  return out;
}

struct BruteClass {
  double threshold = 0.0, f1 = 0.0;
  bool evaluated = false;
};

std::vector<BruteClass> brute_f1(const std::vector<SegmentScores>& pred, const std::vector<SegmentScores>& ref,
                                 std::size_t n_classes) {
  const auto grid = default_threshold_grid();
  std::vector<BruteClass> out(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t positives = 0;
    for (const auto& r : ref) {
      for (std::size_t s = 0; s < r.n_segments(); ++s) positives += r.grid.at(s, c) > 0.5;
    }
    double best = -1.0;
    for (double th : grid) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t file = 0; file < pred.size(); ++file) {
        for (std::size_t s = 0; s < pred[file].n_segments(); ++s) {
          const bool p = pred[file].grid.at(s, c) > th;
          const bool r = ref[file].grid.at(s, c) > 0.5;
          tp += p && r;
          fp += p && !r;
          fn += !p && r;
        }
      }
      const double den = double(2 * tp + fp + fn);
      const double f = den > 0 ? 2.0 * double(tp) / den : 0.0;
      if (f > best) {
        best = f;
        out[c].threshold = th;
      }
    }
    out[c].f1 = best;
    out[c].evaluated = positives > 0;
  }
  return out;
}

}  // namespace

KernelCheck check_kernels(const std::vector<ScaleRateParam>& params, const KernelAxes& axes,
                          double normalization_fault) {
  const auto start = Clock::now();
  StrfSynthesizer synth(axes);
  synth.set_normalization_fault(normalization_fault);
  KernelCheck out;
  for (const ScaleRateParam& base : params) {
    ScaleRateParam up = base, down = base;
    up.direction = Direction::up;
    down.direction = Direction::down;
    const StrfKernel ku = synth.build(up);
    const StrfKernel kd = synth.build(down);
    for (const StrfKernel* k : {&ku, &kd}) {
      ++out.kernels;
      out.worst_norm_error = std::max(out.worst_norm_error, std::abs(l2(k->values) - 1.0));
      const ModulationPeak peak = modulation_peak(k->values, axes.time_step_s, axes.freq_step_oct);
      const double rate_bin = nominal_bin(k->param.rate(), axes.n_t, axes.time_step_s);
      const double scale_bin = nominal_bin(k->param.scale(), axes.n_f, axes.freq_step_oct);
      // Slack absorbs exp(log(x)) rounding when the peak sits exactly one bin away.
      const bool hit = std::abs(double(peak.rate_bin) - rate_bin) <= 1.0 + 1e-9 &&
                       std::abs(double(std::abs(peak.scale_bin)) - scale_bin) <= 1.0 + 1e-9 &&
                       peak.direction == k->param.direction;
      out.peak_hits += hit;
    }
    for (std::size_t t = 0; t < axes.n_t; ++t) {
      for (std::size_t f = 0; f < axes.n_f; ++f) {
        out.worst_mirror_error =
            std::max(out.worst_mirror_error, std::abs(ku.values.at(t, f) - kd.values.at(t, axes.n_f - 1 - f)));
      }
    }
  }
  out.seconds = elapsed(start);
  return out;
}

SelectivityCheck check_selectivity(const std::vector<ScaleRateParam>& params) {
  const StrfBank bank = build_bank(params);
  SelectivityCheck out;
  for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
    RippleSpec spec;
    spec.scale_cyc_per_oct = bank.kernels[k].param.scale();
    spec.omega_hz = bank.kernels[k].param.rate();
    spec.direction = bank.kernels[k].param.direction;
    const RippleStimulus stim = ripple_stimulus(spec);
    const Tensor response = strf_conv_forward(stim.values, bank);
    const std::size_t plane = response.size() / bank.kernel_count();
    std::size_t best = 0;
    double best_energy = -1.0;
    for (std::size_t c = 0; c < bank.kernel_count(); ++c) {
      double e = 0.0;
      for (std::size_t i = 0; i < plane; ++i) e += response[c * plane + i] * response[c * plane + i];
      if (e > best_energy) {
        best_energy = e;
        best = c;
      }
    }
    ++out.stimuli;
    out.hits += best == k;
  }
  return out;
}

double strf_gradient_error(std::size_t configs, std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ls(std::log(0.3), std::log(6.0));
  std::uniform_real_distribution<double> lr(std::log(0.3), std::log(2.2));
  double worst = 0.0;
  for (std::size_t config = 0; config < configs; ++config) {
    std::vector<ScaleRateParam> params(2);
    for (auto& p : params) {
      p.log_scale = ls(rng);
      p.log_rate = lr(rng);
    }
    const Tensor x = random_tensor({26, 20}, rng);
    const Tensor w = random_tensor({4, 26, 20}, rng);
    const StrfParamGrad g = strf_param_grad(w, x, build_bank(params));
    auto loss = [&] { return weighted_sum(strf_conv_forward(x, build_bank(params)), w); };
    for (std::size_t p = 0; p < params.size(); ++p) {
      worst = std::max(worst, rel_err(g.d_log_scale[p], central_diff(params[p].log_scale, loss, step)));
      worst = std::max(worst, rel_err(g.d_log_rate[p], central_diff(params[p].log_rate, loss, step)));
    }
  }
  return worst;
}

NnCheck check_nn(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NnCheck out;

  for (auto [kt, kf] : {std::pair<std::size_t, std::size_t>{3, 3}, {1, 1}, {5, 3}}) {
    const Tensor x = random_tensor({3, 7, 6}, rng);
    const Tensor w = random_tensor({4, 3, kt, kf}, rng);
    const Tensor b = random_tensor({4}, rng);
    out.oracle_error = std::max(out.oracle_error, max_abs_diff(nn::ops::conv2d(x, w, b), naive_conv(x, w, b)));
  }
  {
    const Tensor x = random_tensor({2, 3, 5}, rng);
    const Tensor w = random_tensor({4, 5}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Tensor y = nn::ops::dense(x, w, b);
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t o = 0; o < 4; ++o) {
          double acc = b[o];
          for (std::size_t i = 0; i < 5; ++i) acc += w.at(o, i) * x.at(n, t, i);
          out.oracle_error = std::max(out.oracle_error, std::abs(acc - y.at(n, t, o)));
        }
      }
    }
  }
  {
    const Tensor x = random_tensor({2, 5, 7}, rng);
    const Tensor y = nn::ops::maxpool2d(x, 2, 3);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t f = 0; f < 2; ++f) {
          double m = -1e300;
          for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 3; ++j) m = std::max(m, x.at(c, 2 * t + i, 3 * f + j));
          }
          out.oracle_error = std::max(out.oracle_error, std::abs(y.at(c, t, f) - m));
        }
      }
    }
  }

  auto grad = [&](double e) { out.gradient_error = std::max(out.gradient_error, e); };
  nn::Conv2d conv(2, 3, 3, 3, rng);
  grad(layer_fd_error(conv, random_tensor({2, 2, 5, 4}, rng), nn::Mode::train, rng));
  nn::Dense dense(5, 4, rng);
  grad(layer_fd_error(dense, random_tensor({2, 3, 5}, rng), nn::Mode::train, rng));
  nn::MaxPool2d pool(2, 2);
  grad(layer_fd_error(pool, random_tensor({2, 2, 4, 6}, rng), nn::Mode::train, rng));
  Tensor away = random_tensor({2, 3, 4, 5}, rng);
  for (double& v : away.values()) {
    if (std::abs(v) < 1e-3) v = 0.5;
  }
  nn::ReLU relu;
  grad(layer_fd_error(relu, away, nn::Mode::train, rng));
  nn::Sigmoid sig;
  grad(layer_fd_error(sig, away, nn::Mode::train, rng));
  nn::ToSequence seq;
  grad(layer_fd_error(seq, away, nn::Mode::train, rng));
  nn::BatchNorm2d bn(3);
  bn.gamma().value = random_tensor({3}, rng, 0.5, 1.5);
  bn.beta().value = random_tensor({3}, rng);
  grad(layer_fd_error(bn, random_tensor({2, 3, 4, 3}, rng), nn::Mode::train, rng));
  grad(layer_fd_error(bn, random_tensor({2, 3, 4, 3}, rng), nn::Mode::eval, rng));
  nn::BiGru gru(3, 4, rng);
  grad(layer_fd_error(gru, random_tensor({2, 5, 3}, rng), nn::Mode::train, rng));
  nn::StrfConvLayer strf({ScaleRateParam::from_physical(1.0, 1.0), ScaleRateParam::from_physical(3.0, 0.5)});
  grad(layer_fd_error(strf, random_tensor({1, 1, 12, 10}, rng), nn::Mode::train, rng));

  nn::AdamConfig cfg;
  cfg.lr = 0.01;
  Tensor param({2}, {0.5, -1.0});
  const double grads[3][2] = {{0.1, -0.2}, {0.3, 0.05}, {-0.4, 0.1}};
  nn::AdamState state;
  double theta[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int s = 0; s < 3; ++s) {
    nn::adam_step(param, Tensor({2}, {grads[s][0], grads[s][1]}), state, cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[s][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[s][i] * grads[s][i];
      const double mh = m[i] / (1.0 - std::pow(0.9, s + 1));
      const double vh = v[i] / (1.0 - std::pow(0.999, s + 1));
      theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  out.adam_error = std::max(std::abs(param[0] - theta[0]), std::abs(param[1] - theta[1]));
  return out;
}

FdyCheck check_fdy(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FdyCheck out;
  nn::FdyConfig cfg;
  cfg.hidden = 3;

  {
    nn::FdyConv layer(2, 3, 3, 3, cfg, rng);
    layer.basis_bias().value = random_tensor({cfg.n_basis, 3}, rng);
    const Tensor x = random_tensor({2, 6, 9}, rng);
    const Tensor att = nn::fdy_attention(x, layer);
    for (std::size_t f = 0; f < att.dim(0); ++f) {
      double s = 0.0;
      for (std::size_t k = 0; k < att.dim(1); ++k) s += att.at(f, k);
      out.simplex_error = std::max(out.simplex_error, std::abs(s - 1.0));
    }
    out.oracle_error = std::max(max_abs_diff(att, naive_attention(x, layer)),
                                max_abs_diff(nn::fdy_forward(x, layer), naive_fdy(x, layer, att)));

    layer.force_uniform_attention(true);
    const std::size_t K = cfg.n_basis, O = 3;
    Tensor mean_w({O, 2, 3, 3}), mean_b({O});
    const Tensor& basis = layer.basis().value;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < mean_w.size(); ++i) mean_w[i] += basis[k * mean_w.size() + i] / double(K);
      for (std::size_t o = 0; o < O; ++o) mean_b[o] += layer.basis_bias().value.at(k, o) / double(K);
    }
    out.uniform_error = max_abs_diff(nn::fdy_forward(x, layer), nn::ops::conv2d(x, mean_w, mean_b));
    layer.force_uniform_attention(false);
  }

  {
    nn::FdyConv layer(2, 2, 3, 3, cfg, rng);
    layer.basis_bias().value = random_tensor({cfg.n_basis, 2}, rng);
    Tensor x = random_tensor({2, 5, 6}, rng);
    const Tensor w = random_tensor({2, 5, 6}, rng);
    layer.zero_grad();
    const Tensor dx = nn::fdy_backward(w, x, layer);
    auto loss = [&] { return weighted_sum(nn::fdy_forward(x, layer), w); };
    for (nn::Parameter* p : layer.parameters()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        out.gradient_error = std::max(out.gradient_error, rel_err(p->grad[i], central_diff(p->value[i], loss)));
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.gradient_error = std::max(out.gradient_error, rel_err(dx[i], central_diff(x[i], loss)));
    }
  }

  {
    // A frequency ramp makes the attention rows differ across bins.
    nn::FdyConv layer(1, 2, 3, 3, nn::FdyConfig{}, rng);
    nn::Conv2d plain(1, 2, 3, 3, rng);
    const std::size_t T = 6, F = 12;
    Tensor x({1, T, F}), shifted({1, T, F});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) x.at(0, t, f) = 3.0 * double(f) / F + 0.2 * std::sin(double(t + f));
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) shifted.at(0, t, (f + 1) % F) = x.at(0, t, f);
    }
    auto interior_gap = [&](const Tensor& y, const Tensor& ys) {
      double gap = 0.0;
      for (std::size_t o = 0; o < y.dim(0); ++o) {
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t f = 2; f + 2 < F; ++f) gap = std::max(gap, std::abs(ys.at(o, t, f + 1) - y.at(o, t, f)));
        }
      }
      return gap;
    };
    const Tensor att = nn::fdy_attention(x, layer);
    out.variant_gap = interior_gap(nn::fdy_apply(x, layer, att), nn::fdy_apply(shifted, layer, att));
    const Tensor s0 = slice_leading(plain.forward(x.reshaped({1, 1, T, F}), nn::Mode::eval, nullptr), 0);
    const Tensor s1 = slice_leading(plain.forward(shifted.reshaped({1, 1, T, F}), nn::Mode::eval, nullptr), 0);
    out.static_gap = interior_gap(s0, s1);
  }
  return out;
}

MetricCheck check_metrics(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_cls(1, 4), n_seg(1, 20), n_files(1, 3), coin(0, 1), grid_idx(0, 50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MetricCheck out;
  while (out.instances < instances) {
    const std::size_t C = std::size_t(n_cls(rng));
    std::vector<std::string> classes;
    for (std::size_t c = 0; c < C; ++c) classes.push_back("c" + std::to_string(c));
    std::vector<SegmentScores> pred, ref;
    const int files = n_files(rng);
    for (int f = 0; f < files; ++f) {
      const std::size_t S = std::size_t(n_seg(rng));
      Tensor p({S, C}), r({S, C});
      for (std::size_t i = 0; i < S * C; ++i) {
        r[i] = coin(rng);
        // Half the scores sit exactly on grid values to exercise ties.
        p[i] = coin(rng) ? grid_idx(rng) / 50.0 : u(rng);
      }
      pred.push_back({p, 1.0});
      ref.push_back({r, 1.0});
    }
    const auto brute = brute_f1(pred, ref, C);
    double macro = 0.0;
    std::size_t used = 0;
    for (const auto& b : brute) {
      if (b.evaluated) {
        macro += b.f1;
        ++used;
      }
    }
    if (used == 0) continue;  // f1_mo rejects instances without positives
    macro /= double(used);
    ++out.instances;
    const F1Report rep = f1_mo(pred, ref, classes);
    bool same = rep.macro_f1 == macro;
    for (std::size_t c = 0; c < C; ++c) {
      same = same && rep.per_class[c].evaluated == brute[c].evaluated &&
             rep.per_class[c].threshold == brute[c].threshold && rep.per_class[c].f1 == brute[c].f1;
    }
    out.agree += same;
  }
  return out;
}

std::vector<SuiteResult> run_suites(const VerifyOptions& options) {
  std::vector<SuiteResult> out;
  auto run = [&](const std::string& name, const std::function<bool(std::ostringstream&)>& body) {
    const auto start = Clock::now();
    std::ostringstream detail;
    bool ok = false;
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what();
    }
    out.push_back({name, ok, detail.str(), elapsed(start)});
  };

  run("kernels", [&](std::ostringstream& d) {
    const KernelCheck k = check_kernels(default_init_params(), {}, options.kernel_normalization_fault);
    d << "peaks " << k.peak_hits << "/" << k.kernels << ", norm err " << k.worst_norm_error << ", mirror err "
      << k.worst_mirror_error;
    return k.peak_hits == k.kernels && k.worst_norm_error < 1e-9 && k.worst_mirror_error < 1e-9;
  });
  run("strf-gradients", [&](std::ostringstream& d) {
    const double e = strf_gradient_error(4, options.seed);
    d << "max rel err " << e;
    return e < 1e-3;
  });
  run("nn-oracles", [&](std::ostringstream& d) {
    const NnCheck n = check_nn(options.seed);
    d << "naive err " << n.oracle_error << ", grad rel err " << n.gradient_error << ", adam err " << n.adam_error;
    return n.oracle_error < 1e-6 && n.gradient_error < 1e-3 && n.adam_error < 1e-10;
  });
  run("fdy", [&](std::ostringstream& d) {
    const FdyCheck f = check_fdy(options.seed);
    d << "simplex " << f.simplex_error << ", uniform " << f.uniform_error << ", naive " << f.oracle_error
      << ", grad " << f.gradient_error << ", shift gap " << f.variant_gap << " vs static " << f.static_gap;
    return f.simplex_error < 1e-6 && f.uniform_error < 1e-6 && f.oracle_error < 1e-6 && f.gradient_error < 1e-3 &&
           f.shift_witness();
  });
  run("metrics", [&](std::ostringstream& d) {
    const MetricCheck m = check_metrics(300, options.seed);
    d << m.agree << "/" << m.instances << " instances agree";
    return m.agree == m.instances;
  });
  return out;
}

}  // namespace strfsed::verify
