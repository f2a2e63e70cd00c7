#include <doctest.h>

#include <cmath>
#include <memory>

#include "strfsed/nn/layers.hpp"
#include "strfsed/nn/ops.hpp"
#include "strfsed/nn/optim.hpp"
#include "support.hpp"

using namespace strfsed;
using namespace strfsed::nn;

namespace {

// Worst relative error of backward against central differences for a layer
// driven in `mode`, checking every `stride`-th entry.
double layer_fd_error(Layer& layer, Tensor x, Mode mode, std::mt19937_64& rng, std::size_t stride = 1,
                      bool check_input = true) {
  std::any cache;
  const Tensor out = layer.forward(x, mode, &cache);
  const Tensor w = testing::random_tensor(out.shape(), rng);
  layer.zero_grad();
  const Tensor dx = layer.backward(w, cache, check_input);
  auto loss = [&] { return testing::weighted_sum(layer.forward(x, mode, nullptr), w); };
  double worst = 0.0;
  for (Parameter* p : layer.parameters()) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); i += stride) {
      worst = std::max(worst, testing::rel_err(p->grad[i], testing::central_diff(p->value[i], loss)));
    }
  }
  if (check_input) {
    for (std::size_t i = 0; i < x.size(); i += stride) {
      worst = std::max(worst, testing::rel_err(dx[i], testing::central_diff(x[i], loss)));
    }
  }
  return worst;
}

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
              const auto tt = static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(kt / 2);
              const auto ff = static_cast<std::ptrdiff_t>(f + j) - static_cast<std::ptrdiff_t>(kf / 2);
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

struct NaiveGru {
  Tensor w_ih, w_hh, b_ih, b_hh;
  std::size_t h;
  // Runs over x [T x D] in the given order; returns [T x H] indexed by time.
  Tensor run(const Tensor& x, bool reverse) const {
    const std::size_t T = x.dim(0), D = x.dim(1);
    Tensor out({T, h});
    std::vector<double> state(h, 0.0), next(h);
    for (std::size_t s = 0; s < T; ++s) {
      const std::size_t t = reverse ? T - 1 - s : s;
      for (std::size_t k = 0; k < h; ++k) {
        double gi[3], gh[3];
        for (int g = 0; g < 3; ++g) {
          const std::size_t row = g * h + k;
          gi[g] = b_ih[row];
          gh[g] = b_hh[row];
          for (std::size_t d = 0; d < D; ++d) gi[g] += w_ih.at(row, d) * x.at(t, d);
          for (std::size_t j = 0; j < h; ++j) gh[g] += w_hh.at(row, j) * state[j];
        }
        const double r = 1.0 / (1.0 + std::exp(-(gi[0] + gh[0])));
        const double z = 1.0 / (1.0 + std::exp(-(gi[1] + gh[1])));
        const double n = std::tanh(gi[2] + r * gh[2]);
        next[k] = (1.0 - z) * n + z * state[k];
      }
      state = next;
      for (std::size_t k = 0; k < h; ++k) out.at(t, k) = state[k];
    }
    return out;
  }
};

class Opaque final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Shape output_shape(const Shape& s) const override { return s; }
  Tensor forward(const Tensor& x, Mode, std::any*) const override { return x; }
};

}  // namespace

TEST_CASE("conv2d matches a naive loop and its backward matches differences") {
  std::mt19937_64 rng(1);
  for (auto [kt, kf] : {std::pair<std::size_t, std::size_t>{3, 3}, {1, 1}, {5, 3}}) {
    const Tensor x = testing::random_tensor({3, 7, 6}, rng);
    const Tensor w = testing::random_tensor({4, 3, kt, kf}, rng);
    const Tensor b = testing::random_tensor({4}, rng);
    CHECK(max_abs_diff(ops::conv2d(x, w, b), naive_conv(x, w, b)) < 1e-12);
  }
  Conv2d conv(2, 3, 3, 3, rng);
  CHECK(layer_fd_error(conv, testing::random_tensor({2, 2, 5, 4}, rng), Mode::train, rng) < 1e-6);
}

TEST_CASE("dense matches a naive loop") {
  std::mt19937_64 rng(2);
  const Tensor x = testing::random_tensor({2, 3, 5}, rng);
  const Tensor w = testing::random_tensor({4, 5}, rng);
  const Tensor b = testing::random_tensor({4}, rng);
  const Tensor y = ops::dense(x, w, b);
  REQUIRE(y.shape() == Shape{2, 3, 4});
  double worst = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t o = 0; o < 4; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < 5; ++i) acc += w.at(o, i) * x.at(n, t, i);
        worst = std::max(worst, std::abs(acc - y.at(n, t, o)));
      }
    }
  }
  CHECK(worst < 1e-12);
  Dense dense(5, 4, rng);
  CHECK(layer_fd_error(dense, x, Mode::train, rng) < 1e-6);
}

TEST_CASE("dense 3 -> 2 holds 8 trainable values") {
  std::mt19937_64 rng(3);
  Dense d(3, 2, rng);
  CHECK(d.trainable_count() == 8);
}

TEST_CASE("maxpool matches a naive loop and routes gradient to the argmax") {
  std::mt19937_64 rng(4);
  const Tensor x = testing::random_tensor({2, 5, 7}, rng);
  const Tensor y = ops::maxpool2d(x, 2, 3);
  REQUIRE(y.shape() == Shape{2, 2, 2});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t f = 0; f < 2; ++f) {
        double m = -1e300;
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t j = 0; j < 3; ++j) m = std::max(m, x.at(c, 2 * t + i, 3 * f + j));
        }
        CHECK(y.at(c, t, f) == m);
      }
    }
  }
  MaxPool2d pool(2, 2);
  CHECK(layer_fd_error(pool, testing::random_tensor({2, 2, 4, 6}, rng), Mode::train, rng) < 1e-6);
  MaxPool2d identity(1, 1);
  const Tensor z = testing::random_tensor({1, 2, 3, 3}, rng);
  CHECK(max_abs_diff(identity.forward(z, Mode::eval, nullptr), z) == 0.0);
}

TEST_CASE("relu, sigmoid and to_sequence backward") {
  std::mt19937_64 rng(5);
  ReLU relu;
  Tensor x = testing::random_tensor({2, 3, 4, 5}, rng);
  for (double& v : x.values()) {
    if (std::abs(v) < 1e-3) v = 0.5;  // keep away from the kink
  }
  CHECK(layer_fd_error(relu, x, Mode::train, rng) < 1e-6);
  Sigmoid sig;
  CHECK(layer_fd_error(sig, x, Mode::train, rng) < 1e-6);
  ToSequence seq;
  const Tensor s = seq.forward(x, Mode::eval, nullptr);
  REQUIRE(s.shape() == Shape{2, 4, 15});
  CHECK(s.at(1, 2, 2 * 5 + 3) == x.at(1, 2, 2, 3));
  CHECK(layer_fd_error(seq, x, Mode::train, rng) < 1e-6);
}

TEST_CASE("batchnorm statistics, running buffers and backward") {
  std::mt19937_64 rng(6);
  BatchNorm2d bn(3);
  const Tensor x = testing::random_tensor({4, 3, 2, 5}, rng, -2.0, 3.0);
  std::any cache;
  const Tensor y = bn.forward(x, Mode::train, &cache);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0, raw_mean = 0.0, raw_sq = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 10; ++i) {
        const double v = y[(n * 3 + c) * 10 + i];
        mean += v;
        sq += v * v;
        raw_mean += x[(n * 3 + c) * 10 + i];
      }
    }
    mean /= 40.0;
    raw_mean /= 40.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(sq / 40.0 == doctest::Approx(1.0).epsilon(1e-4));
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 10; ++i) {
        const double d = x[(n * 3 + c) * 10 + i] - raw_mean;
        raw_sq += d * d;
      }
    }
    bn.commit(cache);
    CHECK(bn.running_mean()[c] == doctest::Approx(0.1 * raw_mean).epsilon(1e-6));
    CHECK(bn.running_var()[c] == doctest::Approx(0.9 + 0.1 * raw_sq / 39.0).epsilon(1e-6));
    bn = BatchNorm2d(3);
    cache.reset();
    bn.forward(x, Mode::train, &cache);
  }
  CHECK(bn.trainable_count() == 6);

  BatchNorm2d fresh(3);
  fresh.gamma().value = testing::random_tensor({3}, rng, 0.5, 1.5);
  fresh.beta().value = testing::random_tensor({3}, rng);
  CHECK(layer_fd_error(fresh, x, Mode::train, rng) < 1e-5);
  CHECK(layer_fd_error(fresh, x, Mode::eval, rng) < 1e-6);
}

TEST_CASE("bigru matches a naive recurrence, is direction-symmetric and differentiable") {
  std::mt19937_64 rng(7);
  const std::size_t D = 3, H = 4, T = 6;
  BiGru gru(D, H, rng);
  const Tensor x = testing::random_tensor({2, T, D}, rng);
  const Tensor y = gru.forward(x, Mode::eval, nullptr);
  REQUIRE(y.shape() == Shape{2, T, 2 * H});
  auto naive = [&](BiGru::Direction& d) {
    return NaiveGru{d.w_ih.value, d.w_hh.value, d.b_ih.value, d.b_hh.value, H};
  };
  const NaiveGru fwd = naive(gru.forward_direction());
  const NaiveGru bwd = naive(gru.backward_direction());
  double worst = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    const Tensor xs = slice_leading(x, n);
    const Tensor a = fwd.run(xs, false), b = bwd.run(xs, true);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < H; ++k) {
        worst = std::max(worst, std::abs(a.at(t, k) - y.at(n, t, k)));
        worst = std::max(worst, std::abs(b.at(t, k) - y.at(n, t, H + k)));
      }
    }
  }
  CHECK(worst < 1e-12);

  // Zero weights and biases: every gate is 1/2 and the candidate is 0.
  BiGru zero(D, H, rng);
  for (Parameter* p : zero.parameters()) p->value.fill(0.0);
  const Tensor silent = zero.forward(x, Mode::eval, nullptr);
  for (double v : silent.values()) CHECK(v == 0.0);

  // Same weights in both directions: the backward half on reversed input
  // equals the forward half on the original.
  BiGru tied(D, H, rng);
  tied.backward_direction().w_ih.value = tied.forward_direction().w_ih.value;
  tied.backward_direction().w_hh.value = tied.forward_direction().w_hh.value;
  tied.backward_direction().b_ih.value = tied.forward_direction().b_ih.value;
  tied.backward_direction().b_hh.value = tied.forward_direction().b_hh.value;
  Tensor rev(x.shape());
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < D; ++d) rev.at(n, t, d) = x.at(n, T - 1 - t, d);
    }
  }
  const Tensor y1 = tied.forward(x, Mode::eval, nullptr);
  const Tensor y2 = tied.forward(rev, Mode::eval, nullptr);
  double sym = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < H; ++k) sym = std::max(sym, std::abs(y1.at(n, t, k) - y2.at(n, T - 1 - t, H + k)));
    }
  }
  CHECK(sym < 1e-12);

  CHECK(layer_fd_error(gru, x, Mode::train, rng) < 1e-5);
  CHECK(gru.trainable_count() == 2 * (3 * H * D + 3 * H * H + 6 * H));
}

TEST_CASE("end-to-end toy network gradient") {
  std::mt19937_64 rng(8);
  std::vector<LayerPtr> net;
  net.push_back(std::make_unique<Conv2d>(1, 3, 3, 3, rng));
  net.push_back(std::make_unique<BatchNorm2d>(3));
  net.push_back(std::make_unique<ReLU>());
  net.push_back(std::make_unique<MaxPool2d>(1, 2));
  net.push_back(std::make_unique<ToSequence>());
  net.push_back(std::make_unique<BiGru>(6, 3, rng));
  net.push_back(std::make_unique<Dense>(6, 2, rng));
  net.push_back(std::make_unique<Sigmoid>());
  const Tensor x = testing::random_tensor({2, 1, 5, 4}, rng);
  const Tensor target = testing::random_tensor({2, 5, 2}, rng, 0.0, 1.0);

  auto run = [&](std::vector<std::any>* caches) {
    Tensor h = x;
    for (std::size_t i = 0; i < net.size(); ++i) h = net[i]->forward(h, Mode::train, caches ? &(*caches)[i] : nullptr);
    return h;
  };
  std::vector<std::any> caches(net.size());
  const Tensor pred = run(&caches);
  Tensor g = ops::mse_grad(pred, target);
  for (auto& l : net) l->zero_grad();
  for (std::size_t i = net.size(); i-- > 0;) g = net[i]->backward(g, caches[i], i > 0);
  auto loss = [&] { return ops::mse_loss(run(nullptr), target); };
  double worst = 0.0;
  for (auto& l : net) {
    for (Parameter* p : l->parameters()) {
      if (!p->trainable) continue;
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        worst = std::max(worst, testing::rel_err(p->grad[i], testing::central_diff(p->value[i], loss, 1e-5)));
      }
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("mse loss and gradient") {
  const Tensor p({4}, {0.1, 0.5, 0.9, 0.0});
  const Tensor t({4}, {0.0, 1.0, 1.0, 0.0});
  CHECK(ops::mse_loss(p, t) == doctest::Approx((0.01 + 0.25 + 0.01) / 4.0));
  const Tensor g = ops::mse_grad(p, t);
  CHECK(g[1] == doctest::Approx(2.0 * -0.5 / 4.0));
  CHECK_THROWS(ops::mse_loss(p, Tensor({3})));
}

TEST_CASE("adam follows the hand recurrence for three steps") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  Tensor param({2}, {0.5, -1.0});
  const double grads[3][2] = {{0.1, -0.2}, {0.3, 0.05}, {-0.4, 0.1}};
  AdamState state;
  double theta[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int s = 0; s < 3; ++s) {
    adam_step(param, Tensor({2}, {grads[s][0], grads[s][1]}), state, cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[s][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[s][i] * grads[s][i];
      const double mh = m[i] / (1.0 - std::pow(0.9, s + 1));
      const double vh = v[i] / (1.0 - std::pow(0.999, s + 1));
      theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(std::abs(param[0] - theta[0]) < 1e-10);
  CHECK(std::abs(param[1] - theta[1]) < 1e-10);

  CHECK_THROWS_AS(adam_step(param, Tensor({2}, {1.0, std::nan("")}), state, cfg), std::domain_error);
}

TEST_CASE("adam optimizer skips buffers and zeroes gradients") {
  BatchNorm2d bn(2);
  for (Parameter* p : bn.parameters()) p->grad.fill(1.0);
  Adam opt(bn.parameters(), AdamConfig{});
  opt.step();
  CHECK(bn.running_var()[0] == 1.0);
  CHECK(bn.gamma().value[0] < 1.0);
  CHECK(bn.gamma().grad[0] == 0.0);
}

TEST_CASE("a layer without a backward rule refuses to differentiate") {
  Opaque op;
  CHECK_THROWS_AS(op.backward(Tensor({1}), std::any{}, true), NoBackwardRule);
}
