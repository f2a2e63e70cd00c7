#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "strfsed/nn/layers.hpp"
#include "strfsed/nn/ops.hpp"

namespace strfsed::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::bigru: return "bigru";
    case LayerKind::dense: return "dense";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::strfconv: return "strfconv";
    case LayerKind::fdyconv: return "fdyconv";
    case LayerKind::concat: return "concat";
    case LayerKind::to_sequence: return "to_sequence";
  }
  return "unknown";
}

Tensor Layer::backward(const Tensor&, const std::any&, bool) {
  throw NoBackwardRule(to_string(kind()));
}

std::vector<const Parameter*> Layer::parameters() const {
  auto mut = const_cast<Layer*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t Layer::trainable_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

void Layer::zero_grad() {
  for (Parameter* p : parameters()) {
    if (p->trainable) p->grad.fill(0.0);
  }
}

void round_to_float(Tensor& t) {
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void init_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  round_to_float(t);
}

namespace {

Parameter make_param(std::string name, Shape shape, bool trainable = true) {
  Parameter p{std::move(name), Tensor(shape), Tensor(), trainable};
  if (trainable) p.grad = Tensor(std::move(shape));
  return p;
}

void require_rank(const Tensor& t, std::size_t rank, const char* who) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(who) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_string(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// convolution kernels

namespace detail {

void pad_input(const double* input, const ConvGeometry& g, double* padded) {
  const std::size_t w = g.width();
  std::fill(padded, padded + g.c_in * g.in_plane(), 0.0);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* plane = padded + c * g.in_plane();
    const double* src = input + c * g.t * g.f;
    for (std::size_t t = 0; t < g.t; ++t) {
      std::memcpy(plane + (t + g.pad_t()) * w + g.pad_f(), src + t * g.f, g.f * sizeof(double));
    }
  }
}

void conv_accumulate(const double* padded, const double* weights, const ConvGeometry& g,
                     double* out) {
  const std::size_t w = g.width();
  const std::size_t len = g.out_plane();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double* __restrict dst = out + co * len;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* plane = padded + ci * g.in_plane();
      const double* wk = weights + (co * g.c_in + ci) * g.k_t * g.k_f;
      for (std::size_t i = 0; i < g.k_t; ++i) {
        for (std::size_t j = 0; j < g.k_f; ++j) {
          const double wv = wk[i * g.k_f + j];
          const double* __restrict src = plane + i * w + j;
          for (std::size_t n = 0; n < len; ++n) dst[n] += wv * src[n];
        }
      }
    }
  }
}

void crop_output(const double* out, const double* bias, const ConvGeometry& g, double* result) {
  const std::size_t w = g.width();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double b = bias ? bias[co] : 0.0;
    for (std::size_t t = 0; t < g.t; ++t) {
      const double* src = out + co * g.out_plane() + t * w;
      double* dst = result + (co * g.t + t) * g.f;
      for (std::size_t f = 0; f < g.f; ++f) dst[f] = src[f] + b;
    }
  }
}

void widen_grad(const double* grad, const ConvGeometry& g, double* widened) {
  const std::size_t w = g.width();
  std::fill(widened, widened + g.c_out * g.out_plane(), 0.0);
  for (std::size_t co = 0; co < g.c_out; ++co) {
    for (std::size_t t = 0; t < g.t; ++t) {
      std::memcpy(widened + co * g.out_plane() + t * w, grad + (co * g.t + t) * g.f,
                  g.f * sizeof(double));
    }
  }
}

void conv_weight_grad(const double* widened, const double* padded, const ConvGeometry& g,
                      double* dweights) {
  const std::size_t w = g.width();
  const std::size_t len = g.out_plane();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double* __restrict gr = widened + co * len;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* plane = padded + ci * g.in_plane();
      double* dw = dweights + (co * g.c_in + ci) * g.k_t * g.k_f;
      for (std::size_t i = 0; i < g.k_t; ++i) {
        for (std::size_t j = 0; j < g.k_f; ++j) {
          const double* __restrict src = plane + i * w + j;
          double acc = 0.0;
          for (std::size_t n = 0; n < len; ++n) acc += gr[n] * src[n];
          dw[i * g.k_f + j] += acc;
        }
      }
    }
  }
}

void conv_input_grad(const double* widened, const double* weights, const ConvGeometry& g,
                     double* dpadded) {
  const std::size_t w = g.width();
  const std::size_t len = g.out_plane();
  std::fill(dpadded, dpadded + g.c_in * g.in_plane(), 0.0);
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    double* plane = dpadded + ci * g.in_plane();
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* __restrict gr = widened + co * len;
      const double* wk = weights + (co * g.c_in + ci) * g.k_t * g.k_f;
      for (std::size_t i = 0; i < g.k_t; ++i) {
        for (std::size_t j = 0; j < g.k_f; ++j) {
          const double wv = wk[i * g.k_f + j];
          double* __restrict dst = plane + i * w + j;
          for (std::size_t n = 0; n < len; ++n) dst[n] += wv * gr[n];
        }
      }
    }
  }
}

void crop_input_grad(const double* dpadded, const ConvGeometry& g, double* dinput) {
  const std::size_t w = g.width();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* plane = dpadded + c * g.in_plane();
    for (std::size_t t = 0; t < g.t; ++t) {
      std::memcpy(dinput + (c * g.t + t) * g.f, plane + (t + g.pad_t()) * w + g.pad_f(),
                  g.f * sizeof(double));
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// functional forms

namespace ops {

namespace {

detail::ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights) {
  require_rank(input, 3, "conv2d");
  require_rank(weights, 4, "conv2d weights");
  if (weights.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: channel mismatch, input has " +
                                std::to_string(input.dim(0)) + " channels, weights expect " +
                                std::to_string(weights.dim(1)));
  }
  if (weights.dim(2) % 2 == 0 || weights.dim(3) % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel dims must be odd for same padding");
  }
  return {input.dim(0), weights.dim(0), input.dim(1), input.dim(2), weights.dim(2), weights.dim(3)};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const auto g = conv_geometry(input, weights);
  if (!bias.empty() && bias.size() != g.c_out) throw std::invalid_argument("conv2d: bias size mismatch");
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> out(g.c_out * g.out_plane(), 0.0);
  detail::pad_input(input.data(), g, padded.data());
  detail::conv_accumulate(padded.data(), weights.data(), g, out.data());
  Tensor result({g.c_out, g.t, g.f});
  detail::crop_output(out.data(), bias.empty() ? nullptr : bias.data(), g, result.data());
  return result;
}

Conv2dGrads conv2d_backward(const Tensor& grad_output, const Tensor& input, const Tensor& weights,
                            bool need_input_grad) {
  const auto g = conv_geometry(input, weights);
  if (grad_output.shape() != Shape{g.c_out, g.t, g.f}) {
    throw std::invalid_argument("conv2d_backward: grad shape " + shape_string(grad_output.shape()));
  }
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> widened(g.c_out * g.out_plane());
  detail::pad_input(input.data(), g, padded.data());
  detail::widen_grad(grad_output.data(), g, widened.data());

  Conv2dGrads grads{Tensor(), Tensor(weights.shape()), Tensor({g.c_out})};
  detail::conv_weight_grad(widened.data(), padded.data(), g, grads.weights.data());
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double acc = 0.0;
    for (std::size_t n = 0; n < g.t * g.f; ++n) acc += grad_output[co * g.t * g.f + n];
    grads.bias[co] = acc;
  }
  if (need_input_grad) {
    std::vector<double> dpadded(g.c_in * g.in_plane());
    detail::conv_input_grad(widened.data(), weights.data(), g, dpadded.data());
    grads.input = Tensor(input.shape());
    detail::crop_input_grad(dpadded.data(), g, grads.input.data());
  }
  return grads;
}

Tensor maxpool2d(const Tensor& input, std::size_t pool_t, std::size_t pool_f) {
  require_rank(input, 3, "maxpool2d");
  if (pool_t == 0 || pool_f == 0) throw std::invalid_argument("maxpool2d: pool dims must be >= 1");
  const std::size_t c = input.dim(0), t = input.dim(1), f = input.dim(2);
  if (pool_t > t || pool_f > f) {
    throw std::invalid_argument("maxpool2d: pool (" + std::to_string(pool_t) + "," +
                                std::to_string(pool_f) + ") larger than input " +
                                shape_string(input.shape()));
  }
  const std::size_t to = t / pool_t, fo = f / pool_f;
  Tensor out({c, to, fo});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < to; ++i) {
      for (std::size_t j = 0; j < fo; ++j) {
        double best = input.at(ch, i * pool_t, j * pool_f);
        for (std::size_t a = 0; a < pool_t; ++a) {
          for (std::size_t b = 0; b < pool_f; ++b) {
            best = std::max(best, input.at(ch, i * pool_t + a, j * pool_f + b));
          }
        }
        out.at(ch, i, j) = best;
      }
    }
  }
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  const std::size_t d_out = weights.dim(0), d_in = weights.dim(1);
  if (input.rank() == 0 || input.shape().back() != d_in) {
    throw std::invalid_argument("dense: input " + shape_string(input.shape()) +
                                " does not end in " + std::to_string(d_in));
  }
  if (bias.size() != d_out) throw std::invalid_argument("dense: bias size mismatch");
  Shape shape = input.shape();
  shape.back() = d_out;
  Tensor out(shape);
  const std::size_t rows = input.size() / d_in;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * d_in;
    double* y = out.data() + r * d_out;
    for (std::size_t o = 0; o < d_out; ++o) {
      const double* wr = weights.data() + o * d_in;
      double acc = bias[o];
      for (std::size_t i = 0; i < d_in; ++i) acc += wr[i] * x[i];
      y[o] = acc;
    }
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = sigmoid(v);
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw std::invalid_argument("concat: rank mismatch or bad axis");
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw std::invalid_argument("concat: shape mismatch " + shape_string(a.shape()) + " vs " +
                                  shape_string(b.shape()) + " off axis " + std::to_string(axis));
    }
  }
  Shape shape = a.shape();
  shape[axis] = a.dim(axis) + b.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t na = a.dim(axis) * inner, nb = b.dim(axis) * inner;
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data() + o * na, na, out.data() + o * (na + nb));
    std::copy_n(b.data() + o * nb, nb, out.data() + o * (na + nb) + na);
  }
  return out;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("mse_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  }
  if (pred.empty()) throw std::invalid_argument("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw std::invalid_argument("mse_grad: shape mismatch");
  Tensor g(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t c_in, std::size_t c_out, std::size_t k_t, std::size_t k_f,
               std::mt19937_64& rng)
    : c_in_(c_in),
      c_out_(c_out),
      k_t_(k_t),
      k_f_(k_f),
      weight_(make_param("weight", {c_out, c_in, k_t, k_f})),
      bias_(make_param("bias", {c_out})) {
  if (c_in == 0 || c_out == 0) throw std::invalid_argument("conv2d: zero channels");
  if (k_t % 2 == 0 || k_f % 2 == 0) throw std::invalid_argument("conv2d: kernel dims must be odd");
  init_uniform(weight_.value, c_in * k_t * k_f, rng);
  init_uniform(bias_.value, c_in * k_t * k_f, rng);
}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != c_in_) {
    throw std::invalid_argument("conv2d: expected [N," + std::to_string(c_in_) + ",T,F], got " +
                                shape_string(input));
  }
  return {input[0], c_out_, input[2], input[3]};
}

Tensor Conv2d::forward(const Tensor& input, Mode, std::any* cache) const {
  const Shape out_shape = output_shape(input.shape());
  const detail::ConvGeometry g{c_in_, c_out_, input.dim(2), input.dim(3), k_t_, k_f_};
  const std::size_t n = input.dim(0);
  Tensor out(out_shape);
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> acc(g.c_out * g.out_plane());
  for (std::size_t s = 0; s < n; ++s) {
    detail::pad_input(input.data() + s * c_in_ * g.t * g.f, g, padded.data());
    std::fill(acc.begin(), acc.end(), 0.0);
    detail::conv_accumulate(padded.data(), weight_.value.data(), g, acc.data());
    detail::crop_output(acc.data(), bias_.value.data(), g, out.data() + s * c_out_ * g.t * g.f);
  }
  if (cache) *cache = input;
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  const auto& input = std::any_cast<const Tensor&>(cache);
  const detail::ConvGeometry g{c_in_, c_out_, input.dim(2), input.dim(3), k_t_, k_f_};
  const std::size_t n = input.dim(0);
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> widened(g.c_out * g.out_plane());
  std::vector<double> dpadded;
  Tensor dinput;
  if (need_input_grad) {
    dinput = Tensor(input.shape());
    dpadded.resize(g.c_in * g.in_plane());
  }
  for (std::size_t s = 0; s < n; ++s) {
    const double* gs = grad_output.data() + s * c_out_ * g.t * g.f;
    detail::pad_input(input.data() + s * c_in_ * g.t * g.f, g, padded.data());
    detail::widen_grad(gs, g, widened.data());
    detail::conv_weight_grad(widened.data(), padded.data(), g, weight_.grad.data());
    for (std::size_t co = 0; co < c_out_; ++co) {
      double acc = 0.0;
      for (std::size_t k = 0; k < g.t * g.f; ++k) acc += gs[co * g.t * g.f + k];
      bias_.grad[co] += acc;
    }
    if (need_input_grad) {
      detail::conv_input_grad(widened.data(), weight_.value.data(), g, dpadded.data());
      detail::crop_input_grad(dpadded.data(), g, dinput.data() + s * c_in_ * g.t * g.f);
    }
  }
  return dinput;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

namespace {

struct BatchNormCache {
  Tensor normalized;          // x_hat
  std::vector<double> mean;   // batch statistics (train) or running (eval)
  std::vector<double> inv_std;
  std::vector<double> var;
  std::size_t count = 0;
  Mode mode = Mode::train;
};

}  // namespace

BatchNorm2d::BatchNorm2d(std::size_t channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(make_param("gamma", {channels})),
      beta_(make_param("beta", {channels})),
      running_mean_(make_param("running_mean", {channels}, false)),
      running_var_(make_param("running_var", {channels}, false)) {
  gamma_.value.fill(1.0);
  running_var_.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& input, Mode mode, std::any* cache) const {
  require_rank(input, 4, "batchnorm");
  if (input.dim(1) != channels_) throw std::invalid_argument("batchnorm: channel mismatch");
  const std::size_t n = input.dim(0), plane = input.dim(2) * input.dim(3);
  const std::size_t count = n * plane;
  BatchNormCache c;
  c.mode = mode;
  c.count = count;
  c.mean.resize(channels_);
  c.var.resize(channels_);
  c.inv_std.resize(channels_);
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    if (mode == Mode::train) {
      double mean = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* x = input.data() + (s * channels_ + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) mean += x[k];
      }
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* x = input.data() + (s * channels_ + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) var += (x[k] - mean) * (x[k] - mean);
      }
      var /= static_cast<double>(count);
      c.mean[ch] = mean;
      c.var[ch] = var;
    } else {
      c.mean[ch] = running_mean_.value[ch];
      c.var[ch] = running_var_.value[ch];
    }
    c.inv_std[ch] = 1.0 / std::sqrt(c.var[ch] + eps_);
  }
  Tensor out(input.shape());
  c.normalized = Tensor(input.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < channels_; ++ch) {
      const std::size_t off = (s * channels_ + ch) * plane;
      const double m = c.mean[ch], is = c.inv_std[ch];
      const double gm = gamma_.value[ch], bt = beta_.value[ch];
      for (std::size_t k = 0; k < plane; ++k) {
        const double xh = (input[off + k] - m) * is;
        c.normalized[off + k] = xh;
        out[off + k] = gm * xh + bt;
      }
    }
  }
  if (cache) *cache = std::move(c);
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  const auto& c = std::any_cast<const BatchNormCache&>(cache);
  const std::size_t n = grad_output.dim(0), plane = grad_output.dim(2) * grad_output.dim(3);
  Tensor dinput;
  if (need_input_grad) dinput = Tensor(grad_output.shape());
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * channels_ + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum_g += grad_output[off + k];
        sum_gx += grad_output[off + k] * c.normalized[off + k];
      }
    }
    gamma_.grad[ch] += sum_gx;
    beta_.grad[ch] += sum_g;
    if (!need_input_grad) continue;
    const double scale = gamma_.value[ch] * c.inv_std[ch];
    const double m = static_cast<double>(c.count);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * channels_ + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        if (c.mode == Mode::train) {
          dinput[off + k] =
              scale * (grad_output[off + k] - sum_g / m - c.normalized[off + k] * sum_gx / m);
        } else {
          dinput[off + k] = scale * grad_output[off + k];
        }
      }
    }
  }
  return dinput;
}

void BatchNorm2d::commit(const std::any& cache) {
  const auto& c = std::any_cast<const BatchNormCache&>(cache);
  if (c.mode != Mode::train) return;
  const double m = static_cast<double>(c.count);
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    const double unbiased = c.count > 1 ? c.var[ch] * m / (m - 1.0) : c.var[ch];
    running_mean_.value[ch] = (1.0 - momentum_) * running_mean_.value[ch] + momentum_ * c.mean[ch];
    running_var_.value[ch] = (1.0 - momentum_) * running_var_.value[ch] + momentum_ * unbiased;
  }
  round_to_float(running_mean_.value);
  round_to_float(running_var_.value);
}

// ---------------------------------------------------------------------------
// elementwise

Tensor ReLU::forward(const Tensor& input, Mode, std::any* cache) const {
  Tensor out = ops::relu(input);
  if (cache) *cache = out;
  return out;
}

Tensor ReLU::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  if (!need_input_grad) return {};
  const auto& out = std::any_cast<const Tensor&>(cache);
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(out[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor Sigmoid::forward(const Tensor& input, Mode, std::any* cache) const {
  Tensor out = ops::sigmoid(input);
  if (cache) *cache = out;
  return out;
}

Tensor Sigmoid::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  if (!need_input_grad) return {};
  const auto& out = std::any_cast<const Tensor&>(cache);
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (1.0 - out[i]);
  return g;
}

// ---------------------------------------------------------------------------
// MaxPool2d

namespace {

struct PoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output cell
};

}  // namespace

MaxPool2d::MaxPool2d(std::size_t pool_t, std::size_t pool_f) : pool_t_(pool_t), pool_f_(pool_f) {
  if (pool_t == 0 || pool_f == 0) throw std::invalid_argument("maxpool2d: pool dims must be >= 1");
}

Shape MaxPool2d::output_shape(const Shape& input) const {
  if (input.size() != 4) throw std::invalid_argument("maxpool2d: expected rank-4 input");
  if (pool_t_ > input[2] || pool_f_ > input[3]) {
    throw std::invalid_argument("maxpool2d: pool (" + std::to_string(pool_t_) + "," +
                                std::to_string(pool_f_) + ") larger than input " +
                                shape_string(input));
  }
  return {input[0], input[1], input[2] / pool_t_, input[3] / pool_f_};
}

Tensor MaxPool2d::forward(const Tensor& input, Mode, std::any* cache) const {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t t = input.dim(2), f = input.dim(3);
  const std::size_t to = out_shape[2], fo = out_shape[3];
  Tensor out(out_shape);
  PoolCache c{input.shape(), std::vector<std::size_t>(out.size())};
  for (std::size_t p = 0; p < planes; ++p) {
    const double* x = input.data() + p * t * f;
    for (std::size_t i = 0; i < to; ++i) {
      for (std::size_t j = 0; j < fo; ++j) {
        std::size_t best = (i * pool_t_) * f + j * pool_f_;
        for (std::size_t a = 0; a < pool_t_; ++a) {
          for (std::size_t b = 0; b < pool_f_; ++b) {
            const std::size_t idx = (i * pool_t_ + a) * f + j * pool_f_ + b;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * to + i) * fo + j;
        out[o] = x[best];
        c.argmax[o] = p * t * f + best;
      }
    }
  }
  if (cache) *cache = std::move(c);
  return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  if (!need_input_grad) return {};
  const auto& c = std::any_cast<const PoolCache&>(cache);
  Tensor g(c.input_shape);
  for (std::size_t o = 0; o < grad_output.size(); ++o) g[c.argmax[o]] += grad_output[o];
  return g;
}

// ---------------------------------------------------------------------------
// ToSequence

Shape ToSequence::output_shape(const Shape& input) const {
  if (input.size() != 4) throw std::invalid_argument("to_sequence: expected rank-4 input");
  return {input[0], input[2], input[1] * input[3]};
}

Tensor ToSequence::forward(const Tensor& input, Mode, std::any* cache) const {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t n = input.dim(0), c = input.dim(1), t = input.dim(2), f = input.dim(3);
  Tensor out(out_shape);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < f; ++j) out.at(s, i, ch * f + j) = input.at(s, ch, i, j);
      }
    }
  }
  if (cache) *cache = input.shape();
  return out;
}

Tensor ToSequence::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  if (!need_input_grad) return {};
  const auto& shape = std::any_cast<const Shape&>(cache);
  const std::size_t n = shape[0], c = shape[1], t = shape[2], f = shape[3];
  Tensor g(shape);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < f; ++j) g.at(s, ch, i, j) = grad_output.at(s, i, ch * f + j);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t d_in, std::size_t d_out, std::mt19937_64& rng)
    : d_in_(d_in),
      d_out_(d_out),
      weight_(make_param("weight", {d_out, d_in})),
      bias_(make_param("bias", {d_out})) {
  if (d_in == 0 || d_out == 0) throw std::invalid_argument("dense: zero width");
  init_uniform(weight_.value, d_in, rng);
  init_uniform(bias_.value, d_in, rng);
}

Shape Dense::output_shape(const Shape& input) const {
  if (input.empty() || input.back() != d_in_) {
    throw std::invalid_argument("dense: expected trailing dim " + std::to_string(d_in_) + ", got " +
                                shape_string(input));
  }
  Shape out = input;
  out.back() = d_out_;
  return out;
}

Tensor Dense::forward(const Tensor& input, Mode, std::any* cache) const {
  output_shape(input.shape());
  Tensor out = ops::dense(input, weight_.value, bias_.value);
  if (cache) *cache = input;
  return out;
}

Tensor Dense::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  const auto& input = std::any_cast<const Tensor&>(cache);
  const std::size_t rows = input.size() / d_in_;
  Tensor dinput;
  if (need_input_grad) dinput = Tensor(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * d_in_;
    const double* g = grad_output.data() + r * d_out_;
    for (std::size_t o = 0; o < d_out_; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      double* dw = weight_.grad.data() + o * d_in_;
      for (std::size_t i = 0; i < d_in_; ++i) dw[i] += go * x[i];
      bias_.grad[o] += go;
      if (need_input_grad) {
        const double* w = weight_.value.data() + o * d_in_;
        double* dx = dinput.data() + r * d_in_;
        for (std::size_t i = 0; i < d_in_; ++i) dx[i] += go * w[i];
      }
    }
  }
  return dinput;
}

}  // namespace strfsed::nn
