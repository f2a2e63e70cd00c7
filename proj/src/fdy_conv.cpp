#include "strfsed/fdy_conv.hpp"

#include <cmath>
#include <stdexcept>

#include "strfsed/nn/ops.hpp"

namespace strfsed::nn {

namespace {

Parameter make_param(std::string name, Shape shape) {
  return Parameter{std::move(name), Tensor(shape), Tensor(shape), true};
}

struct FdyCache {
  Tensor input;
  std::vector<Tensor> pooled, hidden, weights;  // per sample
  Tensor basis_out;                             // [N, K * C_out, T, F], bias excluded
};

}  // namespace

FdyConv::FdyConv(std::size_t c_in, std::size_t c_out, std::size_t k_t, std::size_t k_f,
                 const FdyConfig& cfg, std::mt19937_64& rng)
    : c_in_(c_in), c_out_(c_out), k_t_(k_t), k_f_(k_f), cfg_(cfg) {
  if (c_in == 0 || c_out == 0) throw std::invalid_argument("fdyconv: zero channels");
  if (k_t % 2 == 0 || k_f % 2 == 0) throw std::invalid_argument("fdyconv: kernel dims must be odd");
  if (cfg.n_basis == 0) throw std::invalid_argument("fdyconv: need at least one basis kernel");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("fdyconv: temperature must be > 0");
  const std::size_t kb = cfg.n_basis, h = cfg.hidden_for(c_in);
  basis_ = make_param("basis", {kb * c_out, c_in, k_t, k_f});
  basis_bias_ = make_param("basis_bias", {kb, c_out});
  att_w1_ = make_param("att_w1", {h, c_in});
  att_b1_ = make_param("att_b1", {h});
  att_w2_ = make_param("att_w2", {kb, h});
  att_b2_ = make_param("att_b2", {kb});
  init_uniform(basis_.value, c_in * k_t * k_f, rng);
  init_uniform(basis_bias_.value, c_in * k_t * k_f, rng);
  init_uniform(att_w1_.value, c_in, rng);
  init_uniform(att_b1_.value, c_in, rng);
  init_uniform(att_w2_.value, h, rng);
  init_uniform(att_b2_.value, h, rng);
}

Shape FdyConv::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != c_in_) {
    throw std::invalid_argument("fdyconv: expected [N," + std::to_string(c_in_) + ",T,F], got " +
                                shape_string(input));
  }
  return {input[0], c_out_, input[2], input[3]};
}

FdyConv::AttentionTrace FdyConv::attend(const double* sample, std::size_t t, std::size_t f) const {
  const std::size_t kb = cfg_.n_basis, h = att_b1_.value.size();
  AttentionTrace tr{Tensor({c_in_, f}), Tensor({f, h}), Tensor({f, kb})};
  for (std::size_t c = 0; c < c_in_; ++c) {
    for (std::size_t i = 0; i < t; ++i) {
      const double* row = sample + (c * t + i) * f;
      for (std::size_t j = 0; j < f; ++j) tr.pooled.at(c, j) += row[j];
    }
  }
  tr.pooled *= 1.0 / static_cast<double>(t);
  if (uniform_) {
    tr.weights.fill(1.0 / static_cast<double>(kb));
    return tr;
  }
  std::vector<double> logits(kb);
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t u = 0; u < h; ++u) {
      double acc = att_b1_.value[u];
      for (std::size_t c = 0; c < c_in_; ++c) acc += att_w1_.value.at(u, c) * tr.pooled.at(c, j);
      tr.hidden.at(j, u) = acc > 0.0 ? acc : 0.0;
    }
    double top = -INFINITY;
    for (std::size_t k = 0; k < kb; ++k) {
      double acc = att_b2_.value[k];
      for (std::size_t u = 0; u < h; ++u) acc += att_w2_.value.at(k, u) * tr.hidden.at(j, u);
      logits[k] = acc / cfg_.temperature;
      top = std::max(top, logits[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < kb; ++k) {
      logits[k] = std::exp(logits[k] - top);
      z += logits[k];
    }
    for (std::size_t k = 0; k < kb; ++k) tr.weights.at(j, k) = logits[k] / z;
  }
  return tr;
}

Tensor FdyConv::attention(const Tensor& sample) const {
  if (sample.rank() != 3 || sample.dim(0) != c_in_) {
    throw std::invalid_argument("fdyconv: expected [" + std::to_string(c_in_) + ",T,F], got " +
                                shape_string(sample.shape()));
  }
  return attend(sample.data(), sample.dim(1), sample.dim(2)).weights;
}

void FdyConv::basis_responses(const double* sample, std::vector<double>& padded,
                              std::vector<double>& acc, Tensor& basis_out) const {
  const detail::ConvGeometry g{c_in_, cfg_.n_basis * c_out_, basis_out.dim(1), basis_out.dim(2),
                               k_t_, k_f_};
  detail::pad_input(sample, g, padded.data());
  std::fill(acc.begin(), acc.end(), 0.0);
  detail::conv_accumulate(padded.data(), basis_.value.data(), g, acc.data());
  detail::crop_output(acc.data(), nullptr, g, basis_out.data());
}

void FdyConv::mix(const Tensor& basis_out, const Tensor& weights, double* y) const {
  const std::size_t t = basis_out.dim(1), f = basis_out.dim(2);
  for (std::size_t k = 0; k < cfg_.n_basis; ++k) {
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double b = basis_bias_.value.at(k, co);
      const double* src = basis_out.data() + (k * c_out_ + co) * t * f;
      double* dst = y + co * t * f;
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < f; ++j) dst[i * f + j] += weights.at(j, k) * (src[i * f + j] + b);
      }
    }
  }
}

Tensor FdyConv::apply_with_attention(const Tensor& sample, const Tensor& weights) const {
  if (sample.rank() != 3 || sample.dim(0) != c_in_) {
    throw std::invalid_argument("fdyconv: expected [" + std::to_string(c_in_) + ",T,F], got " +
                                shape_string(sample.shape()));
  }
  const std::size_t t = sample.dim(1), f = sample.dim(2);
  if (weights.shape() != Shape{f, cfg_.n_basis}) {
    throw std::invalid_argument("fdyconv: attention must be [F x K], got " + shape_string(weights.shape()));
  }
  const detail::ConvGeometry g{c_in_, cfg_.n_basis * c_out_, t, f, k_t_, k_f_};
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> acc(g.c_out * g.out_plane());
  Tensor basis_out({cfg_.n_basis * c_out_, t, f});
  basis_responses(sample.data(), padded, acc, basis_out);
  Tensor out({c_out_, t, f});
  mix(basis_out, weights, out.data());
  return out;
}

Tensor FdyConv::forward(const Tensor& input, Mode, std::any* cache) const {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t n = input.dim(0), t = input.dim(2), f = input.dim(3);
  const std::size_t kb = cfg_.n_basis;
  const detail::ConvGeometry g{c_in_, kb * c_out_, t, f, k_t_, k_f_};
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> acc(g.c_out * g.out_plane());
  Tensor out(out_shape);
  FdyCache c;
  if (cache) {
    c.input = input;
    c.basis_out = Tensor({n, kb * c_out_, t, f});
  }
  Tensor basis_out({kb * c_out_, t, f});
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = input.data() + s * c_in_ * t * f;
    AttentionTrace tr = attend(x, t, f);
    basis_responses(x, padded, acc, basis_out);
    mix(basis_out, tr.weights, out.data() + s * c_out_ * t * f);
    if (cache) {
      std::copy_n(basis_out.data(), basis_out.size(), c.basis_out.data() + s * basis_out.size());
      c.pooled.push_back(std::move(tr.pooled));
      c.hidden.push_back(std::move(tr.hidden));
      c.weights.push_back(std::move(tr.weights));
    }
  }
  if (cache) *cache = std::move(c);
  return out;
}

Tensor FdyConv::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  const auto& c = std::any_cast<const FdyCache&>(cache);
  const Tensor& input = c.input;
  const std::size_t n = input.dim(0), t = input.dim(2), f = input.dim(3);
  const std::size_t kb = cfg_.n_basis, h = att_b1_.value.size();
  const detail::ConvGeometry g{c_in_, kb * c_out_, t, f, k_t_, k_f_};
  std::vector<double> padded(g.c_in * g.in_plane());
  std::vector<double> widened(g.c_out * g.out_plane());
  std::vector<double> dpadded;
  Tensor dinput;
  if (need_input_grad) {
    dinput = Tensor(input.shape());
    dpadded.resize(g.c_in * g.in_plane());
  }
  Tensor dbasis_out({kb * c_out_, t, f});
  Tensor dweights({f, kb}), dlogits({f, kb}), dpre({f, h}), dpooled({c_in_, f});

  for (std::size_t s = 0; s < n; ++s) {
    const double* x = input.data() + s * c_in_ * t * f;
    const double* gy = grad_output.data() + s * c_out_ * t * f;
    const double* ys = c.basis_out.data() + s * kb * c_out_ * t * f;
    const Tensor& a = c.weights[s];
    dweights.fill(0.0);
    for (std::size_t k = 0; k < kb; ++k) {
      for (std::size_t co = 0; co < c_out_; ++co) {
        const double b = basis_bias_.value.at(k, co);
        const double* src = ys + (k * c_out_ + co) * t * f;
        const double* gr = gy + co * t * f;
        double* dst = dbasis_out.data() + (k * c_out_ + co) * t * f;
        double dbias = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double gv = gr[i * f + j];
            const double w = a.at(j, k);
            dst[i * f + j] = w * gv;
            dbias += w * gv;
            dweights.at(j, k) += gv * (src[i * f + j] + b);
          }
        }
        basis_bias_.grad.at(k, co) += dbias;
      }
    }

    detail::pad_input(x, g, padded.data());
    detail::widen_grad(dbasis_out.data(), g, widened.data());
    detail::conv_weight_grad(widened.data(), padded.data(), g, basis_.grad.data());
    if (need_input_grad) {
      detail::conv_input_grad(widened.data(), basis_.value.data(), g, dpadded.data());
      detail::crop_input_grad(dpadded.data(), g, dinput.data() + s * c_in_ * t * f);
    }
    if (uniform_) continue;

    // Softmax, then the two-layer map, then the time average.
    const Tensor& hid = c.hidden[s];
    const Tensor& pooled = c.pooled[s];
    dpre.fill(0.0);
    dpooled.fill(0.0);
    for (std::size_t j = 0; j < f; ++j) {
      double inner = 0.0;
      for (std::size_t k = 0; k < kb; ++k) inner += a.at(j, k) * dweights.at(j, k);
      for (std::size_t k = 0; k < kb; ++k) {
        dlogits.at(j, k) = a.at(j, k) * (dweights.at(j, k) - inner) / cfg_.temperature;
      }
      for (std::size_t k = 0; k < kb; ++k) {
        const double dl = dlogits.at(j, k);
        att_b2_.grad[k] += dl;
        for (std::size_t u = 0; u < h; ++u) {
          att_w2_.grad.at(k, u) += dl * hid.at(j, u);
          dpre.at(j, u) += dl * att_w2_.value.at(k, u);
        }
      }
      for (std::size_t u = 0; u < h; ++u) {
        if (!(hid.at(j, u) > 0.0)) {
          dpre.at(j, u) = 0.0;
          continue;
        }
        const double dp = dpre.at(j, u);
        att_b1_.grad[u] += dp;
        for (std::size_t ci = 0; ci < c_in_; ++ci) {
          att_w1_.grad.at(u, ci) += dp * pooled.at(ci, j);
          dpooled.at(ci, j) += dp * att_w1_.value.at(u, ci);
        }
      }
    }
    if (need_input_grad) {
      const double inv_t = 1.0 / static_cast<double>(t);
      double* dx = dinput.data() + s * c_in_ * t * f;
      for (std::size_t ci = 0; ci < c_in_; ++ci) {
        for (std::size_t i = 0; i < t; ++i) {
          for (std::size_t j = 0; j < f; ++j) dx[(ci * t + i) * f + j] += dpooled.at(ci, j) * inv_t;
        }
      }
    }
  }
  return dinput;
}

Tensor fdy_attention(const Tensor& input, const FdyConv& layer) { return layer.attention(input); }

Tensor fdy_forward(const Tensor& input, const FdyConv& layer) {
  if (input.rank() != 3) throw std::invalid_argument("fdy_forward: expected [C_in x T x F]");
  Tensor batched = input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)});
  return layer.forward(batched, Mode::eval, nullptr).reshaped(
      {layer.out_channels(), input.dim(1), input.dim(2)});
}

Tensor fdy_apply(const Tensor& input, const FdyConv& layer, const Tensor& attention) {
  return layer.apply_with_attention(input, attention);
}

Tensor fdy_backward(const Tensor& upstream, const Tensor& input, FdyConv& layer) {
  if (input.rank() != 3) throw std::invalid_argument("fdy_backward: expected [C_in x T x F]");
  const Shape out{layer.out_channels(), input.dim(1), input.dim(2)};
  if (upstream.shape() != out) {
    throw std::invalid_argument("fdy_backward: upstream shape " + shape_string(upstream.shape()));
  }
  std::any cache;
  layer.forward(input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)}), Mode::train, &cache);
  Tensor dx = layer.backward(upstream.reshaped({1, out[0], out[1], out[2]}), cache, true);
  return dx.reshaped(input.shape());
}

}  // namespace strfsed::nn
