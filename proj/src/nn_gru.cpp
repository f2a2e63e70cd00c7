#include <cmath>
#include <stdexcept>

#include "strfsed/nn/layers.hpp"
#include "strfsed/nn/ops.hpp"

namespace strfsed::nn {

namespace {

// Per-direction activations for one batch, laid out [N][T][H].
struct GruTrace {
  std::vector<double> h;      // state after step t
  std::vector<double> r, z, n;
  std::vector<double> gh_n;   // recurrent pre-activation of the new gate
};

struct GruCache {
  Tensor input;
  GruTrace dirs[2];
};

void matvec(const double* w, const double* x, std::size_t rows, std::size_t cols, double* y) {
  for (std::size_t o = 0; o < rows; ++o) {
    const double* wr = w + o * cols;
    double acc = 0.0;
    for (std::size_t i = 0; i < cols; ++i) acc += wr[i] * x[i];
    y[o] += acc;
  }
}

}  // namespace

BiGru::BiGru(std::size_t input_size, std::size_t hidden_size, std::mt19937_64& rng)
    : d_(input_size), h_(hidden_size) {
  if (input_size == 0 || hidden_size == 0) throw std::invalid_argument("bigru: zero width");
  const char* prefixes[2] = {"fwd.", "bwd."};
  for (int k = 0; k < 2; ++k) {
    const std::string p = prefixes[k];
    auto make = [&](const char* name, Shape shape) {
      Parameter param{p + name, Tensor(shape), Tensor(shape), true};
      init_uniform(param.value, h_, rng);
      return param;
    };
    dirs_[k].w_ih = make("w_ih", {3 * h_, d_});
    dirs_[k].w_hh = make("w_hh", {3 * h_, h_});
    dirs_[k].b_ih = make("b_ih", {3 * h_});
    dirs_[k].b_hh = make("b_hh", {3 * h_});
  }
}

std::vector<Parameter*> BiGru::parameters() {
  std::vector<Parameter*> out;
  for (auto& d : dirs_) {
    out.push_back(&d.w_ih);
    out.push_back(&d.w_hh);
    out.push_back(&d.b_ih);
    out.push_back(&d.b_hh);
  }
  return out;
}

Shape BiGru::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != d_) {
    throw std::invalid_argument("bigru: expected [N,T," + std::to_string(d_) + "], got " +
                                shape_string(input));
  }
  return {input[0], input[1], 2 * h_};
}

Tensor BiGru::forward(const Tensor& input, Mode, std::any* cache) const {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t n = input.dim(0), t_len = input.dim(1), h = h_;
  Tensor out(out_shape);
  GruCache c;
  if (cache) c.input = input;

  std::vector<double> gi(3 * h), gh(3 * h), hprev(h);
  for (int k = 0; k < 2; ++k) {
    const Direction& dir = dirs_[k];
    GruTrace& tr = c.dirs[k];
    if (cache) {
      const std::size_t cells = n * t_len * h;
      tr.h.resize(cells);
      tr.r.resize(cells);
      tr.z.resize(cells);
      tr.n.resize(cells);
      tr.gh_n.resize(cells);
    }
    for (std::size_t s = 0; s < n; ++s) {
      std::fill(hprev.begin(), hprev.end(), 0.0);
      for (std::size_t step = 0; step < t_len; ++step) {
        const std::size_t t = k == 0 ? step : t_len - 1 - step;
        const double* x = input.data() + (s * t_len + t) * d_;
        std::copy_n(dir.b_ih.value.data(), 3 * h, gi.begin());
        std::copy_n(dir.b_hh.value.data(), 3 * h, gh.begin());
        matvec(dir.w_ih.value.data(), x, 3 * h, d_, gi.data());
        matvec(dir.w_hh.value.data(), hprev.data(), 3 * h, h, gh.data());
        const std::size_t base = (s * t_len + t) * h;
        double* y = out.data() + (s * t_len + t) * 2 * h + k * h;
        for (std::size_t j = 0; j < h; ++j) {
          const double r = ops::sigmoid(gi[j] + gh[j]);
          const double z = ops::sigmoid(gi[h + j] + gh[h + j]);
          const double nn = std::tanh(gi[2 * h + j] + r * gh[2 * h + j]);
          const double hn = (1.0 - z) * nn + z * hprev[j];
          if (cache) {
            tr.r[base + j] = r;
            tr.z[base + j] = z;
            tr.n[base + j] = nn;
            tr.gh_n[base + j] = gh[2 * h + j];
            tr.h[base + j] = hn;
          }
          y[j] = hn;
        }
        std::copy_n(y, h, hprev.begin());
      }
    }
  }
  if (cache) *cache = std::move(c);
  return out;
}

Tensor BiGru::backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad) {
  const auto& c = std::any_cast<const GruCache&>(cache);
  const Tensor& input = c.input;
  const std::size_t n = input.dim(0), t_len = input.dim(1), h = h_;
  Tensor dinput;
  if (need_input_grad) dinput = Tensor(input.shape());

  std::vector<double> dh(h), dgi(3 * h), dgh(3 * h), zeros(h, 0.0);
  for (int k = 0; k < 2; ++k) {
    Direction& dir = dirs_[k];
    const GruTrace& tr = c.dirs[k];
    for (std::size_t s = 0; s < n; ++s) {
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t rstep = 0; rstep < t_len; ++rstep) {
        const std::size_t step = t_len - 1 - rstep;
        const std::size_t t = k == 0 ? step : t_len - 1 - step;
        const std::size_t base = (s * t_len + t) * h;
        const double* hprev = zeros.data();
        if (step > 0) {
          const std::size_t tp = k == 0 ? t - 1 : t + 1;
          hprev = tr.h.data() + (s * t_len + tp) * h;
        }
        const double* go = grad_output.data() + (s * t_len + t) * 2 * h + k * h;
        for (std::size_t j = 0; j < h; ++j) {
          const double g = dh[j] + go[j];
          const double r = tr.r[base + j], z = tr.z[base + j], nn = tr.n[base + j];
          const double dn = g * (1.0 - z) * (1.0 - nn * nn);
          const double dz = g * (hprev[j] - nn) * z * (1.0 - z);
          const double dr = dn * tr.gh_n[base + j] * r * (1.0 - r);
          dgi[j] = dr;
          dgi[h + j] = dz;
          dgi[2 * h + j] = dn;
          dgh[j] = dr;
          dgh[h + j] = dz;
          dgh[2 * h + j] = dn * r;
          dh[j] = g * z;
        }
        const double* x = input.data() + (s * t_len + t) * d_;
        for (std::size_t o = 0; o < 3 * h; ++o) {
          dir.b_ih.grad[o] += dgi[o];
          dir.b_hh.grad[o] += dgh[o];
          double* dwi = dir.w_ih.grad.data() + o * d_;
          for (std::size_t i = 0; i < d_; ++i) dwi[i] += dgi[o] * x[i];
          double* dwh = dir.w_hh.grad.data() + o * h;
          for (std::size_t i = 0; i < h; ++i) dwh[i] += dgh[o] * hprev[i];
          const double* wh = dir.w_hh.value.data() + o * h;
          for (std::size_t i = 0; i < h; ++i) dh[i] += dgh[o] * wh[i];
          if (need_input_grad) {
            const double* wi = dir.w_ih.value.data() + o * d_;
            double* dx = dinput.data() + (s * t_len + t) * d_;
            for (std::size_t i = 0; i < d_; ++i) dx[i] += dgi[o] * wi[i];
          }
        }
      }
    }
  }
  return dinput;
}

}  // namespace strfsed::nn
