#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "strfsed/tensor.hpp"

namespace testing {

inline strfsed::Tensor random_tensor(strfsed::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  strfsed::Tensor t(std::move(shape));
  for (double& v : t.values()) v = d(rng);
  return t;
}

// Relative error with the denominator floored at 1e-8.
inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Central difference of `loss()` with respect to the scalar `x`.
template <class F>
double central_diff(double& x, F&& loss, double h = 1e-4) {
  const double keep = x;
  x = keep + h;
  const double up = loss();
  x = keep - h;
  const double down = loss();
  x = keep;
  return (up - down) / (2.0 * h);
}

// Weighted sum used to turn a tensor output into a scalar loss.
inline double weighted_sum(const strfsed::Tensor& out, const strfsed::Tensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * w[i];
  return acc;
}

}  // namespace testing
