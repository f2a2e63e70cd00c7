#include <doctest.h>

#include <complex>
#include <numbers>

#include "strfsed/dual.hpp"
#include "strfsed/fft.hpp"
#include "strfsed/tensor.hpp"
#include "support.hpp"

using namespace strfsed;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t.at(1, 2, 3) = 5.0;
  CHECK(t[23] == 5.0);
  CHECK(t.reshaped({6, 4}).at(5, 3) == 5.0);
  CHECK_THROWS_AS(t.reshaped({5, 5}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), std::invalid_argument);
  CHECK(shape_string({2, 3}) == "[2x3]");
}

TEST_CASE("stack and slice are inverse") {
  std::mt19937_64 rng(1);
  std::vector<Tensor> items{testing::random_tensor({3, 2}, rng), testing::random_tensor({3, 2}, rng)};
  const Tensor s = stack(items);
  CHECK(s.shape() == Shape{2, 3, 2});
  CHECK(max_abs_diff(slice_leading(s, 1), items[1]) == 0.0);
  std::vector<Tensor> bad{Tensor({1}), Tensor({2})};
  CHECK_THROWS(stack(bad));
}

TEST_CASE("all_finite flags NaN") {
  Tensor t({3});
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("2-D real FFT matches a naive DFT and inverts") {
  std::mt19937_64 rng(7);
  const std::size_t rows = 6, cols = 10;
  const Tensor x = testing::random_tensor({rows, cols}, rng);
  RealFft fft(rows, cols);
  std::vector<std::complex<double>> spec(fft.complex_size());
  fft.forward(x.values(), spec);
  double worst = 0.0;
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = 0; b <= cols / 2; ++b) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          const double ph = -2.0 * std::numbers::pi *
                            (double(a * i) / double(rows) + double(b * j) / double(cols));
          acc += x.at(i, j) * std::polar(1.0, ph);
        }
      }
      worst = std::max(worst, std::abs(acc - spec[a * fft.complex_cols() + b]));
    }
  }
  CHECK(worst < 1e-10);
  std::vector<double> back(rows * cols);
  fft.inverse(spec, back);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] / double(rows * cols) == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("fft_friendly_size returns 7-smooth sizes") {
  CHECK(fft_friendly_size(1) == 1);
  CHECK(fft_friendly_size(11) == 12);
  CHECK(fft_friendly_size(97) == 98);
  CHECK(fft_friendly_size(199) == 200);
  CHECK(fft_friendly_size(111) == 112);
}

TEST_CASE("dual numbers differentiate compositions") {
  using D = Dual<2>;
  const D x = D::variable(0.7, 0);
  const D y = D::variable(1.3, 1);
  const D f = exp(x * y) + sin(x) / y;
  const double fx = y.v * std::exp(x.v * y.v) + std::cos(x.v) / y.v;
  const double fy = x.v * std::exp(x.v * y.v) - std::sin(x.v) / (y.v * y.v);
  CHECK(f.d[0] == doctest::Approx(fx).epsilon(1e-14));
  CHECK(f.d[1] == doctest::Approx(fy).epsilon(1e-14));
}
