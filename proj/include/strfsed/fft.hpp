#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace strfsed {

// Real-to-complex transform of a rows x cols real grid (rows = 1 for 1D),
// backed by FFTW with deterministic (estimate-mode) plans. Inverse is
// unnormalized. One instance must not be used from two threads at once;
// separate instances are independent.
class RealFft {
 public:
  RealFft(std::size_t rows, std::size_t cols);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t real_size() const { return rows_ * cols_; }
  std::size_t complex_cols() const { return cols_ / 2 + 1; }
  std::size_t complex_size() const { return rows_ * complex_cols(); }

  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  struct Impl;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::unique_ptr<Impl> impl_;
};

// Smallest n' >= n whose only prime factors are 2, 3, 5 and 7.
std::size_t fft_friendly_size(std::size_t n);

}  // namespace strfsed
