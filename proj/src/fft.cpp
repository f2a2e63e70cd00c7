#include "strfsed/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace strfsed {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct RealFft::Impl {
  double* real = nullptr;
  fftw_complex* spectrum = nullptr;
  fftw_plan forward_plan = nullptr;
  fftw_plan inverse_plan = nullptr;

  ~Impl() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (forward_plan) fftw_destroy_plan(forward_plan);
    if (inverse_plan) fftw_destroy_plan(inverse_plan);
    fftw_free(real);
    fftw_free(spectrum);
  }
};

RealFft::RealFft(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), impl_(std::make_unique<Impl>()) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("fft: empty transform");
  impl_->real = fftw_alloc_real(real_size());
  impl_->spectrum = fftw_alloc_complex(complex_size());
  if (!impl_->real || !impl_->spectrum) throw std::bad_alloc();
  std::lock_guard<std::mutex> lock(planner_mutex());
  const int r = static_cast<int>(rows);
  const int c = static_cast<int>(cols);
  if (rows == 1) {
    impl_->forward_plan = fftw_plan_dft_r2c_1d(c, impl_->real, impl_->spectrum, FFTW_ESTIMATE);
    impl_->inverse_plan = fftw_plan_dft_c2r_1d(c, impl_->spectrum, impl_->real, FFTW_ESTIMATE);
  } else {
    impl_->forward_plan =
        fftw_plan_dft_r2c_2d(r, c, impl_->real, impl_->spectrum, FFTW_ESTIMATE);
    impl_->inverse_plan =
        fftw_plan_dft_c2r_2d(r, c, impl_->spectrum, impl_->real, FFTW_ESTIMATE);
  }
  if (!impl_->forward_plan || !impl_->inverse_plan) {
    throw std::runtime_error("fft: planner failed");
  }
}

RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != real_size() || out.size() != complex_size()) {
    throw std::invalid_argument("fft: forward buffer size mismatch");
  }
  std::copy(in.begin(), in.end(), impl_->real);
  fftw_execute(impl_->forward_plan);
  const auto* src = reinterpret_cast<const std::complex<double>*>(impl_->spectrum);
  std::copy(src, src + complex_size(), out.begin());
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != complex_size() || out.size() != real_size()) {
    throw std::invalid_argument("fft: inverse buffer size mismatch");
  }
  // c2r overwrites its input, so it always runs on the internal copy.
  std::copy(in.begin(), in.end(), reinterpret_cast<std::complex<double>*>(impl_->spectrum));
  fftw_execute(impl_->inverse_plan);
  std::copy(impl_->real, impl_->real + real_size(), out.begin());
}

std::size_t fft_friendly_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5, 7}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

}  // namespace strfsed
