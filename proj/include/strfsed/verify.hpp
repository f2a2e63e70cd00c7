#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "strfsed/strf.hpp"

namespace strfsed::verify {

// Self-contained oracle checks. Each returns raw measurements; callers decide
// pass/fail against their own tolerances.

struct KernelCheck {
  std::size_t kernels = 0;
  std::size_t peak_hits = 0;  // rate and |scale| bin within one of nominal, direction right
  double worst_norm_error = 0.0;
  double worst_mirror_error = 0.0;  // max |up(t, x) - down(t, -x)|
  double seconds = 0.0;
};
KernelCheck check_kernels(const std::vector<ScaleRateParam>& params, const KernelAxes& axes = {},
                          double normalization_fault = 1.0);

// Matched-ripple channel identification over the bank built from `params`.
struct SelectivityCheck {
  std::size_t stimuli = 0;
  std::size_t hits = 0;
};
SelectivityCheck check_selectivity(const std::vector<ScaleRateParam>& params);

// Worst relative error of analytic (log scale, log rate) gradients against
// central differences over random configurations.
double strf_gradient_error(std::size_t configs, std::uint64_t seed, double step = 1e-4);

struct NnCheck {
  double oracle_error = 0.0;    // conv2d, dense, maxpool vs naive loops
  double gradient_error = 0.0;  // worst relative FD error over all layers
  double adam_error = 0.0;      // 3-step trace vs hand recurrence
};
NnCheck check_nn(std::uint64_t seed);

struct FdyCheck {
  double simplex_error = 0.0;       // max |sum_k a[f][k] - 1|
  double uniform_error = 0.0;       // uniform attention vs mean-kernel static conv
  double oracle_error = 0.0;        // optimized forward vs per-bin loop
  double variant_gap = 0.0;         // attention-conditioned operator under a bin shift
  double static_gap = 0.0;          // static conv under the same shift
  double gradient_error = 0.0;
  bool shift_witness() const { return variant_gap > 1e-4 && static_gap < 1e-9; }
};
FdyCheck check_fdy(std::uint64_t seed);

struct MetricCheck {
  std::size_t instances = 0;
  std::size_t agree = 0;
};
MetricCheck check_metrics(std::size_t instances, std::uint64_t seed);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  double kernel_normalization_fault = 1.0;
  std::uint64_t seed = 42;
};

// Fast suites behind the `verify` subcommand.
std::vector<SuiteResult> run_suites(const VerifyOptions& options = {});

}  // namespace strfsed::verify
