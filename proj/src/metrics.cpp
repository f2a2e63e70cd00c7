#include "strfsed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace strfsed {

std::size_t segment_count(double duration_s, double segment_length_s) {
  if (!(segment_length_s > 0.0)) throw std::invalid_argument("segment length must be > 0");
  if (duration_s <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(duration_s / segment_length_s - 1e-9));
}

SegmentScores rasterize_reference(const EventList& events, double duration_s,
                                  const std::vector<std::string>& classes, double segment_length_s,
                                  bool strict) {
  const std::size_t n = segment_count(duration_s, segment_length_s);
  SegmentScores out{Tensor({n, classes.size()}), segment_length_s};
  for (const Event& e : events) {
    const auto it = std::find(classes.begin(), classes.end(), e.label);
    if (it == classes.end()) {
      if (strict) throw std::invalid_argument("unknown class label '" + e.label + "'");
      continue;
    }
    const auto c = static_cast<std::size_t>(it - classes.begin());
    for (std::size_t s = 0; s < n; ++s) {
      const double lo = static_cast<double>(s) * segment_length_s;
      const double hi = lo + segment_length_s;
      if (std::min(hi, e.offset_s) - std::max(lo, e.onset_s) > 0.0) out.grid.at(s, c) = 1.0;
    }
  }
  return out;
}

SegmentScores rasterize_predictions(const Tensor& frame_probs, double frame_period_s,
                                    double segment_length_s, std::size_t n_segments) {
  if (frame_probs.rank() != 2) throw std::invalid_argument("rasterize_predictions: expected [T x C]");
  if (!(frame_period_s > 0.0)) throw std::invalid_argument("frame period must be > 0");
  const std::size_t t = frame_probs.dim(0), c = frame_probs.dim(1);
  if (n_segments == 0) {
    n_segments = segment_count(static_cast<double>(t) * frame_period_s, segment_length_s);
  }
  SegmentScores out{Tensor({n_segments, c}), segment_length_s};
  std::vector<bool> seen(n_segments, false);
  for (std::size_t i = 0; i < t; ++i) {
    const double center = static_cast<double>(i) * frame_period_s;
    const auto s = static_cast<std::size_t>(std::floor(center / segment_length_s + 1e-9));
    if (s >= n_segments) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double p = frame_probs.at(i, k);
      if (!seen[s] || p > out.grid.at(s, k)) out.grid.at(s, k) = p;
    }
    seen[s] = true;
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    if (seen[s]) continue;
    for (std::size_t k = 0; k < c; ++k) out.grid.at(s, k) = s > 0 ? out.grid.at(s - 1, k) : 0.0;
  }
  return out;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid(51);
  for (std::size_t i = 0; i <= 50; ++i) grid[i] = static_cast<double>(i) / 50.0;
  return grid;
}

namespace {

void check_pairs(std::span<const SegmentScores> pred, std::span<const SegmentScores> ref) {
  if (pred.size() != ref.size()) throw std::invalid_argument("f1: file count mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].grid.shape() != ref[i].grid.shape()) {
      throw std::invalid_argument("f1: file " + std::to_string(i) + " prediction shape " +
                                  shape_string(pred[i].grid.shape()) + " vs reference " +
                                  shape_string(ref[i].grid.shape()));
    }
  }
}

double f1_value(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

ClassResult f1_at(std::span<const SegmentScores> predictions,
                  std::span<const SegmentScores> references, std::size_t cls, double threshold) {
  check_pairs(predictions, references);
  ClassResult r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Tensor& p = predictions[i].grid;
    const Tensor& g = references[i].grid;
    for (std::size_t s = 0; s < p.dim(0); ++s) {
      const bool pos = p.at(s, cls) > threshold;
      const bool act = g.at(s, cls) > 0.5;
      if (pos && act) ++r.tp;
      else if (pos) ++r.fp;
      else if (act) ++r.fn;
    }
  }
  r.evaluated = r.tp + r.fn > 0;
  r.f1 = f1_value(r.tp, r.fp, r.fn);
  return r;
}

F1Report f1_mo(std::span<const SegmentScores> predictions, std::span<const SegmentScores> references,
               const std::vector<std::string>& classes, const std::vector<double>& thresholds) {
  check_pairs(predictions, references);
  if (thresholds.empty()) throw std::invalid_argument("f1: empty threshold grid");
  for (const auto& p : predictions) {
    if (p.grid.dim(1) != classes.size()) {
      throw std::invalid_argument("f1: class count mismatch, scores have " +
                                  std::to_string(p.grid.dim(1)) + " classes, expected " +
                                  std::to_string(classes.size()));
    }
  }
  F1Report report;
  double total = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    ClassResult best;
    bool first = true;
    for (double th : thresholds) {
      ClassResult r = f1_at(predictions, references, c, th);
      if (first || r.f1 > best.f1) best = r;
      first = false;
    }
    best.label = classes[c];
    if (best.evaluated) {
      total += best.f1;
      ++evaluated;
    }
    report.per_class.push_back(best);
  }
  if (evaluated == 0) throw std::invalid_argument("f1: no class has a reference-positive segment");
  report.macro_f1 = total / static_cast<double>(evaluated);
  return report;
}

nlohmann::json F1Report::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : per_class) {
    per.push_back({{"label", r.label},
                   {"evaluated", r.evaluated},
                   {"threshold", r.threshold},
                   {"f1", r.f1},
                   {"tp", r.tp},
                   {"fp", r.fp},
                   {"fn", r.fn}});
  }
  return {{"per_class", per}, {"macro_f1", macro_f1}};
}

std::string F1Report::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %9s %7s %6s %6s %6s\n", "class", "threshold", "f1", "tp",
                "fp", "fn");
  os << line;
  for (const auto& r : per_class) {
    std::snprintf(line, sizeof line, "%-16s %9.2f %7.4f %6zu %6zu %6zu%s\n", r.label.c_str(),
                  r.threshold, r.f1, r.tp, r.fp, r.fn, r.evaluated ? "" : "  (no positives)");
    os << line;
  }
  std::snprintf(line, sizeof line, "macro F1_MO: %.4f\n", macro_f1);
  os << line;
  return os.str();
}

FoldSummary aggregate_folds(std::span<const F1Report> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_folds: no reports");
  FoldSummary s;
  s.count = reports.size();
  for (const auto& r : reports) s.mean += r.macro_f1;
  s.mean /= static_cast<double>(s.count);
  if (s.count > 1) {
    double acc = 0.0;
    for (const auto& r : reports) acc += (r.macro_f1 - s.mean) * (r.macro_f1 - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(s.count - 1));
  }
  return s;
}

}  // namespace strfsed
