#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "strfsed/tensor.hpp"

namespace strfsed {

struct Event {
  std::string file;
  double onset_s = 0.0;
  double offset_s = 0.0;
  std::string label;
  double confidence = 1.0;
};
using EventList = std::vector<Event>;

// Scores per segment and class, [n_segments x n_classes] in [0, 1].
struct SegmentScores {
  Tensor grid;
  double segment_length_s = 1.0;

  std::size_t n_segments() const { return grid.dim(0); }
  std::size_t n_classes() const { return grid.dim(1); }
};

// ceil(duration / segment length), tolerant of float noise at exact multiples.
std::size_t segment_count(double duration_s, double segment_length_s);

// A segment is active for a class iff some event of that class overlaps it
// by a strictly positive length. Unknown labels throw when `strict`, and are
// ignored otherwise.
SegmentScores rasterize_reference(const EventList& events, double duration_s,
                                  const std::vector<std::string>& classes,
                                  double segment_length_s = 1.0, bool strict = true);

// Frame t is centred at t * frame_period_s. A segment scores the max over
// frames centred inside it; a segment with no frame carries the previous
// segment's score (0 for the first). `n_segments` = 0 derives the count from
// the frame span.
SegmentScores rasterize_predictions(const Tensor& frame_probs, double frame_period_s,
                                    double segment_length_s = 1.0, std::size_t n_segments = 0);

// {0.00, 0.02, ..., 1.00}
std::vector<double> default_threshold_grid();

struct ClassResult {
  std::string label;
  bool evaluated = false;  // false when the class has no reference positives
  double threshold = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct F1Report {
  std::vector<ClassResult> per_class;
  double macro_f1 = 0.0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Segment-based macro F1 with a per-class optimal threshold. A segment is
// predicted positive iff score > threshold; counts are summed over files;
// the lowest threshold reaching the class maximum wins.
F1Report f1_mo(std::span<const SegmentScores> predictions, std::span<const SegmentScores> references,
               const std::vector<std::string>& classes,
               const std::vector<double>& thresholds = default_threshold_grid());

// F1 of one class at one fixed threshold.
ClassResult f1_at(std::span<const SegmentScores> predictions,
                  std::span<const SegmentScores> references, std::size_t cls, double threshold);

struct FoldSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one report
  std::size_t count = 0;
};
FoldSummary aggregate_folds(std::span<const F1Report> reports);

}  // namespace strfsed
