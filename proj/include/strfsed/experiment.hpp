#pragma once

#include <string>
#include <vector>

#include "strfsed/metrics.hpp"
#include "strfsed/model.hpp"
#include "strfsed/synth.hpp"

namespace strfsed {

// Features plus frame targets at the model's output rate.
std::vector<Example> make_examples(const Corpus& corpus, const std::vector<std::string>& ids,
                                   const ModelConfig& cfg);

// Frame probabilities of one clip pooled into segments of `segment_length_s`
// covering the clip's duration.
SegmentScores segment_scores(const ModelGraph& model, const Tensor& features, double frame_period_s,
                             double segment_length_s = 1.0);

// Segment-based F1 with per-class optimal thresholds over the given clips.
// Throws std::invalid_argument when the model's class count differs from the
// corpus vocabulary.
F1Report evaluate(const ModelGraph& model, const Corpus& corpus, const std::vector<std::string>& ids,
                  double segment_length_s = 1.0);

}  // namespace strfsed
