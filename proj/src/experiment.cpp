#include "strfsed/experiment.hpp"

#include <stdexcept>

#include "strfsed/data.hpp"

namespace strfsed {
namespace {

void check_compatible(const ModelConfig& cfg, const Corpus& corpus) {
  if (cfg.n_classes != corpus.classes.size()) {
    throw std::invalid_argument("model predicts " + std::to_string(cfg.n_classes) + " classes but the corpus has " +
                                std::to_string(corpus.classes.size()));
  }
}

}  // namespace

std::vector<Example> make_examples(const Corpus& corpus, const std::vector<std::string>& ids,
                                   const ModelConfig& cfg) {
  check_compatible(cfg, corpus);
  const std::size_t reduce = cfg.time_reduction();
  std::vector<Example> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const CorpusClip& clip = corpus.clip(id);
    if (clip.features.dim(1) != cfg.n_mels) {
      throw std::invalid_argument("clip " + id + " has " + std::to_string(clip.features.dim(1)) +
                                  " mel bins, model expects " + std::to_string(cfg.n_mels));
    }
    const std::size_t frames = clip.features.dim(0) / reduce;
    out.push_back({clip.features, frame_targets(clip.events, frames, corpus.frame_period_s * double(reduce),
                                                corpus.classes, true)});
  }
  return out;
}

SegmentScores segment_scores(const ModelGraph& model, const Tensor& features, double frame_period_s,
                             double segment_length_s) {
  const Tensor probs = model.predict(features);
  const double duration = double(features.dim(0)) * frame_period_s;
  const double out_period = frame_period_s * double(model.config().time_reduction());
  return rasterize_predictions(probs, out_period, segment_length_s, segment_count(duration, segment_length_s));
}

F1Report evaluate(const ModelGraph& model, const Corpus& corpus, const std::vector<std::string>& ids,
                  double segment_length_s) {
  check_compatible(model.config(), corpus);
  std::vector<SegmentScores> pred, ref;
  for (const std::string& id : ids) {
    const CorpusClip& clip = corpus.clip(id);
    pred.push_back(segment_scores(model, clip.features, corpus.frame_period_s, segment_length_s));
    const double duration = double(clip.features.dim(0)) * corpus.frame_period_s;
    ref.push_back(rasterize_reference(clip.events, duration, corpus.classes, segment_length_s));
  }
  return f1_mo(pred, ref, corpus.classes);
}

}  // namespace strfsed
