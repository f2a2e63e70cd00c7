#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "strfsed/metrics.hpp"
#include "strfsed/strf.hpp"
#include "strfsed/tensor.hpp"

namespace strfsed {

struct ClassRange {
  std::string label;
  double scale_lo = 0.0, scale_hi = 0.0;  // cyc/oct
  double rate_lo = 0.0, rate_hi = 0.0;    // Hz
};

struct SynthSpec {
  std::size_t n_clips = 60;
  std::size_t clip_frames = 150;  // 30 s at 0.2 s
  double frame_period_s = 0.2;
  std::size_t n_mels = 64;
  double bins_per_octave = 24.0;
  std::vector<ClassRange> classes{
      {"low_scale", 0.3, 0.7, 0.5, 2.0},
      {"mid_scale", 1.5, 2.5, 0.5, 2.0},
      {"high_scale", 4.0, 6.0, 0.5, 2.0},
  };
  std::size_t events_min = 3, events_max = 6;
  double event_min_s = 2.0, event_max_s = 5.0;
  double snr_db = 6.0;  // patch-to-background energy ratio
  std::uint64_t seed = 42;

  void validate() const;
  double clip_seconds() const { return static_cast<double>(clip_frames) * frame_period_s; }
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct RipplePatch {
  std::size_t class_index = 0;
  double scale = 0.0;
  double rate = 0.0;
  Direction direction = Direction::down;
  std::size_t start_frame = 0;
  std::size_t n_frames = 0;
};

struct CorpusClip {
  std::string id;
  Tensor features;  // [T x n_mels]
  EventList events;
  std::vector<RipplePatch> patches;  // empty for corpora loaded without them
};

struct Corpus {
  std::vector<std::string> classes;
  double frame_period_s = 0.2;
  std::vector<CorpusClip> clips;
  nlohmann::json spec;  // generator echo, null for foreign corpora

  std::vector<std::string> clip_ids() const;
  const CorpusClip& clip(const std::string& id) const;
};

// Background: unit-variance noise, low-pass correlated along both axes, plus
// a fixed spectral tilt. Each event adds a zero-mean ripple patch spanning all
// mel bins inside its own time slot, so events never overlap. Features are
// rounded to float32 so a written corpus reloads bit-exactly.
Corpus synth_corpus(const SynthSpec& spec);

// <dir>/corpus.json, <dir>/labels.csv, <dir>/clips/<id>.{f32,json}
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

struct RecoveryStats {
  std::size_t patches = 0;
  std::size_t hits = 0;            // scale and rate inside the class range, +-1 bin
  std::size_t direction_hits = 0;
  double rate() const { return patches ? static_cast<double>(hits) / static_cast<double>(patches) : 0.0; }
};
// Runs modulation_peak over each generating patch's region of its clip.
RecoveryStats patch_recovery(const Corpus& corpus, const SynthSpec& spec);

}  // namespace strfsed
