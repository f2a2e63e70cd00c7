#include "strfsed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "strfsed/data.hpp"
#include "strfsed/frontend.hpp"
#include "strfsed/nn/layer.hpp"

namespace strfsed {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (classes.empty()) throw std::invalid_argument("synth: need at least one class");
  if (clip_frames < 4 || n_mels < 4) throw std::invalid_argument("synth: clip too small");
  if (!(frame_period_s > 0.0) || !(bins_per_octave > 0.0)) {
    throw std::invalid_argument("synth: non-positive axis step");
  }
  if (events_min > events_max) throw std::invalid_argument("synth: events_min > events_max");
  if (!(event_min_s > 0.0) || event_min_s > event_max_s) {
    throw std::invalid_argument("synth: invalid event duration range");
  }
  const double rate_nyq = 0.5 / frame_period_s, scale_nyq = 0.5 * bins_per_octave;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& c = classes[i];
    if (!(c.scale_lo > 0.0 && c.scale_lo <= c.scale_hi && c.rate_lo > 0.0 && c.rate_lo <= c.rate_hi)) {
      throw std::invalid_argument("synth: class '" + c.label + "' has an empty or non-positive range");
    }
    if (c.scale_hi >= scale_nyq || c.rate_hi >= rate_nyq) {
      throw std::invalid_argument("synth: class '" + c.label + "' range reaches a modulation Nyquist");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = classes[j];
      const bool scale_overlap = c.scale_lo <= o.scale_hi && o.scale_lo <= c.scale_hi;
      const bool rate_overlap = c.rate_lo <= o.rate_hi && o.rate_lo <= c.rate_hi;
      if (scale_overlap && rate_overlap) {
        throw std::invalid_argument("synth: overlapping class ranges '" + o.label + "' and '" +
                                    c.label + "'");
      }
      if (c.label == o.label) throw std::invalid_argument("synth: duplicate class label");
    }
  }
  if (events_max > 0) {
    const std::size_t slot = clip_frames / events_max;
    const auto min_frames = static_cast<std::size_t>(std::ceil(event_min_s / frame_period_s - 1e-9));
    if (slot < std::max<std::size_t>(min_frames, 4)) {
      throw std::invalid_argument("synth: clip too short for events_max events of event_min_s");
    }
  }
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : classes) {
    cls.push_back({{"label", c.label},
                   {"scale", {c.scale_lo, c.scale_hi}},
                   {"rate", {c.rate_lo, c.rate_hi}}});
  }
  return {{"n_clips", n_clips},
          {"clip_frames", clip_frames},
          {"frame_period_s", frame_period_s},
          {"n_mels", n_mels},
          {"bins_per_octave", bins_per_octave},
          {"classes", cls},
          {"events_min", events_min},
          {"events_max", events_max},
          {"event_min_s", event_min_s},
          {"event_max_s", event_max_s},
          {"snr_db", snr_db},
          {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.n_clips = j.value("n_clips", s.n_clips);
  s.clip_frames = j.value("clip_frames", s.clip_frames);
  s.frame_period_s = j.value("frame_period_s", s.frame_period_s);
  s.n_mels = j.value("n_mels", s.n_mels);
  s.bins_per_octave = j.value("bins_per_octave", s.bins_per_octave);
  if (j.contains("classes")) {
    s.classes.clear();
    for (const auto& c : j.at("classes")) {
      s.classes.push_back({c.at("label").get<std::string>(), c.at("scale").at(0).get<double>(),
                           c.at("scale").at(1).get<double>(), c.at("rate").at(0).get<double>(),
                           c.at("rate").at(1).get<double>()});
    }
  }
  s.events_min = j.value("events_min", s.events_min);
  s.events_max = j.value("events_max", s.events_max);
  s.event_min_s = j.value("event_min_s", s.event_min_s);
  s.event_max_s = j.value("event_max_s", s.event_max_s);
  s.snr_db = j.value("snr_db", s.snr_db);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

std::vector<std::string> Corpus::clip_ids() const {
  std::vector<std::string> ids;
  for (const auto& c : clips) ids.push_back(c.id);
  return ids;
}

const CorpusClip& Corpus::clip(const std::string& id) const {
  for (const auto& c : clips) {
    if (c.id == id) return c;
  }
  throw std::out_of_range("corpus has no clip '" + id + "'");
}

namespace {

constexpr double kTwoPi = 6.283185307179586;

// AR(1) smoothing with unit stationary variance.
void smooth(Tensor& g, double a_time, double a_freq) {
  const std::size_t t = g.dim(0), f = g.dim(1);
  const double bt = std::sqrt(1.0 - a_time * a_time), bf = std::sqrt(1.0 - a_freq * a_freq);
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t i = 1; i < t; ++i) g.at(i, j) = a_time * g.at(i - 1, j) + bt * g.at(i, j);
  }
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 1; j < f; ++j) g.at(i, j) = a_freq * g.at(i, j - 1) + bf * g.at(i, j);
  }
}

CorpusClip make_clip(const SynthSpec& spec, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
  };

  char id[32];
  std::snprintf(id, sizeof id, "synth_%03zu", index);
  CorpusClip clip;
  clip.id = id;
  const std::size_t t = spec.clip_frames, f = spec.n_mels;
  clip.features = Tensor({t, f});
  for (double& v : clip.features.values()) v = gauss(rng);
  smooth(clip.features, 0.7, 0.5);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      clip.features.at(i, j) += -1.0 * static_cast<double>(j) / static_cast<double>(f);
    }
  }

  const double amplitude = std::sqrt(2.0 * std::pow(10.0, spec.snr_db / 10.0));
  const std::size_t n_events = spec.events_max == 0 ? 0 : uniform_int(spec.events_min, spec.events_max);
  const std::size_t min_len =
      static_cast<std::size_t>(std::ceil(spec.event_min_s / spec.frame_period_s - 1e-9));
  const std::size_t max_len =
      static_cast<std::size_t>(std::floor(spec.event_max_s / spec.frame_period_s + 1e-9));
  for (std::size_t e = 0; e < n_events; ++e) {
    const std::size_t slot = t / n_events;
    const std::size_t len = uniform_int(min_len, std::min(max_len, slot));
    const std::size_t start = e * slot + uniform_int(0, slot - len);
    RipplePatch p;
    p.class_index = uniform_int(0, spec.classes.size() - 1);
    const ClassRange& cr = spec.classes[p.class_index];
    p.scale = cr.scale_lo + (cr.scale_hi - cr.scale_lo) * unit(rng);
    p.rate = cr.rate_lo + (cr.rate_hi - cr.rate_lo) * unit(rng);
    p.direction = unit(rng) < 0.5 ? Direction::up : Direction::down;
    p.start_frame = start;
    p.n_frames = len;
    RippleSpec rs;
    rs.omega_hz = p.rate;
    rs.scale_cyc_per_oct = p.scale;
    rs.direction = p.direction;
    rs.n_frames = len;
    rs.n_bins = f;
    rs.frame_period_s = spec.frame_period_s;
    rs.bins_per_octave = spec.bins_per_octave;
    rs.amplitude = 1.0;
    rs.phase = kTwoPi * unit(rng);
    const RippleStimulus ripple = ripple_stimulus(rs);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        clip.features.at(start + i, j) += amplitude * (ripple.values.at(i, j) - 1.0);
      }
    }
    clip.patches.push_back(p);
    clip.events.push_back({clip.id, static_cast<double>(start) * spec.frame_period_s,
                           static_cast<double>(start + len) * spec.frame_period_s, cr.label, 1.0});
  }
  nn::round_to_float(clip.features);
  return clip;
}

}  // namespace

Corpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  Corpus corpus;
  for (const auto& c : spec.classes) corpus.classes.push_back(c.label);
  std::sort(corpus.classes.begin(), corpus.classes.end());
  corpus.frame_period_s = spec.frame_period_s;
  corpus.spec = spec.to_json();
  for (std::size_t i = 0; i < spec.n_clips; ++i) corpus.clips.push_back(make_clip(spec, i));
  return corpus;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "clips");
  nlohmann::json manifest;
  manifest["spec"] = corpus.spec;
  manifest["classes"] = corpus.classes;
  manifest["frame_period_s"] = corpus.frame_period_s;
  nlohmann::json files = nlohmann::json::array();
  EventList all;
  for (const auto& c : corpus.clips) {
    write_feature_blob(dir / "clips" / c.id, c.features, corpus.frame_period_s);
    nlohmann::json patches = nlohmann::json::array();
    for (const auto& p : c.patches) {
      patches.push_back({{"class_index", p.class_index},
                         {"scale", p.scale},
                         {"rate", p.rate},
                         {"direction", to_string(p.direction)},
                         {"start_frame", p.start_frame},
                         {"n_frames", p.n_frames}});
    }
    files.push_back({{"id", c.id}, {"features", "clips/" + c.id}, {"patches", patches}});
    all.insert(all.end(), c.events.begin(), c.events.end());
  }
  manifest["files"] = files;
  write_labels(dir / "labels.csv", all);
  std::ofstream out(dir / "corpus.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "corpus.json").string());
  out << manifest.dump(2) << '\n';
}

Corpus load_corpus(const fs::path& dir) {
  std::ifstream in(dir / "corpus.json");
  if (!in) throw std::runtime_error("corpus: missing " + (dir / "corpus.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corpus: malformed corpus.json: " + std::string(e.what()));
  }
  Corpus corpus;
  try {
    corpus.spec = manifest.value("spec", nlohmann::json());
    corpus.frame_period_s = manifest.at("frame_period_s").get<double>();
    const LabelSet labels = parse_labels(dir / "labels.csv", true);
    corpus.classes = manifest.contains("classes")
                         ? manifest.at("classes").get<std::vector<std::string>>()
                         : labels.classes;
    for (const auto& f : manifest.at("files")) {
      CorpusClip clip;
      clip.id = f.at("id").get<std::string>();
      const FeatureBlob blob = read_feature_blob(dir / f.at("features").get<std::string>());
      clip.features = blob.grid;
      if (std::abs(blob.frame_period_s - corpus.frame_period_s) > 1e-9) {
        throw std::runtime_error("clip " + clip.id + " has a different frame period");
      }
      if (auto it = labels.files.find(clip.id); it != labels.files.end()) clip.events = it->second;
      for (const auto& p : f.value("patches", nlohmann::json::array())) {
        clip.patches.push_back({p.at("class_index").get<std::size_t>(), p.at("scale").get<double>(),
                                p.at("rate").get<double>(),
                                direction_from_string(p.at("direction").get<std::string>()),
                                p.at("start_frame").get<std::size_t>(),
                                p.at("n_frames").get<std::size_t>()});
      }
      corpus.clips.push_back(std::move(clip));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corpus: corrupt manifest: " + std::string(e.what()));
  }
  return corpus;
}

RecoveryStats patch_recovery(const Corpus& corpus, const SynthSpec& spec) {
  RecoveryStats stats;
  const double dx = 1.0 / spec.bins_per_octave;
  for (const auto& clip : corpus.clips) {
    const std::size_t f = clip.features.dim(1);
    for (const auto& p : clip.patches) {
      Tensor region({p.n_frames, f});
      std::copy_n(clip.features.data() + p.start_frame * f, p.n_frames * f, region.data());
      const ModulationPeak peak = modulation_peak(region, spec.frame_period_s, dx);
      const ClassRange& cr = spec.classes[p.class_index];
      const double rate_bin = 1.0 / (static_cast<double>(p.n_frames) * spec.frame_period_s);
      const double scale_bin = 1.0 / (static_cast<double>(f) * dx);
      const bool scale_ok = peak.scale_cyc_per_oct >= cr.scale_lo - scale_bin &&
                            peak.scale_cyc_per_oct <= cr.scale_hi + scale_bin;
      const bool rate_ok = peak.rate_hz >= cr.rate_lo - rate_bin && peak.rate_hz <= cr.rate_hi + rate_bin;
      ++stats.patches;
      if (scale_ok && rate_ok) ++stats.hits;
      if (peak.direction == p.direction) ++stats.direction_hits;
    }
  }
  return stats;
}

}  // namespace strfsed
