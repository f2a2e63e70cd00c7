#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "strfsed/data.hpp"
#include "strfsed/experiment.hpp"
#include "strfsed/frontend.hpp"
#include "strfsed/model.hpp"
#include "strfsed/strf.hpp"
#include "strfsed/synth.hpp"
#include "strfsed/verify.hpp"

namespace fs = std::filesystem;
using namespace strfsed;

namespace {

// Exit code 2: the invocation itself is wrong (bad name, bad value).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError(what + ": '" + item + "' is not a number");
    if (!(v > 0.0)) throw UsageError(what + " must be positive, got " + item);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + " list is empty");
  return out;
}

KernelAxes parse_axes(const std::string& text) {
  const auto x = text.find('x');
  KernelAxes axes;
  try {
    if (x == std::string::npos) throw std::invalid_argument("missing x");
    axes.n_t = std::stoul(text.substr(0, x));
    axes.n_f = std::stoul(text.substr(x + 1));
  } catch (const std::exception&) {
    throw UsageError("--axes expects TxF, e.g. 50x48; got '" + text + "'");
  }
  axes.validate();
  return axes;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  std::ofstream out(probe);
  if (!out) throw std::runtime_error("directory " + dir.string() + " is not writable");
  out.close();
  fs::remove(probe);
}

void write_kernel_csv(const fs::path& path, const Tensor& k) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(9);
  for (std::size_t t = 0; t < k.dim(0); ++t) {
    for (std::size_t f = 0; f < k.dim(1); ++f) out << (f ? "," : "") << k.at(t, f);
    out << '\n';
  }
}

// 8-bit binary PGM, rows = time taps, columns = frequency bins, min..max
// mapped to 0..255.
void write_kernel_pgm(const fs::path& path, const Tensor& k) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  double lo = k[0], hi = k[0];
  for (double v : k.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  out << "P5\n" << k.dim(1) << ' ' << k.dim(0) << "\n255\n";
  for (double v : k.values()) out.put(static_cast<char>(static_cast<unsigned char>((v - lo) / span * 255.0 + 0.5)));
}

int cmd_kernels(const fs::path& out_dir, const std::string& scales, const std::string& rates,
                const std::string& axes_text) {
  const KernelAxes axes = parse_axes(axes_text);
  std::vector<ScaleRateParam> params;
  if (scales.empty() && rates.empty()) {
    params = default_init_params();
  } else {
    const auto s = scales.empty() ? std::vector<double>{1.0} : parse_list(scales, "--scales");
    const auto r = rates.empty() ? std::vector<double>{1.0} : parse_list(rates, "--rates");
    for (double sv : s) {
      for (double rv : r) params.push_back(ScaleRateParam::from_physical(sv, rv));
    }
  }
  ensure_dir(out_dir);
  const StrfBank bank = build_bank(params, axes);

  nlohmann::json manifest;
  manifest["axes"] = {{"n_t", axes.n_t},
                      {"n_f", axes.n_f},
                      {"time_step_s", axes.time_step_s},
                      {"freq_step_oct", axes.freq_step_oct}};
  manifest["kernels"] = nlohmann::json::array();
  std::printf("%5s %5s %8s %8s %10s %10s %9s %9s %4s\n", "index", "dir", "scale", "rate", "peak_scale",
              "peak_rate", "scale_bin", "rate_bin", "ok");
  std::size_t ok_count = 0;
  for (std::size_t i = 0; i < bank.kernel_count(); ++i) {
    const StrfKernel& k = bank.kernels[i];
    char name[96];
    std::snprintf(name, sizeof name, "kernel_%02zu_%s_s%.3f_r%.3f", i, to_string(k.param.direction).c_str(),
                  k.param.scale(), k.param.rate());
    write_kernel_csv(out_dir / (std::string(name) + ".csv"), k.values);
    write_kernel_pgm(out_dir / (std::string(name) + ".pgm"), k.values);

    const ModulationPeak peak = modulation_peak(k.values, axes.time_step_s, axes.freq_step_oct);
    const double rate_nominal = k.param.rate() * double(axes.n_t) * axes.time_step_s;
    const double scale_nominal = k.param.scale() * double(axes.n_f) * axes.freq_step_oct;
    const bool ok = std::abs(double(peak.rate_bin) - rate_nominal) <= 1.0 + 1e-9 &&
                    std::abs(double(std::abs(peak.scale_bin)) - scale_nominal) <= 1.0 + 1e-9 &&
                    peak.direction == k.param.direction;
    ok_count += ok;
    std::printf("%5zu %5s %8.3f %8.3f %10.3f %10.3f %9td %9zu %4s\n", i, to_string(k.param.direction).c_str(),
                k.param.scale(), k.param.rate(), peak.scale_cyc_per_oct, peak.rate_hz, peak.scale_bin,
                peak.rate_bin, ok ? "yes" : "NO");
    manifest["kernels"].push_back({{"index", i},
                                   {"csv", std::string(name) + ".csv"},
                                   {"pgm", std::string(name) + ".pgm"},
                                   {"scale", k.param.scale()},
                                   {"rate", k.param.rate()},
                                   {"direction", to_string(k.param.direction)},
                                   {"peak_scale", peak.scale_cyc_per_oct},
                                   {"peak_rate", peak.rate_hz},
                                   {"peak_ok", ok}});
  }
  std::ofstream mf(out_dir / "bank.json", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write " + (out_dir / "bank.json").string());
  mf << manifest.dump(2) << '\n';
  std::printf("%zu/%zu kernels peak within one bin of their parameters\n", ok_count, bank.kernel_count());
  return 0;
}

int cmd_synth(const fs::path& out_dir, const SynthSpec& spec) {
  ensure_dir(out_dir);
  const Corpus corpus = synth_corpus(spec);
  write_corpus(corpus, out_dir);
  std::size_t events = 0;
  for (const auto& c : corpus.clips) events += c.events.size();
  std::printf("wrote %zu clips, %zu events, %zu classes to %s\n", corpus.clips.size(), events,
              corpus.classes.size(), out_dir.string().c_str());
  return 0;
}

int cmd_features(const fs::path& in, const fs::path& out, const MelConfig& cfg) {
  const Waveform wave = load_wav(in);
  const MelSpectrogram mel = melspectrogram(wave, cfg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_feature_blob(out, mel.values, mel.frame_period_s);
  std::printf("%zu frames x %zu mels, frame period %.4f s -> %s.f32\n", mel.n_frames(), mel.n_mels(),
              mel.frame_period_s, out.string().c_str());
  return 0;
}

struct TrainArgs {
  std::string model;
  fs::path data, config, out, log;
  std::size_t fold = 0, folds = 5;
  std::string preset = "toy";
  std::size_t epochs = 0, batch_size = 0;
  double lr = 0.0;
  std::uint64_t seed = 42;
};

Architecture parse_model(const std::string& name) {
  try {
    return architecture_from_string(name);
  } catch (const UnknownArchitecture& e) {
    throw UsageError(e.what());
  }
}

FoldPlan folds_for(const Corpus& corpus, std::size_t k, std::size_t fold, std::uint64_t seed) {
  if (fold >= k) throw UsageError("--fold must be < " + std::to_string(k));
  return make_folds(corpus.clip_ids(), k, seed);
}

int cmd_train(const TrainArgs& a) {
  const Architecture arch = parse_model(a.model);
  nlohmann::json file_cfg = nlohmann::json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw std::runtime_error("cannot open config " + a.config.string());
    try {
      in >> file_cfg;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("malformed config " + a.config.string() + ": " + e.what());
    }
  }
  const std::string preset = file_cfg.value("preset", a.preset);
  TrainConfig tc = file_cfg.contains("train") ? TrainConfig::from_json(file_cfg.at("train")) : TrainConfig{};
  if (a.epochs) tc.epochs = a.epochs;
  if (a.batch_size) tc.batch_size = a.batch_size;
  if (a.lr > 0.0) tc.adam.lr = a.lr;
  tc.seed = a.seed;
  tc.validate();

  const Corpus corpus = load_corpus(a.data);
  if (corpus.clips.empty()) throw std::runtime_error("corpus " + a.data.string() + " has no clips");
  const FoldPlan plan = folds_for(corpus, a.folds, a.fold, a.seed);
  ModelConfig mc = ModelConfig::make(arch, preset_from_string(preset), corpus.classes.size(),
                                     corpus.clips.front().features.dim(1));
  mc.seed = a.seed;
  ModelGraph model = build_model(mc);
  const auto train_ids = plan.files_not_in(a.fold);
  const auto held_ids = plan.files_in(a.fold);
  const std::vector<Example> examples = make_examples(corpus, train_ids, mc);

  const fs::path stem = checkpoint_stem(a.out);
  fs::path log_path = a.log;
  if (log_path.empty()) {
    log_path = stem;
    log_path += ".log.jsonl";
  }
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  log << nlohmann::json{{"event", "start"},
                        {"model", cli_name(arch)},
                        {"preset", preset},
                        {"fold", a.fold},
                        {"folds", a.folds},
                        {"train_clips", train_ids.size()},
                        {"held_out_clips", held_ids.size()},
                        {"param_count", model.param_count()},
                        {"train", tc.to_json()}}
             .dump()
      << std::endl;

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(model, examples, tc, [&](const EpochStats& s) {
    nlohmann::json line{{"event", "epoch"}, {"epoch", s.epoch + 1}, {"loss", s.loss}, {"steps", s.steps}};
    try {
      line["held_out_macro_f1"] = evaluate(model, corpus, held_ids).macro_f1;
    } catch (const std::invalid_argument&) {
      line["held_out_macro_f1"] = nullptr;  // no reference positives in the fold
    }
    line["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << line.dump() << std::endl;
    std::printf("epoch %zu/%zu loss %.6f held-out F1 %s\n", s.epoch + 1, tc.epochs, s.loss,
                line["held_out_macro_f1"].is_null() ? "n/a" : fmt("%.4f", line["held_out_macro_f1"].get<double>()).c_str());
    std::fflush(stdout);
  });
  save_checkpoint(model, stem, corpus.classes);
  log << nlohmann::json{{"event", "done"},
                        {"final_loss", result.epoch_loss.back()},
                        {"steps", result.steps},
                        {"checkpoint", stem.string()}}
             .dump()
      << std::endl;
  std::printf("final loss %.9g, checkpoint %s.json\n", result.epoch_loss.back(), stem.string().c_str());
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, std::size_t fold, std::size_t folds, bool all,
             std::uint64_t seed, const fs::path& out) {
  const ModelGraph model = load_checkpoint(checkpoint_stem(ckpt));
  const Corpus corpus = load_corpus(data);
  const auto labels = checkpoint_labels(checkpoint_stem(ckpt));
  if (model.config().n_classes != corpus.classes.size()) {
    throw std::runtime_error("shape mismatch: checkpoint predicts " + std::to_string(model.config().n_classes) +
                             " classes, corpus has " + std::to_string(corpus.classes.size()));
  }
  if (!labels.empty() && labels != corpus.classes) {
    throw std::runtime_error("checkpoint class labels differ from the corpus vocabulary");
  }
  std::vector<std::string> ids;
  if (all) {
    ids = corpus.clip_ids();
  } else {
    ids = folds_for(corpus, folds, fold, seed).files_in(fold);
  }
  const F1Report report = evaluate(model, corpus, ids);
  std::cout << report.to_text();
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream js(out, std::ios::trunc);
    if (!js) throw std::runtime_error("cannot write " + out.string());
    nlohmann::json j = report.to_json();
    j["model"] = cli_name(model.architecture());
    j["clips"] = ids;
    js << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_predict(const fs::path& ckpt, const fs::path& in, const fs::path& out, double segment) {
  const ModelGraph model = load_checkpoint(checkpoint_stem(ckpt));
  auto labels = checkpoint_labels(checkpoint_stem(ckpt));
  if (labels.empty()) {
    for (std::size_t c = 0; c < model.config().n_classes; ++c) labels.push_back("class_" + std::to_string(c));
  }
  fs::path stem = in;
  if (stem.extension() == ".f32" || stem.extension() == ".json") stem.replace_extension();
  const FeatureBlob blob = read_feature_blob(stem);
  if (blob.grid.dim(1) != model.config().n_mels) {
    throw std::runtime_error("shape mismatch: features have " + std::to_string(blob.grid.dim(1)) +
                             " mel bins, model expects " + std::to_string(model.config().n_mels));
  }
  const SegmentScores scores = segment_scores(model, blob.grid, blob.frame_period_s, segment);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + out.string());
  csv << "segment,onset,offset";
  for (const auto& l : labels) csv << ',' << l;
  csv << '\n';
  csv.precision(6);
  csv << std::fixed;
  for (std::size_t s = 0; s < scores.n_segments(); ++s) {
    csv << s << ',' << double(s) * segment << ',' << double(s + 1) * segment;
    for (std::size_t c = 0; c < scores.n_classes(); ++c) csv << ',' << scores.grid.at(s, c);
    csv << '\n';
  }
  std::printf("%zu segments x %zu classes -> %s\n", scores.n_segments(), scores.n_classes(), out.string().c_str());
  return 0;
}

int cmd_verify(const verify::VerifyOptions& options) {
  const auto results = verify::run_suites(options);
  bool all = true;
  for (const auto& r : results) {
    std::printf("%s %-15s %7.2f s  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectro-temporal receptive field sound event detection toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  fs::path k_out;
  std::string k_scales, k_rates, k_axes = "50x48";
  auto* kernels = app.add_subcommand("kernels", "Synthesize STRF kernels, write CSV/PGM files and check their peaks");
  kernels->add_option("--out", k_out, "Output directory")->required();
  kernels->add_option("--scales", k_scales, "Comma-separated scales in cyc/oct (default: 8 log-spaced in [0.25, 8])");
  kernels->add_option("--rates", k_rates, "Comma-separated rates in Hz (default: 4 log-spaced in [0.3, 2.4])");
  kernels->add_option("--axes", k_axes, "Kernel size as TIMExFREQ taps")->capture_default_str();
  kernels->callback([&] { action = [&] { return cmd_kernels(k_out, k_scales, k_rates, k_axes); }; });

  fs::path s_out;
  SynthSpec spec;
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic ripple-event corpus");
  synth->add_option("--out", s_out, "Output corpus directory")->required();
  synth->add_option("--clips", spec.n_clips, "Number of clips")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--frames", spec.clip_frames, "Frames per clip")->capture_default_str();
  synth->add_option("--mels", spec.n_mels, "Mel bins per frame")->capture_default_str();
  synth->add_option("--events-min", spec.events_min, "Minimum events per clip")->capture_default_str();
  synth->add_option("--events-max", spec.events_max, "Maximum events per clip")->capture_default_str();
  synth->add_option("--snr", spec.snr_db, "Event-to-background energy ratio in dB")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  synth->callback([&] { action = [&] { return cmd_synth(s_out, spec); }; });

  fs::path f_in, f_out;
  MelConfig mel;
  std::string compression = "log1p";
  auto* features = app.add_subcommand("features", "Compute a log-mel feature blob from a WAV file");
  features->add_option("--in", f_in, "Input WAV (PCM16 or float32)")->required();
  features->add_option("--out", f_out, "Output blob stem (writes <stem>.f32 and <stem>.json)")->required();
  features->add_option("--n-fft", mel.n_fft, "FFT size in samples")->capture_default_str();
  features->add_option("--hop", mel.hop, "Hop in samples")->capture_default_str();
  features->add_option("--mels", mel.n_mels, "Mel bands")->capture_default_str();
  features->add_option("--fmin", mel.fmin_hz, "Lowest filter edge in Hz")->capture_default_str();
  features->add_option("--fmax", mel.fmax_hz, "Highest filter edge in Hz")->capture_default_str();
  features->add_option("--compression", compression, "log1p or db")
      ->capture_default_str()
      ->check(CLI::IsMember({"log1p", "db"}));
  features->callback([&] {
    mel.compression = compression == "db" ? Compression::db : Compression::log1p;
    action = [&] { return cmd_features(f_in, f_out, mel); };
  });

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train one architecture on all folds except --fold");
  trn->add_option("--model", ta.model, "Architecture: " + architecture_names())->required();
  trn->add_option("--data", ta.data, "Corpus directory")->required();
  trn->add_option("--out", ta.out, "Checkpoint stem (writes <stem>.json and <stem>.bin)")->required();
  trn->add_option("--config", ta.config, "JSON file with optional \"preset\" and \"train\" sections");
  trn->add_option("--fold", ta.fold, "Held-out fold")->capture_default_str();
  trn->add_option("--folds", ta.folds, "Number of folds")->capture_default_str();
  trn->add_option("--preset", ta.preset, "Model scale preset: toy or paper")
      ->capture_default_str()
      ->check(CLI::IsMember({"toy", "paper"}));
  trn->add_option("--epochs", ta.epochs, "Override the epoch count");
  trn->add_option("--batch-size", ta.batch_size, "Override the batch size");
  trn->add_option("--lr", ta.lr, "Override the Adam learning rate");
  trn->add_option("--log", ta.log, "JSON-lines log path (default <stem>.log.jsonl)");
  trn->add_option("--seed", ta.seed, "Seed for initialization, shuffling and folds")->capture_default_str();
  trn->callback([&] { action = [&] { return cmd_train(ta); }; });

  fs::path e_ckpt, e_data, e_out;
  std::size_t e_fold = 0, e_folds = 5;
  std::uint64_t e_seed = 42;
  bool e_all = false;
  auto* ev = app.add_subcommand("eval", "Segment-based macro F1 with optimal per-class thresholds");
  ev->add_option("--ckpt", e_ckpt, "Checkpoint stem or manifest")->required();
  ev->add_option("--data", e_data, "Corpus directory")->required();
  ev->add_option("--fold", e_fold, "Fold to evaluate")->capture_default_str();
  ev->add_option("--folds", e_folds, "Number of folds")->capture_default_str();
  ev->add_flag("--all", e_all, "Evaluate every clip instead of one fold");
  ev->add_option("--seed", e_seed, "Seed of the fold split")->capture_default_str();
  ev->add_option("--out", e_out, "Write the report as JSON");
  ev->callback([&] { action = [&] { return cmd_eval(e_ckpt, e_data, e_fold, e_folds, e_all, e_seed, e_out); }; });

  fs::path p_ckpt, p_in, p_out;
  double p_segment = 1.0;
  auto* pr = app.add_subcommand("predict", "Write per-segment class scores for one feature blob");
  pr->add_option("--ckpt", p_ckpt, "Checkpoint stem or manifest")->required();
  pr->add_option("--in", p_in, "Feature blob stem")->required();
  pr->add_option("--out", p_out, "Output CSV")->required();
  pr->add_option("--segment", p_segment, "Segment length in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  pr->callback([&] { action = [&] { return cmd_predict(p_ckpt, p_in, p_out, p_segment); }; });

  verify::VerifyOptions vo;
  auto* vf = app.add_subcommand("verify", "Run the built-in oracle suites");
  vf->add_option("--seed", vo.seed, "Seed for random test instances")->capture_default_str();
  vf->add_option("--fault-kernel-norm", vo.kernel_normalization_fault,
                 "Test hook: scale every kernel by this factor after normalization")
      ->capture_default_str();
  vf->callback([&] { action = [&] { return cmd_verify(vo); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
