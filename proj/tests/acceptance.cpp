// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments
// select criteria by number, e.g. `acceptance 1 2 8`.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "strfsed/data.hpp"
#include "strfsed/experiment.hpp"
#include "strfsed/model.hpp"
#include "strfsed/nn/ops.hpp"
#include "strfsed/synth.hpp"
#include "strfsed/verify.hpp"

using namespace strfsed;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome kernel_peaks() {
  const auto k = verify::check_kernels(default_init_params());
  return {k.peak_hits == 64 && k.kernels == 64 && k.seconds < 10.0,
          fmt("%zu/%zu kernels within one bin, correct direction; %.2f s", k.peak_hits, k.kernels, k.seconds)};
}

Outcome direction_mirror() {
  const auto k = verify::check_kernels(default_init_params());
  return {k.worst_mirror_error < 1e-9, fmt("max |up(t,x) - down(t,-x)| = %.3g over 32 pairs", k.worst_mirror_error)};
}

Outcome ripple_selectivity() {
  const auto s = verify::check_selectivity(default_init_params());
  return {s.hits >= 58, fmt("%zu/%zu ripples select their generating channel", s.hits, s.stimuli)};
}

Outcome strf_gradient() {
  const double e = verify::strf_gradient_error(10, 2024, 1e-4);
  return {e < 1e-3, fmt("max relative error %.3g over 10 configurations (step 1e-4)", e)};
}

Outcome neural_core() {
  const auto n = verify::check_nn(5);
  return {n.oracle_error < 1e-6 && n.gradient_error < 1e-3 && n.adam_error < 1e-10,
          fmt("naive-loop error %.3g, backward FD error %.3g, Adam trace error %.3g", n.oracle_error,
              n.gradient_error, n.adam_error)};
}

Outcome fdy() {
  const auto f = verify::check_fdy(6);
  return {f.simplex_error < 1e-6 && f.uniform_error < 1e-6 && f.oracle_error < 1e-6 && f.shift_witness(),
          fmt("row sums %.3g, uniform vs mean kernel %.3g, vs per-bin oracle %.3g, shift gap %.3g (static %.3g)",
              f.simplex_error, f.uniform_error, f.oracle_error, f.variant_gap, f.static_gap)};
}

Outcome metric_oracle() {
  const auto m = verify::check_metrics(1000, 7);
  return {m.agree == m.instances && m.instances == 1000,
          fmt("%zu/%zu random instances match exhaustive enumeration", m.agree, m.instances)};
}

// A fixed batch of four short synthetic clips with 32 mel bins.
struct Batch {
  Tensor features;  // [4, 32, 32]
  std::vector<Example> examples;
  Corpus corpus;
};

Batch overfit_batch() {
  SynthSpec spec;
  spec.n_clips = 4;
  spec.clip_frames = 32;
  spec.n_mels = 32;
  spec.events_min = 1;
  spec.events_max = 1;
  spec.event_min_s = 2.0;
  spec.event_max_s = 3.0;
  spec.seed = 42;
  Batch b;
  b.corpus = synth_corpus(spec);
  std::vector<Tensor> xs;
  for (const auto& c : b.corpus.clips) xs.push_back(c.features);
  b.features = stack(xs);
  return b;
}

Outcome single_batch_overfit() {
  const Batch b = overfit_batch();
  std::string detail;
  bool all = true;
  for (Architecture a : all_architectures()) {
    const auto start = Clock::now();
    ModelConfig cfg = ModelConfig::make(a, ScalePreset::toy, b.corpus.classes.size(), 32);
    ModelGraph model = build_model(cfg);
    const auto ex = make_examples(b.corpus, b.corpus.clip_ids(), cfg);
    std::vector<Tensor> ys;
    for (const auto& e : ex) ys.push_back(e.targets);
    const Tensor targets = stack(ys);
    nn::AdamConfig adam;
    adam.lr = 3e-3;
    nn::Adam opt(model.trainable_parameters(), adam);
    std::size_t steps = 0;
    double loss = 1.0;
    while (steps < 500 && loss >= 1e-3) {
      loss = train_step(model, b.features, targets, opt);
      ++steps;
    }
    const bool ok = loss < 1e-3;
    all = all && ok;
    detail += fmt("%s%s %zu steps%s (%.0f s)", detail.empty() ? "" : "; ", cli_name(a).c_str(), steps,
                  ok ? "" : fmt(" loss %.2g", loss).c_str(),
                  std::chrono::duration<double>(Clock::now() - start).count());
    std::fflush(stdout);
  }
  return {all, detail};
}

Outcome toy_end_to_end() {
  const auto start = Clock::now();
  const SynthSpec spec;  // 60 clips, 3 classes, seed 42
  const Corpus corpus = synth_corpus(spec);
  const FoldPlan plan = make_folds(corpus.clip_ids(), 5, 42);
  ModelConfig cfg = ModelConfig::make(Architecture::tb_strfnet, ScalePreset::toy, corpus.classes.size(), spec.n_mels);
  ModelGraph model = build_model(cfg);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 8;
  tc.adam.lr = 1e-3;
  const auto examples = make_examples(corpus, plan.files_not_in(0), cfg);
  const TrainResult r = train(model, examples, tc);
  const F1Report report = evaluate(model, corpus, plan.files_in(0));
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return {report.macro_f1 >= 0.85 && seconds < 1800.0,
          fmt("held-out macro F1 %.4f on fold 0 (%zu clips), final loss %.4g, %zu steps, %.0f s",
              report.macro_f1, plan.files_in(0).size(), r.epoch_loss.back(), r.steps, seconds)};
}

Outcome structural_fidelity() {
  std::string detail;
  bool ok = true;
  for (ScalePreset preset : {ScalePreset::toy, ScalePreset::paper}) {
    auto count = [&](Architecture a) { return param_count(build_model(ModelConfig::make(a, preset))); };
    const std::size_t base = count(Architecture::baseline), strf = count(Architecture::strfnet);
    const std::size_t tbb = count(Architecture::tb_baseline), tbs = count(Architecture::tb_strfnet);
    const std::size_t f1 = count(Architecture::tb_strf_fdynet1), f2 = count(Architecture::tb_strf_fdynet2);
    const std::size_t f3 = count(Architecture::tb_strf_fdynet3);
    ok = ok && f3 > f1 && f3 > f2 && f1 > tbs && f2 > tbs && tbs > tbb && tbb >= strf && strf > base;
    detail += fmt("%s%s: baseline %zu < strfnet %zu <= tb-baseline %zu < tb-strfnet %zu < fdynet1 %zu / fdynet2 %zu < "
                  "fdynet3 %zu",
                  detail.empty() ? "" : "; ", to_string(preset).c_str(), base, strf, tbb, tbs, f1, f2, f3);
  }
  std::size_t fdy_models = 0;
  for (Architecture a : all_architectures()) {
    const ModelGraph m(ModelConfig::make(a));
    std::size_t fdy = 0;
    for (auto k : m.weight_layer_kinds()) fdy += k == nn::LayerKind::fdyconv;
    if (fdy == 0) continue;
    ++fdy_models;
    for (std::size_t b = 0; b < (m.two_branch() ? 2u : 1u); ++b) {
      const auto kinds = m.branch_weight_kinds(b);
      ok = ok && !kinds.empty() && kinds.front() != nn::LayerKind::fdyconv;
    }
  }
  ok = ok && fdy_models == 5;
  detail += fmt("; first convolution static in all %zu FDY variants", fdy_models);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"kernel peak contract", kernel_peaks},
      {"direction mirror", direction_mirror},
      {"ripple selectivity", ripple_selectivity},
      {"STRFConv gradient", strf_gradient},
      {"neural-core oracles", neural_core},
      {"FDYConv", fdy},
      {"F1 oracle", metric_oracle},
      {"single-batch overfit", single_batch_overfit},
      {"toy end-to-end", toy_end_to_end},
      {"structural fidelity", structural_fidelity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  if (only.empty() || only.count(11)) {
    std::printf(
        "criterion 11 NOT REPRODUCED  absolute benchmark F1 values, the reported improvements over the challenge "
        "baseline and 10-session averages need the real annotated recordings and 150-epoch x 5-fold x 10-session "
        "training; criteria 1-10 stand in for them, and the label loader accepts that dataset's format for a full "
        "run elsewhere.\n");
  }
  return failures == 0 ? 0 : 1;
}
