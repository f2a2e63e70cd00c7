#include "strfsed/model.hpp"

#include <algorithm>
#include <random>

#include "strfsed/nn/layers.hpp"
#include "strfsed/nn/ops.hpp"
#include "strfsed/strf_conv.hpp"

namespace strfsed {

using nn::LayerKind;
using nn::LayerPtr;
using nn::Mode;

// ---------------------------------------------------------------------------
// names

const std::vector<Architecture>& all_architectures() {
  static const std::vector<Architecture> all{
      Architecture::baseline,        Architecture::strfnet,         Architecture::tb_baseline,
      Architecture::tb_strfnet,      Architecture::fdy_crnn,        Architecture::strf_fdynet,
      Architecture::tb_strf_fdynet1, Architecture::tb_strf_fdynet2, Architecture::tb_strf_fdynet3,
  };
  return all;
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::baseline: return "baseline";
    case Architecture::strfnet: return "strfnet";
    case Architecture::tb_baseline: return "tb_baseline";
    case Architecture::tb_strfnet: return "tb_strfnet";
    case Architecture::fdy_crnn: return "fdy_crnn";
    case Architecture::strf_fdynet: return "strf_fdynet";
    case Architecture::tb_strf_fdynet1: return "tb_strf_fdynet1";
    case Architecture::tb_strf_fdynet2: return "tb_strf_fdynet2";
    case Architecture::tb_strf_fdynet3: return "tb_strf_fdynet3";
  }
  return "unknown";
}

std::string cli_name(Architecture a) {
  std::string s = to_string(a);
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

std::string architecture_names() {
  std::string out;
  for (Architecture a : all_architectures()) {
    if (!out.empty()) out += ", ";
    out += cli_name(a);
  }
  return out;
}

UnknownArchitecture::UnknownArchitecture(const std::string& name)
    : std::invalid_argument("unknown model '" + name + "'; valid names: " + architecture_names()) {}

Architecture architecture_from_string(const std::string& name) {
  for (Architecture a : all_architectures()) {
    if (name == to_string(a) || name == cli_name(a)) return a;
  }
  throw UnknownArchitecture(name);
}

bool is_two_branch(Architecture a) {
  switch (a) {
    case Architecture::tb_baseline:
    case Architecture::tb_strfnet:
    case Architecture::tb_strf_fdynet1:
    case Architecture::tb_strf_fdynet2:
    case Architecture::tb_strf_fdynet3:
      return true;
    default:
      return false;
  }
}

bool uses_strf(Architecture a) {
  return a != Architecture::baseline && a != Architecture::tb_baseline &&
         a != Architecture::fdy_crnn;
}

std::string to_string(ScalePreset p) { return p == ScalePreset::paper ? "paper" : "toy"; }

ScalePreset preset_from_string(const std::string& s) {
  if (s == "paper") return ScalePreset::paper;
  if (s == "toy") return ScalePreset::toy;
  throw std::invalid_argument("unknown scale preset '" + s + "' (expected paper or toy)");
}

// ---------------------------------------------------------------------------
// config

ModelConfig ModelConfig::make(Architecture a, ScalePreset preset, std::size_t n_classes,
                              std::size_t n_mels) {
  ModelConfig cfg;
  cfg.architecture = a;
  cfg.preset = preset;
  cfg.n_classes = n_classes;
  cfg.n_mels = n_mels;
  if (preset == ScalePreset::paper) {
    cfg.conv_widths = {16, 32, 64, 128, 128, 128};
    cfg.gru_hidden = 128;
  }
  return cfg;
}

std::size_t ModelConfig::time_reduction() const {
  std::size_t r = 1;
  for (const auto& p : pool_plan) r *= p.t;
  return r;
}

std::size_t ModelConfig::freq_reduction() const {
  std::size_t r = 1;
  for (const auto& p : pool_plan) r *= p.f;
  return r;
}

void ModelConfig::validate() const {
  if (n_classes == 0) throw std::invalid_argument("model config: zero classes");
  if (gru_hidden == 0) throw std::invalid_argument("model config: zero GRU width");
  for (std::size_t w : conv_widths) {
    if (w == 0) throw std::invalid_argument("model config: zero conv width");
  }
  std::size_t f = n_mels;
  for (std::size_t i = 0; i < pool_plan.size(); ++i) {
    const auto& p = pool_plan[i];
    if (p.t == 0 || p.f == 0) throw std::invalid_argument("model config: pool dims must be >= 1");
    if (p.f > f) {
      throw std::invalid_argument("invalid pool plan: block " + std::to_string(i + 1) +
                                  " pools frequency below 1 bin for " + std::to_string(n_mels) +
                                  " mels");
    }
    f /= p.f;
  }
  if (uses_strf(architecture)) {
    if (strf_init.empty()) throw std::invalid_argument("model config: empty STRF init");
    strf_axes.validate();
  }
  if (lift_channels == 0) throw std::invalid_argument("model config: zero lift channels");
  if (fdy.n_basis == 0 || !(fdy.temperature > 0.0)) {
    throw std::invalid_argument("model config: invalid FDY settings");
  }
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["architecture"] = to_string(architecture);
  j["preset"] = to_string(preset);
  j["conv_widths"] = conv_widths;
  nlohmann::json pools = nlohmann::json::array();
  for (const auto& p : pool_plan) pools.push_back({p.t, p.f});
  j["pool_plan"] = pools;
  j["gru_hidden"] = gru_hidden;
  j["n_classes"] = n_classes;
  j["n_mels"] = n_mels;
  j["lift_channels"] = lift_channels;
  j["strf_axes"] = {{"n_t", strf_axes.n_t},
                    {"n_f", strf_axes.n_f},
                    {"time_step_s", strf_axes.time_step_s},
                    {"freq_step_oct", strf_axes.freq_step_oct}};
  nlohmann::json init = nlohmann::json::array();
  for (const auto& p : strf_init) init.push_back({p.scale(), p.rate()});
  j["strf_init"] = init;
  j["fdy"] = {{"n_basis", fdy.n_basis}, {"temperature", fdy.temperature}, {"hidden", fdy.hidden}};
  j["seed"] = seed;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  const Architecture a = architecture_from_string(j.at("architecture").get<std::string>());
  const ScalePreset preset = preset_from_string(j.value("preset", std::string("toy")));
  ModelConfig cfg = make(a, preset, j.value("n_classes", std::size_t{3}),
                         j.value("n_mels", std::size_t{64}));
  if (j.contains("conv_widths")) {
    const auto w = j.at("conv_widths").get<std::vector<std::size_t>>();
    if (w.size() != 6) throw std::invalid_argument("model config: conv_widths needs 6 entries");
    std::copy(w.begin(), w.end(), cfg.conv_widths.begin());
  }
  if (j.contains("pool_plan")) {
    const auto& pools = j.at("pool_plan");
    if (!pools.is_array() || pools.size() != 6) {
      throw std::invalid_argument("model config: pool_plan needs 6 [p_t, p_f] pairs");
    }
    for (std::size_t i = 0; i < 6; ++i) {
      cfg.pool_plan[i] = {pools[i].at(0).get<std::size_t>(), pools[i].at(1).get<std::size_t>()};
    }
  }
  cfg.gru_hidden = j.value("gru_hidden", cfg.gru_hidden);
  cfg.lift_channels = j.value("lift_channels", cfg.lift_channels);
  if (j.contains("strf_axes")) {
    const auto& ax = j.at("strf_axes");
    cfg.strf_axes.n_t = ax.value("n_t", cfg.strf_axes.n_t);
    cfg.strf_axes.n_f = ax.value("n_f", cfg.strf_axes.n_f);
    cfg.strf_axes.time_step_s = ax.value("time_step_s", cfg.strf_axes.time_step_s);
    cfg.strf_axes.freq_step_oct = ax.value("freq_step_oct", cfg.strf_axes.freq_step_oct);
  }
  if (j.contains("strf_init")) {
    cfg.strf_init.clear();
    for (const auto& p : j.at("strf_init")) {
      cfg.strf_init.push_back(ScaleRateParam::from_physical(p.at(0).get<double>(), p.at(1).get<double>()));
    }
  }
  if (j.contains("fdy")) {
    const auto& f = j.at("fdy");
    cfg.fdy.n_basis = f.value("n_basis", cfg.fdy.n_basis);
    cfg.fdy.temperature = f.value("temperature", cfg.fdy.temperature);
    cfg.fdy.hidden = f.value("hidden", cfg.fdy.hidden);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// graph

namespace {

enum class Front { none, strf, lift };

struct BranchPlan {
  Front front = Front::none;
  bool dynamic = false;
};

std::pair<BranchPlan, BranchPlan> plan_for(Architecture a) {
  switch (a) {
    case Architecture::baseline: return {{Front::none, false}, {}};
    case Architecture::strfnet: return {{Front::strf, false}, {}};
    case Architecture::fdy_crnn: return {{Front::none, true}, {}};
    case Architecture::strf_fdynet: return {{Front::strf, true}, {}};
    case Architecture::tb_baseline: return {{Front::none, false}, {Front::none, false}};
    case Architecture::tb_strfnet: return {{Front::strf, false}, {Front::lift, false}};
    case Architecture::tb_strf_fdynet1: return {{Front::strf, false}, {Front::lift, true}};
    case Architecture::tb_strf_fdynet2: return {{Front::strf, true}, {Front::lift, false}};
    case Architecture::tb_strf_fdynet3: return {{Front::strf, true}, {Front::lift, true}};
  }
  throw std::logic_error("unhandled architecture");
}

bool has_weights(LayerKind k) {
  return k == LayerKind::conv2d || k == LayerKind::strfconv || k == LayerKind::fdyconv ||
         k == LayerKind::bigru || k == LayerKind::dense || k == LayerKind::concat;
}

// Splits [N, Ca + Cb, T, F] into its two channel groups.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t ca) {
  const std::size_t n = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
  const std::size_t cb = c - ca;
  Tensor a({n, ca, t.dim(2), t.dim(3)}), b({n, cb, t.dim(2), t.dim(3)});
  for (std::size_t s = 0; s < n; ++s) {
    const double* src = t.data() + s * c * plane;
    std::copy_n(src, ca * plane, a.data() + s * ca * plane);
    std::copy_n(src + ca * plane, cb * plane, b.data() + s * cb * plane);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

ModelGraph::ModelGraph(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const auto [plan0, plan1] = plan_for(cfg_.architecture);
  const bool two = is_two_branch(cfg_.architecture);

  auto build_branch = [&](const BranchPlan& plan, std::vector<LayerPtr>& layers) {
    std::size_t channels = 1;
    if (plan.front == Front::strf) {
      auto strf = std::make_unique<nn::StrfConvLayer>(cfg_.strf_init, cfg_.strf_axes);
      channels = strf->out_channels();
      layers.push_back(std::move(strf));
    } else if (plan.front == Front::lift) {
      layers.push_back(std::make_unique<nn::Conv2d>(1, cfg_.lift_channels, 3, 3, rng));
      channels = cfg_.lift_channels;
    }
    for (std::size_t b = 0; b < 6; ++b) {
      const std::size_t width = cfg_.conv_widths[b];
      if (plan.dynamic && b > 0) {
        layers.push_back(std::make_unique<nn::FdyConv>(channels, width, 3, 3, cfg_.fdy, rng));
      } else {
        layers.push_back(std::make_unique<nn::Conv2d>(channels, width, 3, 3, rng));
      }
      layers.push_back(std::make_unique<nn::BatchNorm2d>(width));
      layers.push_back(std::make_unique<nn::ReLU>());
      layers.push_back(std::make_unique<nn::MaxPool2d>(cfg_.pool_plan[b].t, cfg_.pool_plan[b].f));
      channels = width;
    }
  };
  build_branch(plan0, branches_[0]);
  if (two) build_branch(plan1, branches_[1]);

  const std::size_t f_out = cfg_.n_mels / cfg_.freq_reduction();
  const std::size_t d = cfg_.conv_widths[5] * (two ? 2 : 1) * f_out;
  const std::size_t h = cfg_.gru_hidden;
  head_.push_back(std::make_unique<nn::ToSequence>());
  head_.push_back(std::make_unique<nn::BiGru>(d, h, rng));
  head_.push_back(std::make_unique<nn::BiGru>(2 * h, h, rng));
  head_.push_back(std::make_unique<nn::Dense>(2 * h, h, rng));
  head_.push_back(std::make_unique<nn::ReLU>());
  head_.push_back(std::make_unique<nn::Dense>(h, cfg_.n_classes, rng));
  head_.push_back(std::make_unique<nn::Sigmoid>());
}

Tensor ModelGraph::run_branch(std::size_t index, const Tensor& input, Mode mode,
                              std::vector<std::any>* caches) const {
  Tensor x = input;
  const auto& layers = branches_[index];
  if (caches) caches->assign(layers.size(), {});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i]->forward(x, mode, caches ? &(*caches)[i] : nullptr);
  }
  return x;
}

Tensor ModelGraph::forward(const Tensor& batch, Mode mode, ForwardTrace* trace) const {
  if (batch.rank() != 3 || batch.empty()) {
    throw std::invalid_argument("model: expected [N,T,F] batch, got " + shape_string(batch.shape()));
  }
  if (batch.dim(2) != cfg_.n_mels) {
    throw std::invalid_argument("feature shape mismatch: model expects " +
                                std::to_string(cfg_.n_mels) + " mel bins, got " +
                                std::to_string(batch.dim(2)));
  }
  if (batch.dim(1) < cfg_.time_reduction()) {
    throw std::invalid_argument("clip of " + std::to_string(batch.dim(1)) +
                                " frames is shorter than the pool plan's time reduction " +
                                std::to_string(cfg_.time_reduction()));
  }
  if (!batch.all_finite()) throw std::invalid_argument("model: non-finite input features");
  const Tensor input = batch.reshaped({batch.dim(0), 1, batch.dim(1), batch.dim(2)});
  Tensor x = run_branch(0, input, mode, trace ? &trace->branch_caches[0] : nullptr);
  if (two_branch()) {
    Tensor y = run_branch(1, input, mode, trace ? &trace->branch_caches[1] : nullptr);
    if (trace) trace->split_channels = x.dim(1);
    x = nn::ops::concat(x, y, 1);
  }
  if (trace) trace->head_caches.assign(head_.size(), {});
  for (std::size_t i = 0; i < head_.size(); ++i) {
    x = head_[i]->forward(x, mode, trace ? &trace->head_caches[i] : nullptr);
  }
  return x;
}

void ModelGraph::backward(const Tensor& grad_output, const ForwardTrace& trace) {
  Tensor g = grad_output;
  for (std::size_t i = head_.size(); i-- > 0;) g = head_[i]->backward(g, trace.head_caches[i], true);
  auto run_back = [&](std::size_t index, Tensor grad) {
    auto& layers = branches_[index];
    for (std::size_t i = layers.size(); i-- > 0;) {
      grad = layers[i]->backward(grad, trace.branch_caches[index][i], i > 0);
    }
  };
  if (two_branch()) {
    auto [ga, gb] = split_channels(g, trace.split_channels);
    run_back(0, std::move(ga));
    run_back(1, std::move(gb));
  } else {
    run_back(0, std::move(g));
  }
}

void ModelGraph::commit(const ForwardTrace& trace) {
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < branches_[b].size(); ++i) {
      branches_[b][i]->commit(trace.branch_caches[b][i]);
    }
  }
  for (std::size_t i = 0; i < head_.size(); ++i) head_[i]->commit(trace.head_caches[i]);
}

Tensor ModelGraph::predict(const Tensor& features) const {
  if (features.rank() != 2) throw std::invalid_argument("predict: expected [T x F] features");
  const Tensor out =
      forward(features.reshaped({1, features.dim(0), features.dim(1)}), Mode::eval, nullptr);
  return out.reshaped({out.dim(1), out.dim(2)});
}

Tensor ModelGraph::branch_features(const Tensor& batch, std::size_t index) const {
  if (index > 1 || branches_[index].empty()) throw std::out_of_range("model: no such branch");
  const Tensor input = batch.reshaped({batch.dim(0), 1, batch.dim(1), batch.dim(2)});
  return run_branch(index, input, Mode::eval, nullptr);
}

std::vector<std::pair<std::string, nn::Parameter*>> ModelGraph::named_parameters() {
  std::vector<std::pair<std::string, nn::Parameter*>> out;
  auto collect = [&](const std::string& prefix, std::vector<LayerPtr>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (nn::Parameter* p : layers[i]->parameters()) {
        out.emplace_back(prefix + std::to_string(i) + "." + p->name, p);
      }
    }
  };
  collect("branch0.", branches_[0]);
  collect("branch1.", branches_[1]);
  collect("head.", head_);
  return out;
}

std::vector<nn::Parameter*> ModelGraph::trainable_parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& [name, p] : named_parameters()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

void ModelGraph::zero_grad() {
  for (nn::Parameter* p : trainable_parameters()) p->grad.fill(0.0);
}

std::size_t ModelGraph::param_count() const {
  std::size_t n = 0;
  for (const auto& layers : branches_) {
    for (const auto& l : layers) n += l->trainable_count();
  }
  for (const auto& l : head_) n += l->trainable_count();
  return n;
}

std::vector<LayerKind> ModelGraph::layer_kinds() const {
  std::vector<LayerKind> out;
  for (const auto& l : branches_[0]) out.push_back(l->kind());
  for (const auto& l : branches_[1]) out.push_back(l->kind());
  if (two_branch()) out.push_back(LayerKind::concat);
  for (const auto& l : head_) out.push_back(l->kind());
  return out;
}

std::vector<LayerKind> ModelGraph::weight_layer_kinds() const {
  std::vector<LayerKind> out;
  for (LayerKind k : layer_kinds()) {
    if (has_weights(k)) out.push_back(k);
  }
  return out;
}

std::vector<LayerKind> ModelGraph::branch_weight_kinds(std::size_t index) const {
  if (index > 1) throw std::out_of_range("model: no such branch");
  std::vector<LayerKind> out;
  for (const auto& l : branches_[index]) {
    if (has_weights(l->kind())) out.push_back(l->kind());
  }
  return out;
}

ModelGraph build_model(const ModelConfig& cfg) { return ModelGraph(cfg); }

std::size_t param_count(const ModelGraph& model) { return model.param_count(); }

}  // namespace strfsed
