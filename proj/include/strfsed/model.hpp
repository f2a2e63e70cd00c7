#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "strfsed/fdy_conv.hpp"
#include "strfsed/nn/layer.hpp"
#include "strfsed/nn/optim.hpp"
#include "strfsed/strf.hpp"

namespace strfsed {

enum class Architecture {
  baseline,
  strfnet,
  tb_baseline,
  tb_strfnet,
  fdy_crnn,
  strf_fdynet,
  tb_strf_fdynet1,  // dynamic convs in the plain branch
  tb_strf_fdynet2,  // dynamic convs in the STRF branch
  tb_strf_fdynet3,  // both branches
};

const std::vector<Architecture>& all_architectures();
std::string to_string(Architecture a);  // snake_case tag, used in checkpoints
std::string cli_name(Architecture a);   // kebab-case
std::string architecture_names();       // comma-separated kebab names

class UnknownArchitecture : public std::invalid_argument {
 public:
  explicit UnknownArchitecture(const std::string& name);
};
// Accepts either the snake_case tag or the kebab-case CLI name.
Architecture architecture_from_string(const std::string& name);

bool is_two_branch(Architecture a);
bool uses_strf(Architecture a);

enum class ScalePreset { paper, toy };
std::string to_string(ScalePreset p);
ScalePreset preset_from_string(const std::string& s);

struct PoolSize {
  std::size_t t = 1;
  std::size_t f = 1;
  bool operator==(const PoolSize&) const = default;
};

struct ModelConfig {
  Architecture architecture = Architecture::baseline;
  ScalePreset preset = ScalePreset::toy;
  std::array<std::size_t, 6> conv_widths{8, 16, 32, 32, 32, 32};
  std::array<PoolSize, 6> pool_plan{{{1, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 2}, {1, 1}}};
  std::size_t gru_hidden = 32;
  std::size_t n_classes = 3;
  std::size_t n_mels = 64;
  std::size_t lift_channels = 64;  // output channels of the plain branch's first conv
  KernelAxes strf_axes{};
  std::vector<ScaleRateParam> strf_init = default_init_params();
  nn::FdyConfig fdy{};
  std::uint64_t seed = 42;

  static ModelConfig make(Architecture a, ScalePreset preset = ScalePreset::toy,
                          std::size_t n_classes = 3, std::size_t n_mels = 64);
  void validate() const;
  std::size_t time_reduction() const;
  std::size_t freq_reduction() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Per-layer caches from one training forward, consumed by backward.
struct ForwardTrace {
  std::vector<std::any> branch_caches[2];
  std::vector<std::any> head_caches;
  std::size_t split_channels = 0;  // channels of branch 0 at the concat point
};

class ModelGraph {
 public:
  explicit ModelGraph(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  Architecture architecture() const { return cfg_.architecture; }
  bool two_branch() const { return !branches_[1].empty(); }

  // batch [N, T, F] -> frame probabilities [N, T / time_reduction, C].
  Tensor forward(const Tensor& batch, nn::Mode mode, ForwardTrace* trace = nullptr) const;
  // Accumulates parameter gradients from dL/d(probabilities).
  void backward(const Tensor& grad_output, const ForwardTrace& trace);
  // Folds batch-norm statistics of a training forward into running buffers.
  void commit(const ForwardTrace& trace);

  // One clip [T x F] -> [T' x C], evaluation mode.
  Tensor predict(const Tensor& features) const;
  // Output of branch `index` (after its last ConvBlock) for batch [N, T, F].
  Tensor branch_features(const Tensor& batch, std::size_t index) const;

  // Every parameter and buffer with a stable, unique name.
  std::vector<std::pair<std::string, nn::Parameter*>> named_parameters();
  std::vector<nn::Parameter*> trainable_parameters();
  void zero_grad();
  std::size_t param_count() const;

  // All layers in execution order; a two-branch graph lists branch 0, branch
  // 1, then concat and the head.
  std::vector<nn::LayerKind> layer_kinds() const;
  // Same, restricted to layers that carry weights, plus concat.
  std::vector<nn::LayerKind> weight_layer_kinds() const;
  // Weighted layer kinds of one branch.
  std::vector<nn::LayerKind> branch_weight_kinds(std::size_t index) const;

  std::vector<nn::LayerPtr>& branch(std::size_t index) { return branches_[index]; }
  std::vector<nn::LayerPtr>& head() { return head_; }

 private:
  Tensor run_branch(std::size_t index, const Tensor& input, nn::Mode mode,
                    std::vector<std::any>* caches) const;

  ModelConfig cfg_;
  std::vector<nn::LayerPtr> branches_[2];
  std::vector<nn::LayerPtr> head_;
};

ModelGraph build_model(const ModelConfig& cfg);
std::size_t param_count(const ModelGraph& model);

// Checkpoint = <stem>.json manifest + <stem>.bin little-endian float32 blob.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// `labels`, when given, names the output classes and is stored in the manifest.
void save_checkpoint(ModelGraph& model, const std::filesystem::path& stem,
                     const std::vector<std::string>& labels = {});
ModelGraph load_checkpoint(const std::filesystem::path& stem);
// Class labels stored at save time; empty when none were given.
std::vector<std::string> checkpoint_labels(const std::filesystem::path& stem);
// Accepts "<stem>", "<stem>.json" or "<stem>.bin".
std::filesystem::path checkpoint_stem(const std::filesystem::path& path);

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  nn::AdamConfig adam{};
  std::uint64_t seed = 42;
  bool shuffle = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Example {
  Tensor features;  // [T x F]
  Tensor targets;   // [T' x C] in [0, 1]
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean of minibatch losses
  std::size_t steps = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

// One Adam step on a stacked batch; returns the minibatch loss.
double train_step(ModelGraph& model, const Tensor& batch, const Tensor& targets, nn::Adam& opt);

using EpochCallback = std::function<void(const EpochStats&)>;
TrainResult train(ModelGraph& model, std::span<const Example> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace strfsed
