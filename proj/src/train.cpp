#include <cmath>
#include <random>

#include "strfsed/model.hpp"
#include "strfsed/nn/ops.hpp"

namespace strfsed {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"seed", seed},
          {"shuffle", shuffle}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.adam.lr = j.value("lr", cfg.adam.lr);
  cfg.adam.beta1 = j.value("beta1", cfg.adam.beta1);
  cfg.adam.beta2 = j.value("beta2", cfg.adam.beta2);
  cfg.adam.eps = j.value("eps", cfg.adam.eps);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.shuffle = j.value("shuffle", cfg.shuffle);
  cfg.validate();
  return cfg;
}

double train_step(ModelGraph& model, const Tensor& batch, const Tensor& targets, nn::Adam& opt) {
  ForwardTrace trace;
  const Tensor pred = model.forward(batch, nn::Mode::train, &trace);
  if (pred.shape() != targets.shape()) {
    throw std::invalid_argument("train: target shape " + shape_string(targets.shape()) +
                                " does not match model output " + shape_string(pred.shape()));
  }
  const double loss = nn::ops::mse_loss(pred, targets);
  if (!std::isfinite(loss)) {
    throw NonFiniteLoss("non-finite training loss (" + std::to_string(loss) + ") in " +
                        to_string(model.architecture()));
  }
  model.backward(nn::ops::mse_grad(pred, targets), trace);
  model.commit(trace);
  opt.step();
  return loss;
}

TrainResult train(ModelGraph& model, std::span<const Example> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const Example& ex : data) {
    if (ex.features.shape() != data[0].features.shape() ||
        ex.targets.shape() != data[0].targets.shape()) {
      throw std::invalid_argument("train: all clips must share feature and target shapes");
    }
  }
  model.zero_grad();
  nn::Adam opt(model.trainable_parameters(), cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng() % (i + 1)]);
    }
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Tensor> xs, ys;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(data[order[i]].features);
        ys.push_back(data[order[i]].targets);
      }
      total += train_step(model, stack(xs), stack(ys), opt);
      ++steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(steps));
    result.steps += steps;
    if (on_epoch) on_epoch({epoch, result.epoch_loss.back(), steps});
  }
  return result;
}

}  // namespace strfsed
