#pragma once

#include <any>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "strfsed/tensor.hpp"

namespace strfsed::nn {

enum class LayerKind {
  conv2d,
  batchnorm,
  relu,
  maxpool2d,
  bigru,
  dense,
  sigmoid,
  strfconv,
  fdyconv,
  concat,
  to_sequence,
};

std::string to_string(LayerKind kind);

enum class Mode { train, eval };

// A named tensor owned by a layer. Trainable parameters carry a gradient
// accumulator; buffers (batch-norm running statistics) do not.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

class NoBackwardRule : public std::logic_error {
 public:
  explicit NoBackwardRule(const std::string& layer)
      : std::logic_error("no backward rule for layer '" + layer + "'") {}
};

// Forward is const: inference on a shared model is thread-safe. Training
// passes a cache slot that the same layer's backward later consumes.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& input, Mode mode, std::any* cache) const = 0;

  // Accumulates parameter gradients and returns dL/dinput (empty when
  // `need_input_grad` is false).
  virtual Tensor backward(const Tensor& grad_output, const std::any& cache, bool need_input_grad);

  // Folds batch statistics from a training forward into running buffers.
  virtual void commit(const std::any& /*cache*/) {}

  virtual std::vector<Parameter*> parameters() { return {}; }
  std::vector<const Parameter*> parameters() const;
  std::size_t trainable_count() const;
  void zero_grad();
};

using LayerPtr = std::unique_ptr<Layer>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), rounded to float32 precision.
void init_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng);
// Rounds every value to the nearest float32 so parameters survive the
// float32 checkpoint format bit-exactly.
void round_to_float(Tensor& t);

}  // namespace strfsed::nn
