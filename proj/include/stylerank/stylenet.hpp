#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "stylerank/dataset.hpp"

namespace stylerank {

inline constexpr std::size_t kEmbeddingDim = 16;

// Two trainable layers on top of precomputed features:
//   hidden = relu(W1^T x + b1)        (16 units, the style embedding)
//   probs  = softmax(W2^T hidden + b2) (one entry per style)
// Matrices are row-major: w1 is input_dim x 16, w2 is 16 x style_count.
struct StyleHead {
  std::size_t input_dim = 0;
  std::size_t style_count = 0;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;

  static StyleHead zeros(std::size_t input_dim, std::size_t style_count);
  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  static StyleHead glorot(std::size_t input_dim, std::size_t style_count, std::uint64_t seed);

  std::size_t parameter_count() const noexcept {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
  // Fixed block order: w1, b1, w2, b2.
  std::array<std::span<double>, 4> blocks();
  std::array<std::span<const double>, 4> blocks() const;

  bool all_finite() const;
  double squared_norm() const;

  bool operator==(const StyleHead&) const = default;
};

// Gradients share the parameter layout.
using HeadGradient = StyleHead;

struct ForwardResult {
  std::array<double, kEmbeddingDim> hidden{};
  std::vector<double> logits;
  std::vector<double> probs;
};

// Throws InvalidArgument on a width mismatch.
ForwardResult forward(const StyleHead& head, std::span<const float> x);

// How a comparison score is formed from the two branches. Softmax follows the
// loss literally (difference of softmax outputs); LogitDifference uses the
// pre-softmax scores instead.
enum class PredictionMode : std::uint8_t { Softmax, LogitDifference };

double comparison_predict(const StyleHead& head, std::span<const float> x_i,
                          std::span<const float> x_j, StyleId style,
                          PredictionMode mode = PredictionMode::Softmax);

// log(1 + exp(-y * y_hat)), evaluated without overflow.
double bt_loss(int y, double y_hat) noexcept;

struct ComparisonExample {
  std::span<const float> x_i;
  std::span<const float> x_j;
  StyleId style;
  int y = 0;
};

struct GradientResult {
  HeadGradient gradient;
  double data_loss = 0.0;  // mean comparison loss over the batch
  double objective = 0.0;  // data_loss + lambda * ||params||^2
};

// Gradient of mean bt_loss + lambda * sum of squared parameters. Both siamese
// branches backpropagate into the shared parameters. Throws Diverged if the
// loss is not finite, InvalidArgument on an empty batch.
GradientResult batch_gradient(const StyleHead& head, std::span<const ComparisonExample> batch,
                              double lambda, PredictionMode mode = PredictionMode::Softmax);

// 2 * lambda * params.
HeadGradient l2_gradient(const StyleHead& head, double lambda);

// Objective value only; what the finite-difference oracle perturbs.
double comparison_objective(const StyleHead& head, std::span<const ComparisonExample> batch,
                            double lambda, PredictionMode mode = PredictionMode::Softmax);

struct LabeledExample {
  std::span<const float> x;
  StyleId style;
};

// Mean softmax cross-entropy + lambda * ||params||^2, for the discrete-label
// baseline.
GradientResult cross_entropy_gradient(const StyleHead& head,
                                      std::span<const LabeledExample> batch, double lambda);
double cross_entropy_objective(const StyleHead& head, std::span<const LabeledExample> batch,
                               double lambda);

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-8;
};

struct RmsPropState {
  StyleHead cache;

  static RmsPropState for_head(const StyleHead& head);
};

// cache <- decay * cache + (1 - decay) * g^2
// param <- param - lr * g / (sqrt(cache) + epsilon)
void rmsprop_step(StyleHead& head, const HeadGradient& gradient, RmsPropState& state,
                  const RmsPropConfig& config);

std::array<double, kEmbeddingDim> extract_embedding(const StyleHead& head,
                                                    std::span<const float> x);

}  // namespace stylerank
