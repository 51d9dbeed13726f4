#include "stylerank/stylenet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stylerank/error.hpp"
#include "stylerank/rng.hpp"

namespace stylerank {

namespace {

constexpr std::size_t H = kEmbeddingDim;

void check_input(const StyleHead& head, std::span<const float> x) {
  if (x.size() != head.input_dim) {
    throw Error(ErrorCode::InvalidArgument, "input has " + std::to_string(x.size()) +
                                                " features, head expects " +
                                                std::to_string(head.input_dim));
  }
}

void check_style(const StyleHead& head, StyleId style) {
  if (style.index >= head.style_count) {
    throw Error(ErrorCode::InvalidArgument, "style index out of range for head");
  }
}

// sigma(v) without overflow.
double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Accumulates one branch's contribution given dLoss/dlogits.
void backprop_branch(const StyleHead& head, std::span<const float> x, const ForwardResult& fwd,
                     std::span<const double> g_logits, HeadGradient& grad) {
  const std::size_t L = head.style_count;
  std::array<double, H> g_pre{};
  for (std::size_t h = 0; h < H; ++h) {
    double g_h = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      grad.w2[h * L + l] += fwd.hidden[h] * g_logits[l];
      g_h += head.w2[h * L + l] * g_logits[l];
    }
    // ReLU subgradient at 0 is 0.
    g_pre[h] = fwd.hidden[h] > 0.0 ? g_h : 0.0;
    grad.b1[h] += g_pre[h];
  }
  for (std::size_t l = 0; l < L; ++l) grad.b2[l] += g_logits[l];
  for (std::size_t k = 0; k < head.input_dim; ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    double* row = grad.w1.data() + k * H;
    for (std::size_t h = 0; h < H; ++h) row[h] += xk * g_pre[h];
  }
}

void add_l2(const StyleHead& head, double lambda, HeadGradient& grad) {
  if (lambda == 0.0) return;
  auto src = head.blocks();
  auto dst = grad.blocks();
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < src[b].size(); ++i) dst[b][i] += 2.0 * lambda * src[b][i];
  }
}

void scale(HeadGradient& grad, double factor) {
  for (auto block : grad.blocks()) {
    for (auto& v : block) v *= factor;
  }
}

// dLoss/dlogits for one branch of a comparison, given dLoss/dy_hat.
void comparison_logit_gradient(const ForwardResult& fwd, StyleId style, double g_yhat,
                               PredictionMode mode, std::span<double> out) {
  const std::size_t L = out.size();
  if (mode == PredictionMode::LogitDifference) {
    std::fill(out.begin(), out.end(), 0.0);
    out[style.index] = g_yhat;
    return;
  }
  const double p_l = fwd.probs[style.index];
  for (std::size_t m = 0; m < L; ++m) {
    out[m] = g_yhat * p_l * ((m == style.index ? 1.0 : 0.0) - fwd.probs[m]);
  }
}

double branch_score(const ForwardResult& fwd, StyleId style, PredictionMode mode) {
  return mode == PredictionMode::Softmax ? fwd.probs[style.index] : fwd.logits[style.index];
}

}  // namespace

StyleHead StyleHead::zeros(std::size_t input_dim, std::size_t style_count) {
  if (input_dim == 0 || style_count < 2) {
    throw Error(ErrorCode::InvalidArgument, "head needs d >= 1 and L >= 2");
  }
  StyleHead head;
  head.input_dim = input_dim;
  head.style_count = style_count;
  head.w1.assign(input_dim * H, 0.0);
  head.b1.assign(H, 0.0);
  head.w2.assign(H * style_count, 0.0);
  head.b2.assign(style_count, 0.0);
  return head;
}

StyleHead StyleHead::glorot(std::size_t input_dim, std::size_t style_count, std::uint64_t seed) {
  StyleHead head = zeros(input_dim, style_count);
  Rng rng(seed);
  const double r1 = std::sqrt(6.0 / double(input_dim + H));
  for (auto& w : head.w1) w = rng.uniform(-r1, r1);
  const double r2 = std::sqrt(6.0 / double(H + style_count));
  for (auto& w : head.w2) w = rng.uniform(-r2, r2);
  return head;
}

std::array<std::span<double>, 4> StyleHead::blocks() {
  return {std::span<double>(w1), std::span<double>(b1), std::span<double>(w2),
          std::span<double>(b2)};
}

std::array<std::span<const double>, 4> StyleHead::blocks() const {
  return {std::span<const double>(w1), std::span<const double>(b1), std::span<const double>(w2),
          std::span<const double>(b2)};
}

bool StyleHead::all_finite() const {
  for (auto block : blocks()) {
    for (double v : block) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double StyleHead::squared_norm() const {
  double s = 0.0;
  for (auto block : blocks()) {
    for (double v : block) s += v * v;
  }
  return s;
}

ForwardResult forward(const StyleHead& head, std::span<const float> x) {
  check_input(head, x);
  const std::size_t L = head.style_count;
  ForwardResult out;
  std::array<double, H> pre{};
  std::copy(head.b1.begin(), head.b1.end(), pre.begin());
  for (std::size_t k = 0; k < head.input_dim; ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    const double* row = head.w1.data() + k * H;
    for (std::size_t h = 0; h < H; ++h) pre[h] += xk * row[h];
  }
  for (std::size_t h = 0; h < H; ++h) out.hidden[h] = pre[h] > 0.0 ? pre[h] : 0.0;

  out.logits.assign(head.b2.begin(), head.b2.end());
  for (std::size_t h = 0; h < H; ++h) {
    const double v = out.hidden[h];
    if (v == 0.0) continue;
    for (std::size_t l = 0; l < L; ++l) out.logits[l] += v * head.w2[h * L + l];
  }
  const double top = *std::max_element(out.logits.begin(), out.logits.end());
  out.probs.resize(L);
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) total += out.probs[l] = std::exp(out.logits[l] - top);
  for (auto& p : out.probs) p /= total;
  return out;
}

double comparison_predict(const StyleHead& head, std::span<const float> x_i,
                          std::span<const float> x_j, StyleId style, PredictionMode mode) {
  check_style(head, style);
  const auto fi = forward(head, x_i);
  const auto fj = forward(head, x_j);
  return branch_score(fi, style, mode) - branch_score(fj, style, mode);
}

double bt_loss(int y, double y_hat) noexcept {
  const double a = -static_cast<double>(y) * y_hat;
  if (a > 0.0) return a + std::log1p(std::exp(-a));
  return std::log1p(std::exp(a));
}

HeadGradient l2_gradient(const StyleHead& head, double lambda) {
  HeadGradient grad = StyleHead::zeros(head.input_dim, head.style_count);
  add_l2(head, lambda, grad);
  return grad;
}

GradientResult batch_gradient(const StyleHead& head, std::span<const ComparisonExample> batch,
                              double lambda, PredictionMode mode) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty comparison batch");
  GradientResult result{StyleHead::zeros(head.input_dim, head.style_count), 0.0, 0.0};
  std::vector<double> g_i(head.style_count);
  std::vector<double> g_j(head.style_count);
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    check_style(head, ex.style);
    const auto fi = forward(head, ex.x_i);
    const auto fj = forward(head, ex.x_j);
    const double y_hat = branch_score(fi, ex.style, mode) - branch_score(fj, ex.style, mode);
    loss_sum += bt_loss(ex.y, y_hat);
    // d/dy_hat log(1 + exp(-y y_hat)) = -y sigma(-y y_hat)
    const double g = -double(ex.y) * sigmoid(-double(ex.y) * y_hat);
    comparison_logit_gradient(fi, ex.style, g, mode, g_i);
    comparison_logit_gradient(fj, ex.style, -g, mode, g_j);
    backprop_branch(head, ex.x_i, fi, g_i, result.gradient);
    backprop_branch(head, ex.x_j, fj, g_j, result.gradient);
  }
  const double n = static_cast<double>(batch.size());
  scale(result.gradient, 1.0 / n);
  add_l2(head, lambda, result.gradient);
  result.data_loss = loss_sum / n;
  result.objective = result.data_loss + lambda * head.squared_norm();
  if (!std::isfinite(result.objective)) {
    throw Error(ErrorCode::Diverged, "non-finite comparison loss");
  }
  return result;
}

double comparison_objective(const StyleHead& head, std::span<const ComparisonExample> batch,
                            double lambda, PredictionMode mode) {
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    loss_sum += bt_loss(ex.y, comparison_predict(head, ex.x_i, ex.x_j, ex.style, mode));
  }
  return loss_sum / static_cast<double>(batch.size()) + lambda * head.squared_norm();
}

GradientResult cross_entropy_gradient(const StyleHead& head,
                                      std::span<const LabeledExample> batch, double lambda) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty label batch");
  GradientResult result{StyleHead::zeros(head.input_dim, head.style_count), 0.0, 0.0};
  std::vector<double> g(head.style_count);
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    check_style(head, ex.style);
    const auto f = forward(head, ex.x);
    loss_sum += -std::log(f.probs[ex.style.index]);
    for (std::size_t l = 0; l < g.size(); ++l) {
      g[l] = f.probs[l] - (l == ex.style.index ? 1.0 : 0.0);
    }
    backprop_branch(head, ex.x, f, g, result.gradient);
  }
  const double n = static_cast<double>(batch.size());
  scale(result.gradient, 1.0 / n);
  add_l2(head, lambda, result.gradient);
  result.data_loss = loss_sum / n;
  result.objective = result.data_loss + lambda * head.squared_norm();
  if (!std::isfinite(result.objective)) {
    throw Error(ErrorCode::Diverged, "non-finite cross-entropy loss");
  }
  return result;
}

double cross_entropy_objective(const StyleHead& head, std::span<const LabeledExample> batch,
                               double lambda) {
  double loss_sum = 0.0;
  for (const auto& ex : batch) loss_sum += -std::log(forward(head, ex.x).probs[ex.style.index]);
  return loss_sum / static_cast<double>(batch.size()) + lambda * head.squared_norm();
}

RmsPropState RmsPropState::for_head(const StyleHead& head) {
  return {StyleHead::zeros(head.input_dim, head.style_count)};
}

void rmsprop_step(StyleHead& head, const HeadGradient& gradient, RmsPropState& state,
                  const RmsPropConfig& config) {
  auto params = head.blocks();
  auto grads = gradient.blocks();
  auto cache = state.cache.blocks();
  for (std::size_t b = 0; b < 4; ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != cache[b].size()) {
      throw Error(ErrorCode::InvalidArgument, "optimizer state does not match the head");
    }
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      cache[b][i] = config.decay * cache[b][i] + (1.0 - config.decay) * g * g;
      params[b][i] -= config.learning_rate * g / (std::sqrt(cache[b][i]) + config.epsilon);
    }
  }
}

std::array<double, kEmbeddingDim> extract_embedding(const StyleHead& head,
                                                    std::span<const float> x) {
  return forward(head, x).hidden;
}

}  // namespace stylerank
