#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "json.hpp"
#include "stylerank/dataset.hpp"
#include "stylerank/features.hpp"
#include "stylerank/stylenet.hpp"

namespace stylerank::testing {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(STYLERANK_FIXTURES) / rel;
}

class TempDir {
 public:
  TempDir() {
    static std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("stylerank-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Builds a store whose per-image style counts are exactly `counts`; each
// image's labels come from distinct experts e00, e01, ...
inline AnnotationStore store_from_counts(const std::vector<std::array<int, 4>>& counts,
                                         const std::string& prefix = "img") {
  std::vector<Annotation> rows;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s%03zu", prefix.c_str(), i);
    int expert = 0;
    for (std::uint32_t l = 0; l < 4; ++l) {
      for (int c = 0; c < counts[i][l]; ++c) {
        char e[16];
        std::snprintf(e, sizeof e, "e%02d", expert++);
        rows.push_back({id, e, StyleId{l}});
      }
    }
  }
  return AnnotationStore::from_annotations(rows);
}

inline StyleHead head_from_json(const nlohmann::json& doc) {
  StyleHead h;
  h.input_dim = doc.at("input_dim").get<std::size_t>();
  h.style_count = doc.at("style_count").get<std::size_t>();
  h.w1 = doc.at("w1").get<std::vector<double>>();
  h.b1 = doc.at("b1").get<std::vector<double>>();
  h.w2 = doc.at("w2").get<std::vector<double>>();
  h.b2 = doc.at("b2").get<std::vector<double>>();
  return h;
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

// Runs a shell command, capturing stdout. stderr is folded in when asked.
inline CommandResult run_command(const std::string& cmd, bool merge_stderr = false) {
  CommandResult r;
  FILE* pipe = ::popen((cmd + (merge_stderr ? " 2>&1" : "")).c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  return nlohmann::json::parse(slurp(path));
}

// Structural equality with a numeric tolerance for floating-point leaves.
inline bool json_close(const nlohmann::json& a, const nlohmann::json& b, double tol,
                       std::string* where = nullptr, const std::string& path = "$") {
  auto mismatch = [&] {
    if (where) *where = path + ": " + a.dump() + " vs " + b.dump();
    return false;
  };
  if (a.is_number() && b.is_number()) {
    if (a.is_number_float() || b.is_number_float()) {
      const double x = a.get<double>(), y = b.get<double>();
      return std::abs(x - y) <= tol * std::max(1.0, std::abs(y)) ? true : mismatch();
    }
    return a == b ? true : mismatch();
  }
  if (a.type() != b.type()) return mismatch();
  if (a.is_object()) {
    if (a.size() != b.size()) return mismatch();
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) return mismatch();
      if (!json_close(it.value(), b.at(it.key()), tol, where, path + "." + it.key())) return false;
    }
    return true;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return mismatch();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!json_close(a[i], b[i], tol, where, path + "[" + std::to_string(i) + "]")) return false;
    }
    return true;
  }
  return a == b ? true : mismatch();
}

// Central-difference gradient of `objective` over every parameter, returned
// with the same block layout as the head.
template <typename Objective>
StyleHead numeric_gradient(const StyleHead& head, Objective&& objective, double h) {
  StyleHead probe = head;
  StyleHead grad = head;
  auto probe_blocks = probe.blocks();
  auto grad_blocks = grad.blocks();
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < probe_blocks[b].size(); ++i) {
      const double saved = probe_blocks[b][i];
      probe_blocks[b][i] = saved + h;
      const double up = objective(probe);
      probe_blocks[b][i] = saved - h;
      const double down = objective(probe);
      probe_blocks[b][i] = saved;
      grad_blocks[b][i] = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

// ||a - n|| / max(||a||, ||n||, 1e-4) per block. The floor keeps blocks whose
// true gradient is exactly zero (b2 under logit differences without L2) from
// dividing finite-difference roundoff by itself.
inline std::array<double, 4> block_relative_errors(const StyleHead& analytic,
                                                   const StyleHead& numeric) {
  std::array<double, 4> out{};
  const auto a = analytic.blocks();
  const auto n = numeric.blocks();
  for (std::size_t b = 0; b < 4; ++b) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a[b].size(); ++i) {
      diff += (a[b][i] - n[b][i]) * (a[b][i] - n[b][i]);
      na += a[b][i] * a[b][i];
      nn += n[b][i] * n[b][i];
    }
    out[b] = std::sqrt(diff) / std::max(std::sqrt(std::max(na, nn)), 1e-4);
  }
  return out;
}


// Independent scalar forward pass: returns (hidden, probs, logits).
struct ReferenceForward {
  std::vector<double> hidden, logits, probs;
};

inline ReferenceForward reference_forward(const StyleHead& head, std::span<const float> x) {
  const std::size_t H = kEmbeddingDim, L = head.style_count;
  ReferenceForward f;
  f.hidden.assign(H, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    double z = head.b1[h];
    for (std::size_t k = 0; k < head.input_dim; ++k) z += double(x[k]) * head.w1[k * H + h];
    f.hidden[h] = std::max(z, 0.0);
  }
  f.logits.assign(L, 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    double z = head.b2[l];
    for (std::size_t h = 0; h < H; ++h) z += f.hidden[h] * head.w2[h * L + l];
    f.logits[l] = z;
  }
  for (std::size_t l = 0; l < L; ++l) total += std::exp(f.logits[l]);
  for (std::size_t l = 0; l < L; ++l) f.probs.push_back(std::exp(f.logits[l]) / total);
  return f;
}

// mean log(1 + exp(-y (p_i[l] - p_j[l]))) + lambda * sum(theta^2)
inline double reference_objective(const StyleHead& head,
                                  std::span<const ComparisonExample> batch, double lambda,
                                  bool logit_difference = false) {
  double loss = 0.0;
  for (const auto& ex : batch) {
    const auto fi = reference_forward(head, ex.x_i);
    const auto fj = reference_forward(head, ex.x_j);
    const auto& si = logit_difference ? fi.logits : fi.probs;
    const auto& sj = logit_difference ? fj.logits : fj.probs;
    loss += std::log(1.0 + std::exp(-double(ex.y) * (si[ex.style.index] - sj[ex.style.index])));
  }
  double norm = 0.0;
  for (auto block : head.blocks()) {
    for (double v : block) norm += v * v;
  }
  return loss / double(batch.size()) + lambda * norm;
}

inline double reference_cross_entropy(const StyleHead& head,
                                      std::span<const LabeledExample> batch, double lambda) {
  double loss = 0.0;
  for (const auto& ex : batch) loss -= std::log(reference_forward(head, ex.x).probs[ex.style.index]);
  double norm = 0.0;
  for (auto block : head.blocks()) {
    for (double v : block) norm += v * v;
  }
  return loss / double(batch.size()) + lambda * norm;
}

// Random head with nonzero biases, entries ~ N(0, scale^2).
inline StyleHead random_head(std::size_t d, std::size_t L, std::uint64_t seed, double scale = 0.5) {
  StyleHead head = StyleHead::zeros(d, L);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto block : head.blocks()) {
    for (auto& v : block) v = n(gen);
  }
  return head;
}

}  // namespace stylerank::testing
