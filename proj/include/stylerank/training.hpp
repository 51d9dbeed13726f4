#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stylerank/comparisons.hpp"
#include "stylerank/dataset.hpp"
#include "stylerank/features.hpp"
#include "stylerank/stylenet.hpp"

namespace stylerank {

struct TrainConfig {
  double learning_rate = 1e-4;
  double lambda = 0.0;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;
  std::size_t style_count = 4;
  PredictionMode mode = PredictionMode::Softmax;

  void validate() const;
  RmsPropConfig optimizer() const { return {learning_rate, rmsprop_decay, rmsprop_epsilon}; }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

// Single ground-truth style for an image, used for accuracy.
struct LabeledImage {
  std::string image_id;
  StyleId style;

  auto operator<=>(const LabeledImage&) const = default;
};

// Single-style labels for images of one split (all images when split is
// nullopt). With a single_label spec every image appears once.
std::vector<LabeledImage> labeled_images(const AnnotationStore& store,
                                         const SplitAssignment* splits,
                                         std::optional<Split> split,
                                         const ValidationSetSpec& spec);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_acc;
};

struct TrainResult {
  StyleHead head;
  double initial_loss = 0.0;  // mean data loss of the initial head
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;  // 0 = initialization
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Shuffled mini-batch RMSProp on the comparison objective. With a non-empty
// validation set, training stops after `early_stop_patience` epochs without
// an accuracy improvement and the best-accuracy head is returned. Throws
// Diverged (naming the epoch) on a non-finite loss, NotFound for an image
// without features.
TrainResult train(const FeatureTable& features, const std::vector<ComparisonLabel>& comparisons,
                  const TrainConfig& config, const std::vector<LabeledImage>& validation = {},
                  const EpochCallback& on_epoch = {});

// Same loop with softmax cross-entropy over discrete labels.
TrainResult train_discrete(const FeatureTable& features, const std::vector<LabeledImage>& labels,
                           const TrainConfig& config,
                           const std::vector<LabeledImage>& validation = {},
                           const EpochCallback& on_epoch = {});

// {"epoch": n, "train_loss": f, "val_acc": f}
std::string metrics_line(const EpochMetrics& metrics);

// Checkpoint: "STYH", u32 version, u32 header length, JSON header
// {d, L, hidden, seed, config}, then little-endian f32 blocks w1, b1, w2, b2.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  StyleHead head;
  std::uint64_t seed = 0;
  TrainConfig config;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct GridSpec {
  std::vector<double> lambdas;
  std::vector<int> thresholds;
  std::vector<std::size_t> comparison_counts;

  // lambda in {2e-3, 2e-4, 2e-5}, t in {1, 2, 3}, comparison counts in {0.5M ... 15M}.
  static GridSpec default_ranges();
  void validate() const;
};

struct GridCell {
  double lambda = 0.0;
  int threshold = 0;
  std::size_t comparison_count = 0;
  std::optional<double> val_acc;
  std::string error;  // non-empty when the cell failed
};

struct GridResult {
  std::vector<GridCell> cells;  // lambda-major, then threshold, then count
  std::size_t best = 0;
  StyleHead best_head;
};

// One training run per cell on freshly sampled training-split comparisons,
// scored by classification accuracy on the validation split's clean labels.
// Best cell: highest accuracy; ties to smaller lambda, then smaller comparison count,
// then smaller t. Failed cells are recorded and skipped. Throws when every
// cell fails or the validation set is empty.
GridResult grid_search(const AnnotationStore& store, const SplitAssignment& splits,
                       const FeatureTable& features, const GridSpec& grid,
                       const TrainConfig& base,
                       const ValidationSetSpec& validation_spec = ValidationSetSpec::clean());

// Selection rule on its own, so reports can be re-checked.
std::size_t select_best_cell(const std::vector<GridCell>& cells);

nlohmann::json grid_to_json(const GridResult& result);

}  // namespace stylerank
