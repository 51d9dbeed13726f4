#include "stylerank/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "binary_io.hpp"
#include "file_util.hpp"
#include "stylerank/error.hpp"
#include "stylerank/eval.hpp"
#include "stylerank/rng.hpp"

namespace stylerank {

namespace {

constexpr std::string_view kCheckpointMagic = "STYH";

const char* mode_name(PredictionMode mode) {
  return mode == PredictionMode::Softmax ? "softmax" : "logit_difference";
}

// Shared mini-batch loop. `Step` maps a batch of examples to a
// GradientResult; `Loss` gives the mean data loss over a span of examples.
template <class Example, class Step, class Loss>
TrainResult run_training(const std::vector<Example>& examples, const FeatureTable& features,
                         const TrainConfig& config, const std::vector<LabeledImage>& validation,
                         const EpochCallback& on_epoch, Step step, Loss loss) {
  config.validate();
  if (examples.empty()) throw Error(ErrorCode::InvalidArgument, "training set is empty");

  TrainResult result;
  result.head = StyleHead::glorot(features.dim(), config.style_count, derive_seed(config.seed, 0));
  result.initial_loss = loss(result.head, std::span<const Example>(examples));

  Rng rng(derive_seed(config.seed, 1));
  RmsPropState state = RmsPropState::for_head(result.head);
  const RmsPropConfig optimizer = config.optimizer();

  StyleHead current = result.head;
  std::optional<double> best_acc;
  std::size_t stale = 0;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Example> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t p = start; p < end; ++p) batch.push_back(examples[order[p]]);
      GradientResult g;
      try {
        g = step(current, std::span<const Example>(batch));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Diverged) throw;
        throw Error(ErrorCode::Diverged,
                    "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      loss_sum += g.data_loss * static_cast<double>(batch.size());
      rmsprop_step(current, g.gradient, state, optimizer);
    }
    if (!current.all_finite()) {
      throw Error(ErrorCode::Diverged,
                  "training diverged at epoch " + std::to_string(epoch) + ": non-finite weights");
    }

    EpochMetrics metrics{epoch, loss_sum / static_cast<double>(examples.size()), std::nullopt};
    bool improved = validation.empty();
    if (!validation.empty()) {
      metrics.val_acc = classification_accuracy(current, features, validation).accuracy;
      improved = !best_acc || *metrics.val_acc > *best_acc;
    }
    result.history.push_back(metrics);
    if (on_epoch) on_epoch(metrics);

    if (improved) {
      if (metrics.val_acc) best_acc = metrics.val_acc;
      result.head = current;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  }
  if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "rmsprop_decay must lie in (0, 1)");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  }
  if (!(rmsprop_epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (early_stop_patience < 1) {
    throw Error(ErrorCode::InvalidArgument, "early_stop_patience must be >= 1");
  }
  if (style_count < 2) throw Error(ErrorCode::InvalidArgument, "style_count must be >= 2");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"lambda", lambda},
          {"rmsprop_decay", rmsprop_decay},
          {"rmsprop_epsilon", rmsprop_epsilon},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"seed", seed},
          {"style_count", style_count},
          {"mode", mode_name(mode)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.lambda = doc.value("lambda", c.lambda);
  c.rmsprop_decay = doc.value("rmsprop_decay", c.rmsprop_decay);
  c.rmsprop_epsilon = doc.value("rmsprop_epsilon", c.rmsprop_epsilon);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.max_epochs = doc.value("max_epochs", c.max_epochs);
  c.early_stop_patience = doc.value("early_stop_patience", c.early_stop_patience);
  c.seed = doc.value("seed", c.seed);
  c.style_count = doc.value("style_count", c.style_count);
  const auto mode = doc.value("mode", std::string("softmax"));
  if (mode == "softmax") {
    c.mode = PredictionMode::Softmax;
  } else if (mode == "logit_difference") {
    c.mode = PredictionMode::LogitDifference;
  } else {
    throw Error(ErrorCode::Parse, "unknown prediction mode " + mode);
  }
  return c;
}

std::vector<LabeledImage> labeled_images(const AnnotationStore& store,
                                         const SplitAssignment* splits,
                                         std::optional<Split> split,
                                         const ValidationSetSpec& spec) {
  if (split && splits == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "a split was requested but no split assignment given");
  }
  std::vector<LabeledImage> out;
  for (const auto& m : build_style_set(store, spec)) {
    const auto& id = store.image_id(m.image);
    if (split && splits->split_of(id) != split) continue;
    out.push_back({id, m.style});
  }
  return out;
}

TrainResult train(const FeatureTable& features, const std::vector<ComparisonLabel>& comparisons,
                  const TrainConfig& config, const std::vector<LabeledImage>& validation,
                  const EpochCallback& on_epoch) {
  std::vector<ComparisonExample> examples;
  examples.reserve(comparisons.size());
  for (const auto& c : comparisons) {
    if (c.style.index >= config.style_count) {
      throw Error(ErrorCode::InvalidArgument, "comparison style outside the configured styles");
    }
    examples.push_back({features.at(c.i), features.at(c.j), c.style, c.y});
  }
  const auto mode = config.mode;
  const auto lambda = config.lambda;
  return run_training(
      examples, features, config, validation, on_epoch,
      [&](const StyleHead& head, std::span<const ComparisonExample> batch) {
        return batch_gradient(head, batch, lambda, mode);
      },
      [&](const StyleHead& head, std::span<const ComparisonExample> all) {
        return comparison_objective(head, all, 0.0, mode);
      });
}

TrainResult train_discrete(const FeatureTable& features, const std::vector<LabeledImage>& labels,
                           const TrainConfig& config, const std::vector<LabeledImage>& validation,
                           const EpochCallback& on_epoch) {
  std::vector<LabeledExample> examples;
  examples.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.style.index >= config.style_count) {
      throw Error(ErrorCode::InvalidArgument, "label style outside the configured styles");
    }
    examples.push_back({features.at(l.image_id), l.style});
  }
  const auto lambda = config.lambda;
  return run_training(
      examples, features, config, validation, on_epoch,
      [&](const StyleHead& head, std::span<const LabeledExample> batch) {
        return cross_entropy_gradient(head, batch, lambda);
      },
      [&](const StyleHead& head, std::span<const LabeledExample> all) {
        return cross_entropy_objective(head, all, 0.0);
      });
}

std::string metrics_line(const EpochMetrics& metrics) {
  nlohmann::json row = {{"epoch", metrics.epoch}, {"train_loss", metrics.train_loss}};
  row["val_acc"] = metrics.val_acc ? nlohmann::json(*metrics.val_acc) : nlohmann::json(nullptr);
  return row.dump();
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const auto& head = checkpoint.head;
  nlohmann::json header = {{"format", "stylerank-head"},
                           {"version", Checkpoint::kVersion},
                           {"d", head.input_dim},
                           {"L", head.style_count},
                           {"hidden", kEmbeddingDim},
                           {"seed", checkpoint.seed},
                           {"config", checkpoint.config.to_json()}};
  const std::string text = header.dump();
  io::write_magic(out, kCheckpointMagic);
  io::write_le<std::uint32_t>(out, Checkpoint::kVersion);
  io::write_string(out, text);
  for (auto block : head.blocks()) {
    for (double v : block) io::write_le<float>(out, static_cast<float>(v));
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  auto out = detail::open_output(path, true);
  write_checkpoint(out, checkpoint);
  detail::finish_output(out, path);
}

Checkpoint read_checkpoint(std::istream& in) {
  io::expect_magic(in, kCheckpointMagic);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != Checkpoint::kVersion) {
    throw Error(ErrorCode::FormatVersion,
                "checkpoint version " + std::to_string(version) + " is not supported");
  }
  Checkpoint cp;
  try {
    const auto header = nlohmann::json::parse(io::read_string(in));
    if (header.at("hidden").get<std::size_t>() != kEmbeddingDim) {
      throw Error(ErrorCode::FormatVersion, "checkpoint hidden width is not 16");
    }
    cp.head = StyleHead::zeros(header.at("d").get<std::size_t>(), header.at("L").get<std::size_t>());
    cp.seed = header.at("seed").get<std::uint64_t>();
    cp.config = TrainConfig::from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed checkpoint header: ") + e.what());
  }
  for (auto block : cp.head.blocks()) {
    for (double& v : block) v = io::read_le<float>(in);
  }
  if (!cp.head.all_finite()) throw Error(ErrorCode::Parse, "checkpoint holds non-finite weights");
  return cp;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_input(path, true);
  try {
    return read_checkpoint(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

GridSpec GridSpec::default_ranges() {
  return {{0.002, 0.0002, 0.00002},
          {1, 2, 3},
          {500'000, 1'000'000, 2'000'000, 3'000'000, 4'000'000, 5'000'000, 10'000'000,
           15'000'000}};
}

void GridSpec::validate() const {
  if (lambdas.empty() || thresholds.empty() || comparison_counts.empty()) {
    throw Error(ErrorCode::InvalidArgument, "every grid axis needs at least one value");
  }
}

std::size_t select_best_cell(const std::vector<GridCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (!c.val_acc) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = cells[*best];
    // Higher accuracy first, then smaller lambda, comparison count, t.
    if (std::make_tuple(-*c.val_acc, c.lambda, c.comparison_count, c.threshold) <
        std::make_tuple(-*b.val_acc, b.lambda, b.comparison_count, b.threshold)) {
      best = i;
    }
  }
  if (!best) throw Error(ErrorCode::InvalidArgument, "every grid cell failed");
  return *best;
}

GridResult grid_search(const AnnotationStore& store, const SplitAssignment& splits,
                       const FeatureTable& features, const GridSpec& grid,
                       const TrainConfig& base, const ValidationSetSpec& validation_spec) {
  grid.validate();
  base.validate();
  const auto validation = labeled_images(store, &splits, Split::Validation, validation_spec);
  if (validation.empty()) {
    throw Error(ErrorCode::InvalidArgument, "validation split has no clean-labelled images");
  }

  GridResult result;
  std::vector<std::optional<StyleHead>> heads;
  for (double lambda : grid.lambdas) {
    for (int t : grid.thresholds) {
      for (std::size_t n_c : grid.comparison_counts) {
        GridCell cell{lambda, t, n_c, std::nullopt, {}};
        std::optional<StyleHead> head;
        try {
          const auto comparisons =
              sample_comparisons(store, &splits, {t, n_c, base.seed, Split::Train});
          TrainConfig config = base;
          config.lambda = lambda;
          auto trained = train(features, comparisons, config, validation);
          cell.val_acc = classification_accuracy(trained.head, features, validation).accuracy;
          head = std::move(trained.head);
        } catch (const Error& e) {
          cell.error = e.what();
        }
        result.cells.push_back(std::move(cell));
        heads.push_back(std::move(head));
      }
    }
  }
  result.best = select_best_cell(result.cells);
  result.best_head = std::move(*heads[result.best]);
  return result;
}

nlohmann::json grid_to_json(const GridResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    nlohmann::json row = {{"lambda", c.lambda}, {"t", c.threshold}, {"n_c", c.comparison_count}};
    row["val_acc"] = c.val_acc ? nlohmann::json(*c.val_acc) : nlohmann::json(nullptr);
    if (!c.error.empty()) row["error"] = c.error;
    cells.push_back(std::move(row));
  }
  return {{"cells", cells}, {"best", result.best}};
}

}  // namespace stylerank
