#include "stylerank/stylerank.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "file_util.hpp"
#include "json.hpp"
#include "stylerank/comparisons.hpp"
#include "stylerank/compat.hpp"
#include "stylerank/dataset.hpp"
#include "stylerank/error.hpp"
#include "stylerank/eval.hpp"
#include "stylerank/service.hpp"
#include "stylerank/synthetic.hpp"
#include "stylerank/training.hpp"

using namespace stylerank;
using nlohmann::json;

struct sr_dataset {
  AnnotationStore store;
};

struct sr_head {
  Checkpoint checkpoint;
};

struct sr_index {
  std::shared_ptr<const CompatibilityIndex> index;
};

struct sr_ranking {
  std::vector<Suggestion> items;
};

struct sr_service {
  std::unique_ptr<SuggestionService> service;
  std::unique_ptr<HttpServer> server;
};

namespace {

thread_local std::string last_error;

sr_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return SR_INVALID_ARGUMENT;
    case ErrorCode::Parse: return SR_PARSE;
    case ErrorCode::Io: return SR_IO;
    case ErrorCode::NotFound: return SR_NOT_FOUND;
    case ErrorCode::Duplicate: return SR_DUPLICATE;
    case ErrorCode::Unrankable: return SR_UNRANKABLE;
    case ErrorCode::FormatVersion: return SR_FORMAT_VERSION;
    case ErrorCode::StaleIndex: return SR_STALE_INDEX;
    case ErrorCode::GenerationMismatch: return SR_GENERATION_MISMATCH;
    case ErrorCode::EmptyPopulation: return SR_EMPTY_POPULATION;
    case ErrorCode::Diverged: return SR_DIVERGED;
    case ErrorCode::Internal: return SR_INTERNAL;
  }
  return SR_INTERNAL;
}

sr_status fail(sr_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <typename F>
sr_status guard(F&& body) {
  try {
    body();
    last_error.clear();
    return SR_OK;
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(SR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::optional<Split> split_arg(const char* name) {
  if (name == nullptr || *name == '\0') return std::nullopt;
  auto split = parse_split(name);
  if (!split) throw Error(ErrorCode::InvalidArgument, std::string("unknown split ") + name);
  return split;
}

std::optional<SplitAssignment> splits_arg(const char* path) {
  if (path == nullptr || *path == '\0') return std::nullopt;
  return SplitAssignment::load(path);
}

TrainConfig train_config(const sr_train_options* o, std::size_t style_count) {
  TrainConfig c;
  c.learning_rate = o->learning_rate;
  c.lambda = o->lambda;
  c.rmsprop_decay = o->rmsprop_decay;
  c.rmsprop_epsilon = o->rmsprop_epsilon;
  c.batch_size = o->batch_size;
  c.max_epochs = o->max_epochs;
  c.early_stop_patience = o->early_stop_patience;
  c.seed = o->seed;
  c.style_count = style_count;
  c.mode = o->logit_difference ? PredictionMode::LogitDifference : PredictionMode::Softmax;
  c.validate();
  return c;
}

std::vector<std::string> scene_arg(const char* const* scene, std::size_t n) {
  require(scene != nullptr || n == 0, "scene is null");
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(scene[i] != nullptr, "scene id is null");
    out.emplace_back(scene[i]);
  }
  return out;
}

}  // namespace

extern "C" {

const char* sr_status_name(sr_status status) {
  if (status == SR_OK) return "ok";
  if (status < SR_OK || status > SR_INTERNAL) return "unknown";
  return error_code_name(static_cast<ErrorCode>(status - 1));
}

const char* sr_last_error_message(void) { return last_error.c_str(); }

const char* sr_version(void) { return "0.1.0"; }

void sr_string_free(char* s) { std::free(s); }

void sr_synth_options_default(sr_synth_options* options) {
  if (options == nullptr) return;
  const SyntheticCorpusConfig d;
  *options = {d.image_count,   d.expert_count,  d.feature_dim, d.dominance, d.mixture_spread,
              d.expert_noise,  d.feature_noise, d.expert_bias, d.separable ? 1 : 0, d.seed};
}

sr_status sr_synth_corpus(const sr_synth_options* options, const char* annotations_path,
                          const char* features_path) {
  return guard([&] {
    require(options && annotations_path && features_path, "null argument");
    SyntheticCorpusConfig c;
    c.image_count = options->image_count;
    c.expert_count = options->expert_count;
    c.feature_dim = options->feature_dim;
    c.dominance = options->dominance;
    c.mixture_spread = options->mixture_spread;
    c.expert_noise = options->expert_noise;
    c.feature_noise = options->feature_noise;
    c.expert_bias = options->expert_bias;
    c.separable = options->separable != 0;
    c.seed = options->seed;
    const auto corpus = generate_corpus(c);
    const auto styles = StyleCatalog::standard();
    auto out = detail::open_output(annotations_path);
    for (const auto& a : corpus.annotations) {
      out << json{{"image_id", a.image_id}, {"expert_id", a.expert_id},
                  {"style", styles.name(a.style)}}.dump()
          << '\n';
    }
    detail::finish_output(out, annotations_path);
    corpus.features.save(features_path);
  });
}

sr_status sr_synth_catalog(size_t item_count, size_t max_images_per_item,
                           double similar_fraction, uint64_t seed, const char* registry_path,
                           const char* embeddings_path) {
  return guard([&] {
    require(registry_path && embeddings_path, "null argument");
    SyntheticCatalogConfig c;
    c.item_count = item_count;
    c.max_images_per_item = max_images_per_item;
    c.similar_fraction = similar_fraction;
    c.seed = seed;
    const auto catalog = generate_catalog(c);
    catalog.registry.save(registry_path);
    catalog.embeddings.save(embeddings_path);
  });
}

sr_status sr_dataset_load(const char* annotations_path, sr_dataset** out) {
  return guard([&] {
    require(annotations_path && out, "null argument");
    *out = new sr_dataset{AnnotationStore::load(annotations_path)};
  });
}

void sr_dataset_free(sr_dataset* dataset) { delete dataset; }

size_t sr_dataset_image_count(const sr_dataset* dataset) {
  return dataset ? dataset->store.image_count() : 0;
}

size_t sr_dataset_expert_count(const sr_dataset* dataset) {
  return dataset ? dataset->store.expert_count() : 0;
}

sr_status sr_dataset_summary(const sr_dataset* dataset, char** json_out) {
  return guard([&] {
    require(dataset && json_out, "null argument");
    const auto& store = dataset->store;
    json per_style = json::object();
    for (std::size_t l = 0; l < store.style_count(); ++l) {
      long total = 0;
      for (std::size_t i = 0; i < store.image_count(); ++i) {
        total += store.count(i, StyleId{static_cast<std::uint32_t>(l)});
      }
      per_style[store.styles().names()[l]] = total;
    }
    const auto clean = build_style_set(store, ValidationSetSpec::clean());
    const json doc{{"images", store.image_count()},
                   {"experts", store.expert_count()},
                   {"annotations", store.annotation_count()},
                   {"labels_per_style", per_style},
                   {"clean_images", clean.size()}};
    *json_out = dup_string(doc.dump());
  });
}

sr_status sr_dataset_assign_splits(const sr_dataset* dataset, double train, double validation,
                                   double test, uint64_t seed, const char* splits_path) {
  return guard([&] {
    require(dataset && splits_path, "null argument");
    assign_splits(dataset->store.image_ids(), {train, validation, test}, seed).save(splits_path);
  });
}

sr_status sr_dataset_write_style_set(const sr_dataset* dataset, int clean, const char* out_path) {
  return guard([&] {
    require(dataset && out_path, "null argument");
    const auto& store = dataset->store;
    const auto spec = clean ? ValidationSetSpec::clean()
                            : ValidationSetSpec::all_labels(store.style_count());
    spec.validate(store.style_count(), store.expert_count());
    const auto set = build_style_set(store, spec);
    auto out = detail::open_output(out_path);
    out << style_set_to_json(store, set).dump() << '\n';
    detail::finish_output(out, out_path);
  });
}

sr_status sr_generate_comparisons(const sr_dataset* dataset, const char* splits_path,
                                  const char* split, int threshold, size_t count, uint64_t seed,
                                  const char* out_path, size_t* written) {
  return guard([&] {
    require(dataset && out_path, "null argument");
    const auto splits = splits_arg(splits_path);
    ComparisonConfig config{threshold, count, seed, split_arg(split)};
    const auto labels =
        sample_comparisons(dataset->store, splits ? &*splits : nullptr, config);
    save_comparisons(out_path, labels, dataset->store.styles());
    if (written) *written = labels.size();
  });
}

void sr_train_options_default(sr_train_options* options) {
  if (options == nullptr) return;
  const TrainConfig d;
  *options = {d.learning_rate,
              d.lambda,
              d.rmsprop_decay,
              d.rmsprop_epsilon,
              d.batch_size,
              d.max_epochs,
              d.early_stop_patience,
              d.mode == PredictionMode::LogitDifference ? 1 : 0,
              d.seed};
}

sr_status sr_train(const sr_dataset* dataset, const char* features_path,
                   const char* comparisons_path, const char* splits_path,
                   const sr_train_options* options, sr_epoch_callback on_epoch, void* user,
                   sr_head** out) {
  return guard([&] {
    require(dataset && features_path && comparisons_path && options && out, "null argument");
    const auto& store = dataset->store;
    const auto config = train_config(options, store.style_count());
    const auto features = FeatureTable::load(features_path);
    const auto comparisons = load_comparisons(comparisons_path, store.styles());
    std::vector<LabeledImage> validation;
    if (const auto splits = splits_arg(splits_path)) {
      validation = labeled_images(store, &*splits, Split::Validation, ValidationSetSpec::clean());
    }
    EpochCallback callback;
    if (on_epoch) {
      callback = [&](const EpochMetrics& m) {
        const auto line = metrics_line(m);
        const sr_epoch_metrics c{m.epoch, m.train_loss, m.val_acc ? 1 : 0,
                                 m.val_acc.value_or(std::nan("")), line.c_str()};
        on_epoch(&c, user);
      };
    }
    auto result = train(features, comparisons, config, validation, callback);
    *out = new sr_head{{std::move(result.head), config.seed, config}};
  });
}

sr_status sr_grid_search(const sr_dataset* dataset, const char* features_path,
                         const char* splits_path, const char* grid_path,
                         const sr_train_options* options, const char* report_path,
                         sr_head** best) {
  return guard([&] {
    require(dataset && features_path && splits_path && options, "null argument");
    const auto& store = dataset->store;
    const auto config = train_config(options, store.style_count());
    const auto features = FeatureTable::load(features_path);
    const auto splits = SplitAssignment::load(splits_path);
    GridSpec grid = GridSpec::default_ranges();
    if (grid_path != nullptr && *grid_path != '\0') {
      const auto doc = json::parse(detail::read_text(grid_path));
      grid.lambdas = doc.at("lambdas").get<std::vector<double>>();
      grid.thresholds = doc.at("thresholds").get<std::vector<int>>();
      grid.comparison_counts = doc.at("comparison_counts").get<std::vector<std::size_t>>();
    }
    auto result = grid_search(store, splits, features, grid, config);
    if (report_path != nullptr && *report_path != '\0') {
      auto out = detail::open_output(report_path);
      out << grid_to_json(result).dump(2) << '\n';
      detail::finish_output(out, report_path);
    }
    if (best) {
      TrainConfig chosen = config;
      chosen.lambda = result.cells[result.best].lambda;
      *best = new sr_head{{std::move(result.best_head), config.seed, chosen}};
    }
  });
}

sr_status sr_head_load(const char* path, sr_head** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = new sr_head{load_checkpoint(path)};
  });
}

sr_status sr_head_save(const sr_head* head, const char* path) {
  return guard([&] {
    require(head && path, "null argument");
    save_checkpoint(path, head->checkpoint);
  });
}

void sr_head_free(sr_head* head) { delete head; }

size_t sr_head_input_dim(const sr_head* head) {
  return head ? head->checkpoint.head.input_dim : 0;
}

sr_status sr_embed(const sr_head* head, const char* features_path, const char* embeddings_path) {
  return guard([&] {
    require(head && features_path && embeddings_path, "null argument");
    embed_all(head->checkpoint.head, FeatureTable::load(features_path)).save(embeddings_path);
  });
}

sr_status sr_evaluate(const sr_head* head, const sr_dataset* dataset, const char* features_path,
                      const char* splits_path, const char* split, const char* json_path,
                      const char* csv_path) {
  return guard([&] {
    require(head && dataset && features_path, "null argument");
    const auto splits = splits_arg(splits_path);
    const auto report = evaluate(head->checkpoint.head, dataset->store,
                                 splits ? &*splits : nullptr, split_arg(split),
                                 FeatureTable::load(features_path));
    if (json_path != nullptr && *json_path != '\0') {
      auto out = detail::open_output(json_path);
      out << report_to_json(report).dump(2) << '\n';
      detail::finish_output(out, json_path);
    }
    if (csv_path != nullptr && *csv_path != '\0') {
      auto out = detail::open_output(csv_path);
      out << report_to_csv(report);
      detail::finish_output(out, csv_path);
    }
  });
}

sr_status sr_index_build(const char* registry_path, const char* embeddings_path,
                         sr_index** out) {
  return guard([&] {
    require(registry_path && embeddings_path && out, "null argument");
    const auto registry = FurnitureRegistry::load(registry_path);
    const auto embeddings = FeatureTable::load(embeddings_path);
    *out = new sr_index{std::make_shared<const CompatibilityIndex>(
        CompatibilityIndex::build(registry, embeddings))};
  });
}

sr_status sr_index_load(const char* path, sr_index** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = new sr_index{std::make_shared<const CompatibilityIndex>(CompatibilityIndex::load(path))};
  });
}

sr_status sr_index_save(const sr_index* index, const char* path) {
  return guard([&] {
    require(index && path, "null argument");
    index->index->save(path);
  });
}

void sr_index_free(sr_index* index) { delete index; }

size_t sr_index_item_count(const sr_index* index) {
  return index ? index->index->items().size() : 0;
}

size_t sr_index_rankable_count(const sr_index* index) {
  return index ? index->index->rankable_count() : 0;
}

sr_status sr_index_check_registry(const sr_index* index, const char* registry_path) {
  return guard([&] {
    require(index && registry_path, "null argument");
    if (index->index->is_stale_for(FurnitureRegistry::load(registry_path))) {
      throw Error(ErrorCode::StaleIndex,
                  std::string("index was built from a different revision of ") + registry_path);
    }
  });
}

sr_status sr_rank_single(const sr_index* index, const char* seed_id, const char* class_name,
                         size_t k, sr_ranking** out) {
  return guard([&] {
    require(index && seed_id && class_name && out, "null argument");
    *out = new sr_ranking{rank_single_seed(*index->index, seed_id, class_name, k)};
  });
}

sr_status sr_rank_multi(const sr_index* index, const char* const* scene, size_t scene_size,
                        const char* class_name, size_t k, sr_ranking** out) {
  return guard([&] {
    require(index && class_name && out, "null argument");
    const auto ids = scene_arg(scene, scene_size);
    *out = new sr_ranking{rank_multi_seed(*index->index, ids, class_name, k)};
  });
}

sr_status sr_scene_energy(const sr_index* index, const char* const* scene, size_t scene_size,
                          double* energy) {
  return guard([&] {
    require(index && energy, "null argument");
    const auto ids = scene_arg(scene, scene_size);
    *energy = scene_energy(*index->index, ids);
  });
}

size_t sr_ranking_size(const sr_ranking* ranking) { return ranking ? ranking->items.size() : 0; }

const char* sr_ranking_id(const sr_ranking* ranking, size_t rank) {
  if (ranking == nullptr || rank >= ranking->items.size()) return nullptr;
  return ranking->items[rank].furniture_id.c_str();
}

double sr_ranking_distance(const sr_ranking* ranking, size_t rank) {
  if (ranking == nullptr || rank >= ranking->items.size()) return std::nan("");
  return ranking->items[rank].distance;
}

void sr_ranking_free(sr_ranking* ranking) { delete ranking; }

sr_status sr_service_create(const sr_index* index, const char* scenes_dir, sr_service** out) {
  return guard([&] {
    require(index && out, "null argument");
    std::optional<std::filesystem::path> dir;
    if (scenes_dir != nullptr && *scenes_dir != '\0') dir = scenes_dir;
    auto s = std::make_unique<sr_service>();
    s->service = std::make_unique<SuggestionService>(index->index, dir);
    *out = s.release();
  });
}

void sr_service_free(sr_service* service) {
  if (service == nullptr) return;
  if (service->server) service->server->stop();
  delete service;
}

sr_status sr_service_handle(sr_service* service, const char* method, const char* target,
                            const char* body, int* http_status, char** response) {
  return guard([&] {
    require(service && method && target && http_status && response, "null argument");
    const auto r = service->service->handle(method, target, body ? body : "");
    *http_status = r.status;
    *response = dup_string(r.body);
  });
}

sr_status sr_service_swap_index(sr_service* service, const sr_index* index,
                                uint64_t* generation) {
  return guard([&] {
    require(service && index, "null argument");
    const auto g = service->service->swap_index(index->index);
    if (generation) *generation = g;
  });
}

uint64_t sr_service_generation(const sr_service* service) {
  return service ? service->service->generation() : 0;
}

sr_status sr_service_bind(sr_service* service, const char* host, int port, int* bound_port) {
  return guard([&] {
    require(service && host, "null argument");
    require(!service->server, "service is already bound");
    auto server = std::make_unique<HttpServer>(*service->service);
    const int p = server->bind(host, port);
    service->server = std::move(server);
    if (bound_port) *bound_port = p;
  });
}

sr_status sr_service_run(sr_service* service) {
  return guard([&] {
    require(service && service->server, "bind before run");
    service->server->listen_after_bind();
  });
}

void sr_service_stop(sr_service* service) {
  if (service && service->server) service->server->stop();
}

}  // extern "C"
