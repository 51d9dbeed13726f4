#ifndef STYLERANK_STYLERANK_H
#define STYLERANK_STYLERANK_H

#include <stddef.h>
#include <stdint.h>

#if defined(STYLERANK_BUILDING)
#define SR_API __attribute__((visibility("default")))
#else
#define SR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sr_status {
  SR_OK = 0,
  SR_INVALID_ARGUMENT = 1,
  SR_PARSE = 2,
  SR_IO = 3,
  SR_NOT_FOUND = 4,
  SR_DUPLICATE = 5,
  SR_UNRANKABLE = 6,
  SR_FORMAT_VERSION = 7,
  SR_STALE_INDEX = 8,
  SR_GENERATION_MISMATCH = 9,
  SR_EMPTY_POPULATION = 10,
  SR_DIVERGED = 11,
  SR_INTERNAL = 12
} sr_status;

/* Stable snake_case name, e.g. "not_found". */
SR_API const char* sr_status_name(sr_status status);
/* Message of the last failure on the calling thread; "" after success. */
SR_API const char* sr_last_error_message(void);
SR_API const char* sr_version(void);

/* Strings returned through char** are owned by the caller. */
SR_API void sr_string_free(char* s);

typedef struct sr_dataset sr_dataset;
typedef struct sr_head sr_head;
typedef struct sr_index sr_index;
typedef struct sr_ranking sr_ranking;
typedef struct sr_service sr_service;

/* ---- synthetic data ---- */

typedef struct sr_synth_options {
  size_t image_count;
  size_t expert_count;
  size_t feature_dim;
  double dominance;
  double mixture_spread;
  double expert_noise;
  double feature_noise;
  double expert_bias;
  int separable;
  uint64_t seed;
} sr_synth_options;

SR_API void sr_synth_options_default(sr_synth_options* options);
/* Writes annotations (JSONL) and features (binary). */
SR_API sr_status sr_synth_corpus(const sr_synth_options* options, const char* annotations_path,
                                 const char* features_path);
/* Writes a furniture registry (JSON) and a 16-d image embedding table. */
SR_API sr_status sr_synth_catalog(size_t item_count, size_t max_images_per_item,
                                  double similar_fraction, uint64_t seed,
                                  const char* registry_path, const char* embeddings_path);

/* ---- annotations ---- */

SR_API sr_status sr_dataset_load(const char* annotations_path, sr_dataset** out);
SR_API void sr_dataset_free(sr_dataset* dataset);
SR_API size_t sr_dataset_image_count(const sr_dataset* dataset);
SR_API size_t sr_dataset_expert_count(const sr_dataset* dataset);
/* JSON object with image, expert, annotation and per-style counts. */
SR_API sr_status sr_dataset_summary(const sr_dataset* dataset, char** json_out);
SR_API sr_status sr_dataset_assign_splits(const sr_dataset* dataset, double train,
                                          double validation, double test, uint64_t seed,
                                          const char* splits_path);
/* clean != 0 uses the high-agreement single-label thresholds. */
SR_API sr_status sr_dataset_write_style_set(const sr_dataset* dataset, int clean,
                                            const char* out_path);

/* split may be NULL (all images) or "train" / "validation" / "test";
 * splits_path is required when split is set. */
SR_API sr_status sr_generate_comparisons(const sr_dataset* dataset, const char* splits_path,
                                         const char* split, int threshold, size_t count,
                                         uint64_t seed, const char* out_path,
                                         size_t* written);

/* ---- training ---- */

typedef struct sr_train_options {
  double learning_rate;
  double lambda;
  double rmsprop_decay;
  double rmsprop_epsilon;
  size_t batch_size;
  size_t max_epochs;
  size_t early_stop_patience;
  int logit_difference;
  uint64_t seed;
} sr_train_options;

typedef struct sr_epoch_metrics {
  size_t epoch;
  double train_loss;
  int has_val_acc;
  double val_acc;
  const char* line; /* one JSON object, valid during the callback only */
} sr_epoch_metrics;

typedef void (*sr_epoch_callback)(const sr_epoch_metrics* metrics, void* user);

SR_API void sr_train_options_default(sr_train_options* options);

/* Validation uses the clean style set of the validation split when
 * splits_path is given; otherwise every epoch is kept. */
SR_API sr_status sr_train(const sr_dataset* dataset, const char* features_path,
                          const char* comparisons_path, const char* splits_path,
                          const sr_train_options* options, sr_epoch_callback on_epoch,
                          void* user, sr_head** out);

/* grid_path may be NULL for the default ranges. report_path receives every
 * cell and the selection. */
SR_API sr_status sr_grid_search(const sr_dataset* dataset, const char* features_path,
                                const char* splits_path, const char* grid_path,
                                const sr_train_options* options, const char* report_path,
                                sr_head** best);

SR_API sr_status sr_head_load(const char* path, sr_head** out);
SR_API sr_status sr_head_save(const sr_head* head, const char* path);
SR_API void sr_head_free(sr_head* head);
SR_API size_t sr_head_input_dim(const sr_head* head);

/* Writes the 16-d embedding of every feature row. */
SR_API sr_status sr_embed(const sr_head* head, const char* features_path,
                          const char* embeddings_path);

/* split may be NULL to evaluate every clean image. Either output may be NULL. */
SR_API sr_status sr_evaluate(const sr_head* head, const sr_dataset* dataset,
                             const char* features_path, const char* splits_path,
                             const char* split, const char* json_path, const char* csv_path);

/* ---- compatibility index ---- */

SR_API sr_status sr_index_build(const char* registry_path, const char* embeddings_path,
                                sr_index** out);
SR_API sr_status sr_index_load(const char* path, sr_index** out);
/* Also writes <path>.json. */
SR_API sr_status sr_index_save(const sr_index* index, const char* path);
SR_API void sr_index_free(sr_index* index);
SR_API size_t sr_index_item_count(const sr_index* index);
SR_API size_t sr_index_rankable_count(const sr_index* index);
/* SR_STALE_INDEX when the registry changed since the index was built. */
SR_API sr_status sr_index_check_registry(const sr_index* index, const char* registry_path);

SR_API sr_status sr_rank_single(const sr_index* index, const char* seed_id,
                                const char* class_name, size_t k, sr_ranking** out);
SR_API sr_status sr_rank_multi(const sr_index* index, const char* const* scene,
                               size_t scene_size, const char* class_name, size_t k,
                               sr_ranking** out);
SR_API sr_status sr_scene_energy(const sr_index* index, const char* const* scene,
                                 size_t scene_size, double* energy);

SR_API size_t sr_ranking_size(const sr_ranking* ranking);
SR_API const char* sr_ranking_id(const sr_ranking* ranking, size_t rank);
SR_API double sr_ranking_distance(const sr_ranking* ranking, size_t rank);
SR_API void sr_ranking_free(sr_ranking* ranking);

/* ---- suggestion service ---- */

/* The service shares the index; the handle may be freed afterwards.
 * scenes_dir may be NULL to keep saved scenes in memory. */
SR_API sr_status sr_service_create(const sr_index* index, const char* scenes_dir,
                                   sr_service** out);
SR_API void sr_service_free(sr_service* service);
SR_API sr_status sr_service_handle(sr_service* service, const char* method, const char* target,
                                   const char* body, int* http_status, char** response);
SR_API sr_status sr_service_swap_index(sr_service* service, const sr_index* index,
                                       uint64_t* generation);
SR_API uint64_t sr_service_generation(const sr_service* service);
/* Port 0 picks a free port. */
SR_API sr_status sr_service_bind(sr_service* service, const char* host, int port,
                                 int* bound_port);
/* Blocks until sr_service_stop() is called from another thread. */
SR_API sr_status sr_service_run(sr_service* service);
SR_API void sr_service_stop(sr_service* service);

#ifdef __cplusplus
}
#endif

#endif
