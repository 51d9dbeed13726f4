#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stylerank/comparisons.hpp"
#include "stylerank/dataset.hpp"
#include "stylerank/features.hpp"
#include "stylerank/stylenet.hpp"
#include "stylerank/training.hpp"

namespace stylerank {

// argmax of the softmax output; ties go to the lowest style index.
StyleId classify(const StyleHead& head, std::span<const float> x);
StyleId argmax_style(std::span<const double> probs);

struct StyleAccuracy {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};

struct AccuracyReport {
  double accuracy = 0.0;        // over all images
  double macro_accuracy = 0.0;  // mean over styles with at least one image
  std::vector<StyleAccuracy> per_style;
};

// Throws InvalidArgument on an empty set, NotFound for missing features.
AccuracyReport classification_accuracy(const StyleHead& head, const FeatureTable& features,
                                       std::span<const LabeledImage> labeled);

// Fraction of comparisons whose predicted sign matches y (a zero prediction
// counts as wrong).
double pair_ordering_accuracy(const StyleHead& head, const FeatureTable& features,
                              std::span<const ComparisonLabel> comparisons,
                              PredictionMode mode = PredictionMode::Softmax);

struct Neighbor {
  std::size_t row = 0;
  double distance = 0.0;
};

// k nearest rows to `query_row` by Euclidean distance, query excluded, ties
// broken by id. Throws InvalidArgument when k < 1 or the table has fewer
// than two rows.
std::vector<Neighbor> retrieve_nearest(const FeatureTable& table, std::size_t query_row,
                                       std::size_t k);

// Binary relevance of one query's ranked list, plus how many relevant items
// exist in the corpus.
struct QueryRelevance {
  std::vector<bool> relevant;
  std::size_t total_relevant = 0;
};

using RetrievalRun = std::vector<QueryRelevance>;

// A cutoff of nullopt means the whole ranking. Queries without any relevant
// item are skipped by every metric.
//
// recall@k: share of queries with a relevant item in the top k.
// AP@k:     mean of precision@r over relevant ranks r <= k (0 if none).
// NDCG@k:   sum_{r<=k} rel_r / log2(r+1) divided by the same sum for the
//           ideal ordering of min(k, total_relevant) relevant items.
double recall_at_k(const RetrievalRun& run, std::size_t k);
double average_precision(const QueryRelevance& query, std::optional<std::size_t> cutoff = {});
double mean_average_precision(const RetrievalRun& run, std::optional<std::size_t> cutoff = {});
double ndcg(const QueryRelevance& query, std::optional<std::size_t> cutoff = {});
double mean_ndcg(const RetrievalRun& run, std::optional<std::size_t> cutoff = {});
std::size_t degenerate_queries(const RetrievalRun& run);

// Every labeled image queries the rest of the table; relevance is style match.
RetrievalRun build_retrieval_run(const FeatureTable& embeddings,
                                 std::span<const LabeledImage> labeled);

struct RetrievalSummary {
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double map = 0.0;
  double map_at_5 = 0.0;
  double ndcg = 0.0;
  double ndcg_at_5 = 0.0;
  std::size_t queries = 0;
  std::size_t excluded_queries = 0;
};

RetrievalSummary summarize_retrieval(const RetrievalRun& run);

// L x L matrix; cell (a, b) with a < b is 1 - |I n J| / |I u J| over the
// image sets with at least one label of each style. The diagonal and lower
// triangle are zero.
struct AgreementMatrix {
  std::size_t size = 0;
  std::vector<double> cells;

  double at(std::size_t a, std::size_t b) const { return cells[a * size + b]; }
};

// 1 when the union is empty.
double agreement_cell(std::size_t intersection, std::size_t union_size) noexcept;
AgreementMatrix expert_agreement_matrix(const AnnotationStore& store);

// Discrete-label baseline: one (image, style) sample per membership of the
// label set, trained with cross-entropy on the same optimizer and schedule.
TrainResult baseline_train_discrete(const FeatureTable& features,
                                    std::span<const StyleMembership> label_set,
                                    const AnnotationStore& store, const TrainConfig& config,
                                    const std::vector<LabeledImage>& validation = {});

// Embeds every row of `features` through the head.
FeatureTable embed_all(const StyleHead& head, const FeatureTable& features);

struct EvalReport {
  std::vector<std::string> style_names;
  AccuracyReport accuracy;
  RetrievalSummary retrieval;
  AgreementMatrix agreement;
  std::size_t test_images = 0;
};

// Scores the head on the given split's clean labels.
EvalReport evaluate(const StyleHead& head, const AnnotationStore& store,
                    const SplitAssignment* splits, std::optional<Split> split,
                    const FeatureTable& features,
                    const ValidationSetSpec& spec = ValidationSetSpec::clean());

nlohmann::json report_to_json(const EvalReport& report);
// metric,style,value rows.
std::string report_to_csv(const EvalReport& report);

}  // namespace stylerank
