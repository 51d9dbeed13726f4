#include "stylerank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stylerank/compat.hpp"
#include "stylerank/error.hpp"

namespace stylerank {

StyleId argmax_style(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t l = 1; l < probs.size(); ++l) {
    if (probs[l] > probs[best]) best = l;
  }
  return StyleId{static_cast<std::uint32_t>(best)};
}

StyleId classify(const StyleHead& head, std::span<const float> x) {
  return argmax_style(forward(head, x).probs);
}

AccuracyReport classification_accuracy(const StyleHead& head, const FeatureTable& features,
                                       std::span<const LabeledImage> labeled) {
  if (labeled.empty()) throw Error(ErrorCode::InvalidArgument, "accuracy over an empty set");
  AccuracyReport report;
  report.per_style.resize(head.style_count);
  std::size_t correct = 0;
  for (const auto& item : labeled) {
    const bool hit = classify(head, features.at(item.image_id)) == item.style;
    auto& bucket = report.per_style.at(item.style.index);
    ++bucket.total;
    if (hit) {
      ++bucket.correct;
      ++correct;
    }
  }
  report.accuracy = double(correct) / double(labeled.size());
  double macro = 0.0;
  std::size_t present = 0;
  for (const auto& s : report.per_style) {
    if (s.total == 0) continue;
    macro += s.accuracy();
    ++present;
  }
  report.macro_accuracy = present == 0 ? 0.0 : macro / double(present);
  return report;
}

double pair_ordering_accuracy(const StyleHead& head, const FeatureTable& features,
                              std::span<const ComparisonLabel> comparisons,
                              PredictionMode mode) {
  if (comparisons.empty()) throw Error(ErrorCode::InvalidArgument, "no comparisons to score");
  std::size_t correct = 0;
  for (const auto& c : comparisons) {
    const double y_hat = comparison_predict(head, features.at(c.i), features.at(c.j), c.style, mode);
    if ((c.y > 0 && y_hat > 0.0) || (c.y < 0 && y_hat < 0.0)) ++correct;
  }
  return double(correct) / double(comparisons.size());
}

std::vector<Neighbor> retrieve_nearest(const FeatureTable& table, std::size_t query_row,
                                       std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (table.size() < 2) throw Error(ErrorCode::InvalidArgument, "retrieval needs two or more rows");
  if (query_row >= table.size()) throw Error(ErrorCode::NotFound, "query row out of range");
  std::vector<Neighbor> all;
  all.reserve(table.size() - 1);
  const auto q = table.row(query_row);
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (r == query_row) continue;
    all.push_back({r, embedding_distance(q, table.row(r))});
  }
  const auto less = [&](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return table.id(a.row) < table.id(b.row);
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
  all.resize(k);
  return all;
}

double recall_at_k(const RetrievalRun& run, std::size_t k) {
  std::size_t hits = 0;
  std::size_t queries = 0;
  for (const auto& q : run) {
    if (q.total_relevant == 0) continue;
    ++queries;
    const std::size_t end = std::min(k, q.relevant.size());
    if (std::find(q.relevant.begin(), q.relevant.begin() + static_cast<std::ptrdiff_t>(end), true) !=
        q.relevant.begin() + static_cast<std::ptrdiff_t>(end)) {
      ++hits;
    }
  }
  return queries == 0 ? 0.0 : double(hits) / double(queries);
}

double average_precision(const QueryRelevance& query, std::optional<std::size_t> cutoff) {
  const std::size_t end = std::min(cutoff.value_or(query.relevant.size()), query.relevant.size());
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < end; ++r) {
    if (!query.relevant[r]) continue;
    ++found;
    sum += double(found) / double(r + 1);
  }
  return found == 0 ? 0.0 : sum / double(found);
}

double mean_average_precision(const RetrievalRun& run, std::optional<std::size_t> cutoff) {
  double sum = 0.0;
  std::size_t queries = 0;
  for (const auto& q : run) {
    if (q.total_relevant == 0) continue;
    ++queries;
    sum += average_precision(q, cutoff);
  }
  return queries == 0 ? 0.0 : sum / double(queries);
}

double ndcg(const QueryRelevance& query, std::optional<std::size_t> cutoff) {
  const std::size_t end = std::min(cutoff.value_or(query.relevant.size()), query.relevant.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < end; ++r) {
    if (query.relevant[r]) dcg += 1.0 / std::log2(double(r + 2));
  }
  const std::size_t ideal = std::min(cutoff.value_or(query.total_relevant), query.total_relevant);
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(double(r + 2));
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double mean_ndcg(const RetrievalRun& run, std::optional<std::size_t> cutoff) {
  double sum = 0.0;
  std::size_t queries = 0;
  for (const auto& q : run) {
    if (q.total_relevant == 0) continue;
    ++queries;
    sum += ndcg(q, cutoff);
  }
  return queries == 0 ? 0.0 : sum / double(queries);
}

std::size_t degenerate_queries(const RetrievalRun& run) {
  return static_cast<std::size_t>(
      std::count_if(run.begin(), run.end(), [](const auto& q) { return q.total_relevant == 0; }));
}

RetrievalRun build_retrieval_run(const FeatureTable& embeddings,
                                 std::span<const LabeledImage> labeled) {
  FeatureTable corpus(embeddings.dim());
  std::vector<StyleId> styles;
  for (const auto& item : labeled) {
    corpus.add(item.image_id, embeddings.at(item.image_id));
    styles.push_back(item.style);
  }
  RetrievalRun run;
  if (corpus.size() < 2) return run;
  for (std::size_t q = 0; q < corpus.size(); ++q) {
    QueryRelevance rel;
    for (const auto& n : retrieve_nearest(corpus, q, corpus.size() - 1)) {
      rel.relevant.push_back(styles[n.row] == styles[q]);
    }
    rel.total_relevant = static_cast<std::size_t>(
        std::count(rel.relevant.begin(), rel.relevant.end(), true));
    run.push_back(std::move(rel));
  }
  return run;
}

RetrievalSummary summarize_retrieval(const RetrievalRun& run) {
  RetrievalSummary s;
  s.recall_at_1 = recall_at_k(run, 1);
  s.recall_at_5 = recall_at_k(run, 5);
  s.map = mean_average_precision(run);
  s.map_at_5 = mean_average_precision(run, 5);
  s.ndcg = mean_ndcg(run);
  s.ndcg_at_5 = mean_ndcg(run, 5);
  s.excluded_queries = degenerate_queries(run);
  s.queries = run.size() - s.excluded_queries;
  return s;
}

double agreement_cell(std::size_t intersection, std::size_t union_size) noexcept {
  if (union_size == 0) return 1.0;
  return 1.0 - double(intersection) / double(union_size);
}

AgreementMatrix expert_agreement_matrix(const AnnotationStore& store) {
  const std::size_t L = store.style_count();
  AgreementMatrix m{L, std::vector<double>(L * L, 0.0)};
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = a + 1; b < L; ++b) {
      std::size_t both = 0;
      std::size_t either = 0;
      for (std::size_t i = 0; i < store.image_count(); ++i) {
        const bool in_a = store.counts(i)[a] > 0;
        const bool in_b = store.counts(i)[b] > 0;
        both += in_a && in_b;
        either += in_a || in_b;
      }
      m.cells[a * L + b] = agreement_cell(both, either);
    }
  }
  return m;
}

TrainResult baseline_train_discrete(const FeatureTable& features,
                                    std::span<const StyleMembership> label_set,
                                    const AnnotationStore& store, const TrainConfig& config,
                                    const std::vector<LabeledImage>& validation) {
  if (label_set.empty()) throw Error(ErrorCode::InvalidArgument, "baseline label set is empty");
  std::vector<LabeledImage> labels;
  labels.reserve(label_set.size());
  for (const auto& m : label_set) labels.push_back({store.image_id(m.image), m.style});
  return train_discrete(features, labels, config, validation);
}

FeatureTable embed_all(const StyleHead& head, const FeatureTable& features) {
  FeatureTable out(kEmbeddingDim);
  std::array<float, kEmbeddingDim> buffer{};
  for (std::size_t r = 0; r < features.size(); ++r) {
    const auto e = extract_embedding(head, features.row(r));
    for (std::size_t h = 0; h < kEmbeddingDim; ++h) buffer[h] = static_cast<float>(e[h]);
    out.add(features.id(r), buffer);
  }
  return out;
}

EvalReport evaluate(const StyleHead& head, const AnnotationStore& store,
                    const SplitAssignment* splits, std::optional<Split> split,
                    const FeatureTable& features, const ValidationSetSpec& spec) {
  const auto labeled = labeled_images(store, splits, split, spec);
  EvalReport report;
  report.style_names = store.styles().names();
  report.test_images = labeled.size();
  report.accuracy = classification_accuracy(head, features, labeled);

  FeatureTable embeddings(kEmbeddingDim);
  std::array<float, kEmbeddingDim> buffer{};
  for (const auto& item : labeled) {
    const auto e = extract_embedding(head, features.at(item.image_id));
    for (std::size_t h = 0; h < kEmbeddingDim; ++h) buffer[h] = static_cast<float>(e[h]);
    embeddings.add(item.image_id, buffer);
  }
  report.retrieval = summarize_retrieval(build_retrieval_run(embeddings, labeled));
  report.agreement = expert_agreement_matrix(store);
  return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json per_style = nlohmann::json::object();
  for (std::size_t l = 0; l < report.style_names.size(); ++l) {
    const auto& s = report.accuracy.per_style.at(l);
    per_style[report.style_names[l]] = {
        {"images", s.total}, {"correct", s.correct}, {"accuracy", s.accuracy()}};
  }
  nlohmann::json agreement = nlohmann::json::array();
  for (std::size_t a = 0; a < report.agreement.size; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t b = 0; b < report.agreement.size; ++b) row.push_back(report.agreement.at(a, b));
    agreement.push_back(std::move(row));
  }
  const auto& r = report.retrieval;
  return {{"styles", report.style_names},
          {"test_images", report.test_images},
          {"accuracy",
           {{"overall", report.accuracy.accuracy},
            {"macro", report.accuracy.macro_accuracy},
            {"per_style", per_style}}},
          {"retrieval",
           {{"queries", r.queries},
            {"excluded_queries", r.excluded_queries},
            {"recall_at_1", r.recall_at_1},
            {"recall_at_5", r.recall_at_5},
            {"map", r.map},
            {"map_at_5", r.map_at_5},
            {"ndcg", r.ndcg},
            {"ndcg_at_5", r.ndcg_at_5}}},
          {"agreement", agreement}};
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,style,value\n";
  out << "accuracy,all," << report.accuracy.accuracy << '\n';
  out << "accuracy,macro," << report.accuracy.macro_accuracy << '\n';
  for (std::size_t l = 0; l < report.style_names.size(); ++l) {
    out << "accuracy," << report.style_names[l] << ',' << report.accuracy.per_style.at(l).accuracy()
        << '\n';
  }
  const auto& r = report.retrieval;
  out << "recall_at_1,all," << r.recall_at_1 << '\n';
  out << "recall_at_5,all," << r.recall_at_5 << '\n';
  out << "map,all," << r.map << '\n';
  out << "map_at_5,all," << r.map_at_5 << '\n';
  out << "ndcg,all," << r.ndcg << '\n';
  out << "ndcg_at_5,all," << r.ndcg_at_5 << '\n';
  for (std::size_t a = 0; a < report.agreement.size; ++a) {
    for (std::size_t b = a + 1; b < report.agreement.size; ++b) {
      out << "agreement," << report.style_names[a] << '-' << report.style_names[b] << ','
          << report.agreement.at(a, b) << '\n';
    }
  }
  return out.str();
}

}  // namespace stylerank
