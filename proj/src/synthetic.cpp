#include "stylerank/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stylerank/error.hpp"
#include "stylerank/rng.hpp"

namespace stylerank {

namespace {

std::string numbered(std::string_view prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return std::string(prefix) + buf;
}

std::size_t sample_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace

const std::vector<std::string>& default_furniture_classes() {
  static const std::vector<std::string> classes = {
      "accent_chair", "sofa",        "sectional",    "end_table",   "coffee_table",
      "bed",          "dresser",     "bookcase",     "lamp",        "dining_table",
      "dining_chair", "ottoman",     "tv_stand",     "chest",       "nightstand",
      "bench",        "desk",        "office_chair", "console",     "bar_stool"};
  return classes;
}

SyntheticCorpus generate_corpus(const SyntheticCorpusConfig& config) {
  std::vector<double> prior = config.style_prior;
  if (prior.empty()) prior.assign(4, 1.0);
  const std::size_t L = prior.size();
  if (L < 2) throw Error(ErrorCode::InvalidArgument, "need at least two styles");
  if (config.image_count == 0 || config.expert_count == 0 || config.feature_dim < L) {
    throw Error(ErrorCode::InvalidArgument, "synthetic corpus needs images, experts and d >= L");
  }

  Rng rng(config.seed);
  const std::size_t d = config.feature_dim;

  std::vector<double> projection(d * L);
  for (auto& v : projection) v = rng.normal();

  std::vector<std::size_t> expert_lean(config.expert_count);
  for (std::size_t e = 0; e < config.expert_count; ++e) expert_lean[e] = e % L;

  SyntheticCorpus corpus;
  corpus.features = FeatureTable(d);
  std::vector<float> x(d);
  std::vector<double> logits(L);
  std::vector<double> score(L);
  for (std::size_t i = 0; i < config.image_count; ++i) {
    const std::string id = numbered("img", i, 6);
    const std::size_t dominant = sample_categorical(rng, prior);

    double top = -1e300;
    for (std::size_t l = 0; l < L; ++l) {
      logits[l] = config.mixture_spread * rng.normal() + (l == dominant ? config.dominance : 0.0);
      top = std::max(top, logits[l]);
    }
    std::vector<double> mixture(L);
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) total += mixture[l] = std::exp(logits[l] - top);
    for (auto& m : mixture) m /= total;

    for (std::size_t e = 0; e < config.expert_count; ++e) {
      for (std::size_t l = 0; l < L; ++l) {
        score[l] = mixture[l] + config.expert_noise * rng.normal() +
                   (l == expert_lean[e] ? config.expert_bias : 0.0);
      }
      const auto label = static_cast<std::uint32_t>(
          std::max_element(score.begin(), score.end()) - score.begin());
      corpus.annotations.push_back({id, numbered("expert", e + 1, 2), StyleId{label}});
    }

    for (std::size_t k = 0; k < d; ++k) {
      double v = config.feature_noise * rng.normal();
      if (config.separable) {
        if (k == dominant) v += 1.0;
      } else {
        for (std::size_t l = 0; l < L; ++l) v += projection[k * L + l] * mixture[l];
      }
      x[k] = static_cast<float>(v);
    }
    corpus.features.add(id, x);
    corpus.image_ids.push_back(id);
    corpus.mixtures.push_back(std::move(mixture));
    corpus.dominant.push_back(StyleId{static_cast<std::uint32_t>(dominant)});
  }
  return corpus;
}

SyntheticCatalog generate_catalog(const SyntheticCatalogConfig& config) {
  const auto& classes = config.classes.empty() ? default_furniture_classes() : config.classes;
  if (config.max_images_per_item < 1 || config.style_clusters < 1) {
    throw Error(ErrorCode::InvalidArgument, "catalog needs >= 1 image per item and >= 1 cluster");
  }
  Rng rng(config.seed);

  std::vector<std::array<double, 16>> centers(config.style_clusters);
  for (auto& c : centers) {
    for (auto& v : c) v = std::abs(rng.normal()) * 2.0;
  }

  SyntheticCatalog catalog;
  catalog.embeddings = FeatureTable(16);
  std::array<float, 16> e{};
  for (std::size_t i = 0; i < config.item_count; ++i) {
    const auto& cls = classes[i % classes.size()];
    FurnitureItem item;
    item.id = numbered(cls + "_", i / classes.size(), 1);
    item.class_name = cls;
    item.thumbnail = "thumbs/" + item.id + ".png";
    const auto& center = centers[rng.uniform_index(centers.size())];
    const std::size_t n_images = 1 + rng.uniform_index(config.max_images_per_item);
    for (std::size_t k = 0; k < n_images; ++k) {
      const std::string image = item.id + "_img" + std::to_string(k);
      for (std::size_t h = 0; h < 16; ++h) {
        e[h] = static_cast<float>(std::max(0.0, center[h] + 0.5 * rng.normal()));
      }
      catalog.embeddings.add(image, e);
      item.image_ids.push_back(image);
    }
    const bool similar = rng.uniform() < config.similar_fraction;
    const auto fallback = rng.uniform() < 0.5 ? ValidationStatus::NotSimilar : ValidationStatus::Unknown;
    catalog.registry.add_item(item);
    for (const auto& image : item.image_ids) {
      catalog.registry.record_validation(image, item.id,
                                         similar ? ValidationStatus::Similar : fallback);
    }
  }
  return catalog;
}

}  // namespace stylerank
