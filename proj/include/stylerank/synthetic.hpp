#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stylerank/compat.hpp"
#include "stylerank/dataset.hpp"
#include "stylerank/features.hpp"

namespace stylerank {

// Stand-in for a real annotated image collection. Each image gets a latent
// style mixture; experts label it by a noisy argmax of the mixture; features
// are a fixed random projection of the mixture plus Gaussian noise.
struct SyntheticCorpusConfig {
  std::size_t image_count = 2000;
  std::size_t expert_count = 10;
  std::size_t feature_dim = 512;
  // Prior over the dominant style; empty means uniform over four styles.
  std::vector<double> style_prior;
  // Logit boost of the dominant style before the softmax that forms the
  // mixture; larger is purer.
  double dominance = 3.0;
  // Spread of the per-image logit jitter.
  double mixture_spread = 1.0;
  // Std-dev of the per-expert Gaussian added to the mixture before argmax.
  double expert_noise = 0.1;
  double feature_noise = 0.1;
  // Each expert leans toward one style by this amount (0 = unbiased).
  double expert_bias = 0.0;
  // Features become one-hot(dominant style) + noise (padded to feature_dim)
  // and the mixture is ignored for feature construction.
  bool separable = false;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<Annotation> annotations;
  FeatureTable features;
  std::vector<std::string> image_ids;
  std::vector<std::vector<double>> mixtures;  // aligned with image_ids
  std::vector<StyleId> dominant;
};

SyntheticCorpus generate_corpus(const SyntheticCorpusConfig& config);

// Furniture catalog with clustered 16-dim image embeddings.
struct SyntheticCatalogConfig {
  std::size_t item_count = 1148;
  std::vector<std::string> classes;  // empty: a built-in list of 20
  std::size_t max_images_per_item = 4;
  double similar_fraction = 1.0;  // share of items whose images are Similar
  std::size_t style_clusters = 4;
  std::uint64_t seed = 0;
};

struct SyntheticCatalog {
  FurnitureRegistry registry;
  FeatureTable embeddings;
};

SyntheticCatalog generate_catalog(const SyntheticCatalogConfig& config);

const std::vector<std::string>& default_furniture_classes();

}  // namespace stylerank
