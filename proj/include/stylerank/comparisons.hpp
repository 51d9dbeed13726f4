#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stylerank/dataset.hpp"

namespace stylerank {

// Relative-order label between two images for one style. Stored once per
// unordered pair with i < j lexicographically; y = +1 means i carries more
// labels of the style than j by more than the threshold.
struct ComparisonLabel {
  std::string i;
  std::string j;
  StyleId style;
  int y = 0;

  auto operator<=>(const ComparisonLabel&) const = default;
};

struct ComparisonConfig {
  int threshold = 3;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  // Restrict both endpoints to one split; nullopt uses every image.
  std::optional<Split> split;

  void validate() const;
};

inline constexpr std::size_t kDefaultOracleCap = 1000;
inline constexpr std::size_t kRejectionRetryFactor = 1000;

// Signed label for a pair of label counts, or nullopt when the pair is
// discarded: either image lacks a label for the style, or the count gap does
// not strictly exceed the threshold.
std::optional<int> eligible_pair(int count_i, int count_j, int threshold) noexcept;

// Number of eligible unordered pairs per style, computed from count
// histograms without touching pairs.
std::vector<std::uint64_t> eligible_population(const AnnotationStore& store,
                                               const SplitAssignment* splits,
                                               std::optional<Split> split, int threshold);

// Uniform sample without replacement of min(count, |population|) labels.
// Sorted by (style, i, j). Throws EmptyPopulation when nothing is eligible.
std::vector<ComparisonLabel> sample_comparisons(const AnnotationStore& store,
                                                const SplitAssignment* splits,
                                                const ComparisonConfig& config);

// Brute-force enumeration over all image pairs; the test oracle for
// sample_comparisons. A nullopt style enumerates every style. Throws
// InvalidArgument when the selected image count exceeds the cap.
std::vector<ComparisonLabel> enumerate_comparisons(const AnnotationStore& store,
                                                   const SplitAssignment* splits,
                                                   std::optional<StyleId> style, int threshold,
                                                   std::optional<Split> split,
                                                   std::size_t cap = kDefaultOracleCap);

// JSON Lines: {"i": str, "j": str, "style": str, "y": int}.
void write_comparisons(std::ostream& out, const std::vector<ComparisonLabel>& labels,
                       const StyleCatalog& styles);
void save_comparisons(const std::filesystem::path& path,
                      const std::vector<ComparisonLabel>& labels, const StyleCatalog& styles);
std::vector<ComparisonLabel> read_comparisons(std::istream& in, const StyleCatalog& styles);
std::vector<ComparisonLabel> load_comparisons(const std::filesystem::path& path,
                                              const StyleCatalog& styles);

}  // namespace stylerank
