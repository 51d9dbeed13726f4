#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace stylerank {

struct StyleId {
  std::uint32_t index = 0;

  auto operator<=>(const StyleId&) const = default;
};

// Ordered list of style names; position is the StyleId.
class StyleCatalog {
 public:
  // Modern=0, Traditional=1, Cottage=2, Coastal=3.
  static StyleCatalog standard();

  explicit StyleCatalog(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(StyleId style) const { return names_.at(style.index); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  // Case-insensitive lookup.
  std::optional<StyleId> find(std::string_view name) const;
  // Throws Parse naming the unknown style.
  StyleId parse(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

struct Annotation {
  std::string image_id;
  std::string expert_id;
  StyleId style;
};

// Per-image label counts materialized from expert annotations. Images are
// kept in lexicographic id order; the row index doubles as the image index.
class AnnotationStore {
 public:
  explicit AnnotationStore(StyleCatalog styles = StyleCatalog::standard());

  // Throws Duplicate when an (image, expert) pair repeats.
  static AnnotationStore from_annotations(std::span<const Annotation> rows,
                                          StyleCatalog styles = StyleCatalog::standard());
  // One JSON object per line: {"image_id", "expert_id", "style"}. Blank lines
  // are skipped. Errors carry the 1-based line number.
  static AnnotationStore ingest(std::istream& in,
                                StyleCatalog styles = StyleCatalog::standard());
  static AnnotationStore load(const std::filesystem::path& path,
                              StyleCatalog styles = StyleCatalog::standard());

  const StyleCatalog& styles() const noexcept { return styles_; }
  std::size_t style_count() const noexcept { return styles_.size(); }
  std::size_t image_count() const noexcept { return image_ids_.size(); }
  std::size_t expert_count() const noexcept { return expert_count_; }
  std::size_t annotation_count() const noexcept { return annotation_count_; }
  bool empty() const noexcept { return image_ids_.empty(); }

  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const std::string& image_id(std::size_t image) const { return image_ids_[image]; }
  std::optional<std::size_t> find(std::string_view image_id) const;

  std::span<const int> counts(std::size_t image) const {
    return {counts_.data() + image * style_count(), style_count()};
  }
  int count(std::size_t image, StyleId style) const {
    return counts_[image * style_count() + style.index];
  }

 private:
  StyleCatalog styles_;
  std::vector<std::string> image_ids_;
  std::vector<int> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t expert_count_ = 0;
  std::size_t annotation_count_ = 0;
};

enum class Split : std::uint8_t { Train, Validation, Test };

const char* split_name(Split split) noexcept;
std::optional<Split> parse_split(std::string_view name);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

class SplitAssignment {
 public:
  SplitAssignment() = default;

  std::size_t size() const noexcept { return ids_.size(); }
  std::optional<Split> split_of(std::string_view image_id) const;
  std::vector<std::string> members(Split split) const;
  std::array<std::size_t, 3> sizes() const;

  nlohmann::json to_json() const;
  static SplitAssignment from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static SplitAssignment load(const std::filesystem::path& path);

  bool operator==(const SplitAssignment& other) const {
    return ids_ == other.ids_ && splits_ == other.splits_;
  }

 private:
  friend SplitAssignment assign_splits(std::span<const std::string>, SplitFractions,
                                       std::uint64_t);
  std::vector<std::string> ids_;  // sorted
  std::vector<Split> splits_;
  std::uint64_t seed_ = 0;
  SplitFractions fractions_;
};

// Sorts the ids, shuffles them with the seed and cuts the shuffled order into
// round(train*n), round(validation*n) and the remainder. Throws
// InvalidArgument when fractions do not sum to 1 or there are fewer images
// than non-empty splits.
SplitAssignment assign_splits(std::span<const std::string> image_ids, SplitFractions fractions,
                              std::uint64_t seed);

struct ValidationSetSpec {
  std::vector<int> l_min;
  // Keep only the strict argmax-count style per image (ties drop the image).
  bool single_label = false;

  static ValidationSetSpec all_labels(std::size_t style_count);
  // Clean thresholds for the standard catalog: Modern 10, Traditional 8,
  // Cottage 7, Coastal 7.
  static ValidationSetSpec clean();

  // Throws InvalidArgument unless l_min has one entry per style, each in
  // [1, expert_count].
  void validate(std::size_t style_count, std::size_t expert_count) const;
};

struct StyleMembership {
  std::size_t image = 0;
  StyleId style;

  auto operator<=>(const StyleMembership&) const = default;
};

// (image, style) memberships ordered by image then style.
std::vector<StyleMembership> build_style_set(const AnnotationStore& store,
                                             const ValidationSetSpec& spec);

nlohmann::json style_set_to_json(const AnnotationStore& store,
                                 std::span<const StyleMembership> set);

}  // namespace stylerank
