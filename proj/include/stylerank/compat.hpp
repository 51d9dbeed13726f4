#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stylerank/features.hpp"

namespace stylerank {

enum class ValidationStatus : std::uint8_t { Similar, NotSimilar, Unknown };

const char* validation_status_name(ValidationStatus status) noexcept;
std::optional<ValidationStatus> parse_validation_status(std::string_view name);

struct FurnitureItem {
  std::string id;
  std::string class_name;
  std::vector<std::string> image_ids;
  std::optional<std::string> thumbnail;
};

struct ValidationYield {
  std::size_t rankable = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : double(rankable) / double(total); }
};

// Furniture catalog plus per-(image, furniture) visual validation status.
class FurnitureRegistry {
 public:
  // Throws Duplicate on a repeated furniture id.
  void add_item(FurnitureItem item);

  const std::vector<FurnitureItem>& items() const noexcept { return items_; }
  const FurnitureItem* find(std::string_view furniture_id) const;

  // Unknown when never recorded.
  ValidationStatus status(std::string_view image_id, std::string_view furniture_id) const;
  // Last write wins. Throws NotFound unless the image belongs to the item.
  void record_validation(std::string_view image_id, std::string_view furniture_id,
                         ValidationStatus status);

  // Images with status Similar, in the item's image order.
  std::vector<std::string> validated_images(const FurnitureItem& item) const;
  bool rankable(const FurnitureItem& item) const;
  ValidationYield validation_yield() const;

  // Bumped on every mutation.
  std::uint64_t revision() const noexcept { return revision_; }
  // FNV-1a over the canonical JSON form; an index built from this registry
  // carries the same value.
  std::uint64_t fingerprint() const;

  // {furniture: [{id, class, images[], thumbnail}],
  //  validations: [{image, furniture, status}]}
  nlohmann::json to_json() const;
  static FurnitureRegistry from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static FurnitureRegistry load(const std::filesystem::path& path);

 private:
  std::vector<FurnitureItem> items_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::pair<std::string, std::string>, ValidationStatus> validations_;
  std::uint64_t revision_ = 0;
};

// Euclidean distance. Throws InvalidArgument on a length mismatch.
double embedding_distance(std::span<const float> a, std::span<const float> b);

// Minimum embedding distance over all cross pairs of the two image sets.
// Throws Unrankable when either set is empty, NotFound for a missing
// embedding.
double furniture_distance(const FeatureTable& embeddings, std::span<const std::string> images_a,
                          std::span<const std::string> images_b);

// Precomputed pairwise furniture distances over rankable items. Distances
// are stored as a packed f32 upper triangle without the diagonal.
class CompatibilityIndex {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Item {
    std::string id;
    std::string class_name;
    std::optional<std::string> thumbnail;
    std::vector<std::string> validated_images;
    std::optional<std::size_t> slot;  // position in the distance matrix
  };

  // Throws NotFound when a Similar image has no embedding.
  static CompatibilityIndex build(const FurnitureRegistry& registry,
                                  const FeatureTable& embeddings);

  const std::vector<Item>& items() const noexcept { return items_; }
  std::size_t rankable_count() const noexcept { return slots_.size(); }
  const Item* find(std::string_view furniture_id) const;
  bool has_class(std::string_view class_name) const;
  std::vector<std::string> classes() const;
  // Rankable items of one class, in slot order.
  std::span<const std::size_t> class_slots(std::string_view class_name) const;
  const Item& slot_item(std::size_t slot) const { return items_[slots_[slot]]; }

  float slot_distance(std::size_t a, std::size_t b) const noexcept {
    if (a == b) return 0.0f;
    if (a > b) std::swap(a, b);
    return distances_[packed_offset(a, b)];
  }
  // Throws NotFound / Unrankable.
  std::size_t require_slot(std::string_view furniture_id) const;
  float distance(std::string_view a, std::string_view b) const;
  // Recomputes the pair from embeddings, skipping the matrix.
  double recompute_distance(std::string_view a, std::string_view b) const;

  const FeatureTable& embeddings() const noexcept { return embeddings_; }
  std::uint64_t registry_fingerprint() const noexcept { return registry_fingerprint_; }
  bool is_stale_for(const FurnitureRegistry& registry) const {
    return registry.fingerprint() != registry_fingerprint_;
  }

  // Binary: "STYX", u32 version, u64 fingerprint, item table, embeddings,
  // packed triangle.
  void write_binary(std::ostream& out) const;
  static CompatibilityIndex read_binary(std::istream& in);
  nlohmann::json manifest() const;
  void save(const std::filesystem::path& path) const;  // writes <path>.json too
  static CompatibilityIndex load(const std::filesystem::path& path);

 private:
  std::size_t packed_offset(std::size_t a, std::size_t b) const noexcept {
    const std::size_t n = slots_.size();
    return a * n - a * (a + 1) / 2 + (b - a - 1);
  }
  void rebuild_lookups();

  std::vector<Item> items_;       // every registry item, sorted by id
  std::vector<std::size_t> slots_;  // slot -> item position
  std::vector<float> distances_;
  FeatureTable embeddings_;
  std::uint64_t registry_fingerprint_ = 0;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_class_;
};

struct Suggestion {
  std::string furniture_id;
  double distance = 0.0;

  bool operator==(const Suggestion&) const = default;
};

inline constexpr std::size_t kDefaultSuggestionCount = 150;

// Candidates of `class_name` by ascending d(candidate, seed), ties by id,
// seed excluded, at most k. Throws NotFound (unknown seed or class),
// Unrankable (seed without validated images), InvalidArgument (k < 1).
std::vector<Suggestion> rank_single_seed(const CompatibilityIndex& index,
                                         std::string_view seed_id,
                                         std::string_view class_name, std::size_t k);

// Candidates by ascending sum of distances to every scene item; scene
// members are excluded. Throws InvalidArgument on an empty scene.
std::vector<Suggestion> rank_multi_seed(const CompatibilityIndex& index,
                                        std::span<const std::string> scene,
                                        std::string_view class_name, std::size_t k);

// Sum of d over unordered pairs of scene items; 0 for fewer than two.
double scene_energy(const CompatibilityIndex& index, std::span<const std::string> scene);

struct Placement {
  std::string furniture_id;
  std::optional<double> x;
  std::optional<double> y;
  std::optional<double> rotation;
  bool on_top = false;
};

struct Scene {
  std::string id;
  std::string name;
  std::vector<Placement> placements;

  std::vector<std::string> furniture_ids() const;
  nlohmann::json to_json() const;
  // Throws Parse on a malformed document.
  static Scene from_json(const nlohmann::json& doc);
};

}  // namespace stylerank
