#pragma once

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

namespace stylerank {

// Dense table of fixed-width float vectors keyed by image id. Used for both
// precomputed backbone features and 16-dim style embeddings.
class FeatureTable {
 public:
  static constexpr std::uint32_t kBinaryVersion = 1;

  FeatureTable() = default;
  explicit FeatureTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  // Throws Duplicate on a repeated id, InvalidArgument on a width mismatch
  // or a non-finite component.
  void add(std::string id, std::span<const float> values);

  const std::string& id(std::size_t row) const { return ids_[row]; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t row) const {
    return {values_.data() + row * dim_, dim_};
  }
  std::optional<std::size_t> find(std::string_view id) const;
  // Throws NotFound.
  std::span<const float> at(std::string_view id) const;

  // Binary layout: "STYF", u32 version, u64 count, u32 d, then per record
  // u16 id length, id bytes, d little-endian f32.
  void write_binary(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

  static FeatureTable read_binary(std::istream& in);
  // JSON Lines fallback: {"image_id": str, "features": [f32...]} per line.
  static FeatureTable read_jsonl(std::istream& in);
  // Detects the format from the leading magic.
  static FeatureTable load(const std::filesystem::path& path);

  bool operator==(const FeatureTable& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && values_ == other.values_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace stylerank
