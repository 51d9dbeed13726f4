#include "stylerank/compat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "file_util.hpp"
#include "stylerank/error.hpp"

namespace stylerank {

namespace {

constexpr std::string_view kIndexMagic = "STYX";

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// Minimum pairwise distance between two lists of embedding rows. Both the
// index build and on-demand recomputation go through here.
double min_cross_distance(const FeatureTable& table, std::span<const std::size_t> rows_a,
                          std::span<const std::size_t> rows_b) {
  double best = std::numeric_limits<double>::infinity();
  for (auto a : rows_a) {
    const auto ea = table.row(a);
    for (auto b : rows_b) best = std::min(best, embedding_distance(ea, table.row(b)));
  }
  return best;
}

std::vector<std::size_t> resolve_rows(const FeatureTable& table,
                                      std::span<const std::string> images) {
  std::vector<std::size_t> rows;
  rows.reserve(images.size());
  for (const auto& id : images) {
    auto r = table.find(id);
    if (!r) throw Error(ErrorCode::NotFound, "no embedding for validated image " + id);
    rows.push_back(*r);
  }
  return rows;
}

}  // namespace

const char* validation_status_name(ValidationStatus status) noexcept {
  switch (status) {
    case ValidationStatus::Similar: return "similar";
    case ValidationStatus::NotSimilar: return "not_similar";
    case ValidationStatus::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<ValidationStatus> parse_validation_status(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (c == ' ' || c == '-' || c == '_') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "similar") return ValidationStatus::Similar;
  if (s == "notsimilar" || s == "dissimilar") return ValidationStatus::NotSimilar;
  if (s == "unknown") return ValidationStatus::Unknown;
  return std::nullopt;
}

void FurnitureRegistry::add_item(FurnitureItem item) {
  if (item.id.empty()) throw Error(ErrorCode::InvalidArgument, "furniture id is empty");
  if (index_.contains(item.id)) throw Error(ErrorCode::Duplicate, "duplicate furniture " + item.id);
  index_.emplace(item.id, items_.size());
  items_.push_back(std::move(item));
  ++revision_;
}

const FurnitureItem* FurnitureRegistry::find(std::string_view furniture_id) const {
  auto it = index_.find(std::string(furniture_id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

ValidationStatus FurnitureRegistry::status(std::string_view image_id,
                                           std::string_view furniture_id) const {
  auto it = validations_.find({std::string(image_id), std::string(furniture_id)});
  return it == validations_.end() ? ValidationStatus::Unknown : it->second;
}

void FurnitureRegistry::record_validation(std::string_view image_id,
                                          std::string_view furniture_id,
                                          ValidationStatus status) {
  const auto* item = find(furniture_id);
  if (item == nullptr) {
    throw Error(ErrorCode::NotFound, "unknown furniture " + std::string(furniture_id));
  }
  if (std::find(item->image_ids.begin(), item->image_ids.end(), image_id) ==
      item->image_ids.end()) {
    throw Error(ErrorCode::NotFound, "image " + std::string(image_id) +
                                         " is not associated with furniture " +
                                         std::string(furniture_id));
  }
  validations_[{std::string(image_id), std::string(furniture_id)}] = status;
  ++revision_;
}

std::vector<std::string> FurnitureRegistry::validated_images(const FurnitureItem& item) const {
  std::vector<std::string> out;
  for (const auto& image : item.image_ids) {
    if (status(image, item.id) == ValidationStatus::Similar) out.push_back(image);
  }
  return out;
}

bool FurnitureRegistry::rankable(const FurnitureItem& item) const {
  return std::any_of(item.image_ids.begin(), item.image_ids.end(), [&](const auto& image) {
    return status(image, item.id) == ValidationStatus::Similar;
  });
}

ValidationYield FurnitureRegistry::validation_yield() const {
  ValidationYield y;
  y.total = items_.size();
  for (const auto& item : items_) y.rankable += rankable(item) ? 1 : 0;
  return y;
}

std::uint64_t FurnitureRegistry::fingerprint() const { return fnv1a(to_json().dump()); }

nlohmann::json FurnitureRegistry::to_json() const {
  nlohmann::json furniture = nlohmann::json::array();
  for (const auto& item : items_) {
    nlohmann::json row = {{"id", item.id}, {"class", item.class_name}, {"images", item.image_ids}};
    row["thumbnail"] = item.thumbnail ? nlohmann::json(*item.thumbnail) : nlohmann::json(nullptr);
    furniture.push_back(std::move(row));
  }
  nlohmann::json validations = nlohmann::json::array();
  for (const auto& [key, status] : validations_) {
    validations.push_back(
        {{"image", key.first}, {"furniture", key.second}, {"status", validation_status_name(status)}});
  }
  return {{"furniture", furniture}, {"validations", validations}};
}

FurnitureRegistry FurnitureRegistry::from_json(const nlohmann::json& doc) {
  FurnitureRegistry registry;
  try {
    for (const auto& row : doc.at("furniture")) {
      FurnitureItem item;
      item.id = row.at("id").get<std::string>();
      item.class_name = row.at("class").get<std::string>();
      item.image_ids = row.at("images").get<std::vector<std::string>>();
      if (row.contains("thumbnail") && !row.at("thumbnail").is_null()) {
        item.thumbnail = row.at("thumbnail").get<std::string>();
      }
      registry.add_item(std::move(item));
    }
    if (doc.contains("validations")) {
      for (const auto& row : doc.at("validations")) {
        const auto name = row.at("status").get<std::string>();
        auto status = parse_validation_status(name);
        if (!status) throw Error(ErrorCode::Parse, "unknown validation status " + name);
        registry.record_validation(row.at("image").get<std::string>(),
                                   row.at("furniture").get<std::string>(), *status);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed registry: ") + e.what());
  }
  return registry;
}

void FurnitureRegistry::save(const std::filesystem::path& path) const {
  auto out = detail::open_output(path);
  out << to_json().dump(2) << '\n';
  detail::finish_output(out, path);
}

FurnitureRegistry FurnitureRegistry::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(detail::read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

double embedding_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::InvalidArgument, "embedding lengths differ: " +
                                                std::to_string(a.size()) + " vs " +
                                                std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

double furniture_distance(const FeatureTable& embeddings, std::span<const std::string> images_a,
                          std::span<const std::string> images_b) {
  if (images_a.empty() || images_b.empty()) {
    throw Error(ErrorCode::Unrankable, "furniture without validated images is unrankable");
  }
  const auto rows_a = resolve_rows(embeddings, images_a);
  const auto rows_b = resolve_rows(embeddings, images_b);
  return min_cross_distance(embeddings, rows_a, rows_b);
}

CompatibilityIndex CompatibilityIndex::build(const FurnitureRegistry& registry,
                                             const FeatureTable& embeddings) {
  CompatibilityIndex index;
  index.registry_fingerprint_ = registry.fingerprint();
  for (const auto& item : registry.items()) {
    index.items_.push_back(
        {item.id, item.class_name, item.thumbnail, registry.validated_images(item), std::nullopt});
  }
  std::sort(index.items_.begin(), index.items_.end(),
            [](const Item& a, const Item& b) { return a.id < b.id; });

  index.embeddings_ = FeatureTable(embeddings.dim() == 0 ? 16 : embeddings.dim());
  std::vector<std::vector<std::size_t>> rows;
  for (std::size_t p = 0; p < index.items_.size(); ++p) {
    auto& item = index.items_[p];
    if (item.validated_images.empty()) continue;
    for (const auto& image : item.validated_images) {
      if (index.embeddings_.find(image)) continue;
      auto src = embeddings.find(image);
      if (!src) {
        throw Error(ErrorCode::NotFound,
                    "validated image " + image + " of " + item.id + " has no embedding");
      }
      index.embeddings_.add(image, embeddings.row(*src));
    }
    item.slot = index.slots_.size();
    index.slots_.push_back(p);
    rows.push_back(resolve_rows(index.embeddings_, item.validated_images));
  }

  const std::size_t n = index.slots_.size();
  index.distances_.resize(n < 2 ? 0 : n * (n - 1) / 2);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      index.distances_[index.packed_offset(a, b)] =
          static_cast<float>(min_cross_distance(index.embeddings_, rows[a], rows[b]));
    }
  }
  index.rebuild_lookups();
  return index;
}

void CompatibilityIndex::rebuild_lookups() {
  by_id_.clear();
  by_class_.clear();
  for (std::size_t p = 0; p < items_.size(); ++p) {
    by_id_.emplace(items_[p].id, p);
    auto& slots = by_class_[items_[p].class_name];
    if (items_[p].slot) slots.push_back(*items_[p].slot);
  }
}

const CompatibilityIndex::Item* CompatibilityIndex::find(std::string_view furniture_id) const {
  auto it = by_id_.find(std::string(furniture_id));
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

bool CompatibilityIndex::has_class(std::string_view class_name) const {
  return by_class_.find(class_name) != by_class_.end();
}

std::vector<std::string> CompatibilityIndex::classes() const {
  std::vector<std::string> out;
  for (const auto& [name, slots] : by_class_) out.push_back(name);
  return out;
}

std::span<const std::size_t> CompatibilityIndex::class_slots(std::string_view class_name) const {
  auto it = by_class_.find(class_name);
  if (it == by_class_.end()) return {};
  return it->second;
}

std::size_t CompatibilityIndex::require_slot(std::string_view furniture_id) const {
  const auto* item = find(furniture_id);
  if (item == nullptr) {
    throw Error(ErrorCode::NotFound, "unknown furniture " + std::string(furniture_id));
  }
  if (!item->slot) {
    throw Error(ErrorCode::Unrankable,
                "furniture " + std::string(furniture_id) + " has no validated images");
  }
  return *item->slot;
}

float CompatibilityIndex::distance(std::string_view a, std::string_view b) const {
  return slot_distance(require_slot(a), require_slot(b));
}

double CompatibilityIndex::recompute_distance(std::string_view a, std::string_view b) const {
  const auto& ia = slot_item(require_slot(a));
  const auto& ib = slot_item(require_slot(b));
  return furniture_distance(embeddings_, ia.validated_images, ib.validated_images);
}

void CompatibilityIndex::write_binary(std::ostream& out) const {
  io::write_magic(out, kIndexMagic);
  io::write_le<std::uint32_t>(out, kVersion);
  io::write_le<std::uint64_t>(out, registry_fingerprint_);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(items_.size()));
  for (const auto& item : items_) {
    io::write_short_string(out, item.id);
    io::write_short_string(out, item.class_name);
    io::write_le<std::uint8_t>(out, item.thumbnail ? 1 : 0);
    if (item.thumbnail) io::write_short_string(out, *item.thumbnail);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(item.validated_images.size()));
    for (const auto& image : item.validated_images) io::write_short_string(out, image);
  }
  embeddings_.write_binary(out);
  io::write_le<std::uint64_t>(out, distances_.size());
  for (float d : distances_) io::write_le<float>(out, d);
}

CompatibilityIndex CompatibilityIndex::read_binary(std::istream& in) {
  io::expect_magic(in, kIndexMagic);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error(ErrorCode::FormatVersion,
                "index version " + std::to_string(version) + " is not supported");
  }
  CompatibilityIndex index;
  index.registry_fingerprint_ = io::read_le<std::uint64_t>(in);
  const auto count = io::read_le<std::uint32_t>(in);
  for (std::uint32_t p = 0; p < count; ++p) {
    Item item;
    item.id = io::read_short_string(in);
    item.class_name = io::read_short_string(in);
    if (io::read_le<std::uint8_t>(in) != 0) item.thumbnail = io::read_short_string(in);
    const auto n_images = io::read_le<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < n_images; ++k) item.validated_images.push_back(io::read_short_string(in));
    if (!item.validated_images.empty()) {
      item.slot = index.slots_.size();
      index.slots_.push_back(p);
    }
    index.items_.push_back(std::move(item));
  }
  index.embeddings_ = FeatureTable::read_binary(in);
  const auto packed = io::read_le<std::uint64_t>(in);
  const std::size_t n = index.slots_.size();
  if (packed != (n < 2 ? 0 : n * (n - 1) / 2)) {
    throw Error(ErrorCode::Parse, "index distance table does not match its item table");
  }
  index.distances_.resize(packed);
  for (auto& d : index.distances_) d = io::read_le<float>(in);
  index.rebuild_lookups();
  return index;
}

nlohmann::json CompatibilityIndex::manifest() const {
  nlohmann::json classes = nlohmann::json::object();
  nlohmann::json unrankable = nlohmann::json::array();
  for (const auto& item : items_) {
    auto& entry = classes[item.class_name];
    if (entry.is_null()) entry = {{"items", 0}, {"rankable", 0}};
    entry["items"] = entry["items"].get<std::size_t>() + 1;
    if (item.slot) {
      entry["rankable"] = entry["rankable"].get<std::size_t>() + 1;
    } else {
      unrankable.push_back(item.id);
    }
  }
  return {{"format", "stylerank-index"},
          {"version", kVersion},
          {"registry_fingerprint", hex64(registry_fingerprint_)},
          {"items", items_.size()},
          {"rankable", slots_.size()},
          {"embedding_dim", embeddings_.dim()},
          {"embeddings", embeddings_.size()},
          {"classes", classes},
          {"unrankable", unrankable}};
}

void CompatibilityIndex::save(const std::filesystem::path& path) const {
  {
    auto out = detail::open_output(path, true);
    write_binary(out);
    detail::finish_output(out, path);
  }
  auto manifest_path = path;
  manifest_path += ".json";
  auto out = detail::open_output(manifest_path);
  out << manifest().dump(2) << '\n';
  detail::finish_output(out, manifest_path);
}

CompatibilityIndex CompatibilityIndex::load(const std::filesystem::path& path) {
  auto in = detail::open_input(path, true);
  try {
    return read_binary(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

namespace {

struct Scored {
  std::size_t slot;
  double score;
};

std::vector<Suggestion> top_k(const CompatibilityIndex& index, std::vector<Scored>& scored,
                              std::size_t k) {
  const auto less = [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score < b.score;
    return index.slot_item(a.slot).id < index.slot_item(b.slot).id;
  };
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    less);
  std::vector<Suggestion> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({index.slot_item(scored[i].slot).id, scored[i].score});
  }
  return out;
}

void require_class(const CompatibilityIndex& index, std::string_view class_name) {
  if (!index.has_class(class_name)) {
    throw Error(ErrorCode::NotFound, "unknown furniture class " + std::string(class_name));
  }
}

}  // namespace

std::vector<Suggestion> rank_single_seed(const CompatibilityIndex& index,
                                         std::string_view seed_id,
                                         std::string_view class_name, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto seed = index.require_slot(seed_id);
  require_class(index, class_name);
  std::vector<Scored> scored;
  for (auto slot : index.class_slots(class_name)) {
    if (slot == seed) continue;
    scored.push_back({slot, double(index.slot_distance(slot, seed))});
  }
  return top_k(index, scored, k);
}

std::vector<Suggestion> rank_multi_seed(const CompatibilityIndex& index,
                                        std::span<const std::string> scene,
                                        std::string_view class_name, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (scene.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "multi-seed ranking needs a non-empty scene; use single-seed ranking instead");
  }
  std::vector<std::size_t> members;
  members.reserve(scene.size());
  for (const auto& id : scene) members.push_back(index.require_slot(id));
  require_class(index, class_name);
  std::vector<Scored> scored;
  for (auto slot : index.class_slots(class_name)) {
    if (std::find(members.begin(), members.end(), slot) != members.end()) continue;
    double sum = 0.0;
    for (auto m : members) sum += double(index.slot_distance(slot, m));
    scored.push_back({slot, sum});
  }
  return top_k(index, scored, k);
}

double scene_energy(const CompatibilityIndex& index, std::span<const std::string> scene) {
  std::vector<std::size_t> members;
  members.reserve(scene.size());
  for (const auto& id : scene) members.push_back(index.require_slot(id));
  double energy = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      energy += double(index.slot_distance(members[a], members[b]));
    }
  }
  return energy;
}

std::vector<std::string> Scene::furniture_ids() const {
  std::vector<std::string> out;
  out.reserve(placements.size());
  for (const auto& p : placements) out.push_back(p.furniture_id);
  return out;
}

nlohmann::json Scene::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : placements) {
    nlohmann::json row = {{"furniture_id", p.furniture_id}, {"on_top", p.on_top}};
    if (p.x) row["x"] = *p.x;
    if (p.y) row["y"] = *p.y;
    if (p.rotation) row["rotation"] = *p.rotation;
    rows.push_back(std::move(row));
  }
  nlohmann::json doc = {{"name", name}, {"placements", rows}};
  if (!id.empty()) doc["id"] = id;
  return doc;
}

Scene Scene::from_json(const nlohmann::json& doc) {
  Scene scene;
  try {
    if (!doc.is_object()) throw Error(ErrorCode::Parse, "scene must be a JSON object");
    scene.id = doc.value("id", std::string());
    scene.name = doc.at("name").get<std::string>();
    for (const auto& row : doc.value("placements", nlohmann::json::array())) {
      Placement p;
      p.furniture_id = row.at("furniture_id").get<std::string>();
      if (row.contains("x")) p.x = row.at("x").get<double>();
      if (row.contains("y")) p.y = row.at("y").get<double>();
      if (row.contains("rotation")) p.rotation = row.at("rotation").get<double>();
      p.on_top = row.value("on_top", false);
      scene.placements.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed scene: ") + e.what());
  }
  return scene;
}

}  // namespace stylerank
