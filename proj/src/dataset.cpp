#include "stylerank/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <utility>

#include "file_util.hpp"
#include "stylerank/error.hpp"
#include "stylerank/rng.hpp"

namespace stylerank {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

StyleCatalog StyleCatalog::standard() {
  return StyleCatalog({"Modern", "Traditional", "Cottage", "Coastal"});
}

StyleCatalog::StyleCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two styles");
  for (std::size_t a = 0; a < names_.size(); ++a) {
    for (std::size_t b = a + 1; b < names_.size(); ++b) {
      if (iequals(names_[a], names_[b])) {
        throw Error(ErrorCode::Duplicate, "duplicate style name " + names_[a]);
      }
    }
  }
}

std::optional<StyleId> StyleCatalog::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (iequals(names_[i], name)) return StyleId{static_cast<std::uint32_t>(i)};
  }
  return std::nullopt;
}

StyleId StyleCatalog::parse(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw Error(ErrorCode::Parse, "unknown style \"" + std::string(name) + "\"");
}

AnnotationStore::AnnotationStore(StyleCatalog styles) : styles_(std::move(styles)) {}

AnnotationStore AnnotationStore::from_annotations(std::span<const Annotation> rows,
                                                  StyleCatalog styles) {
  AnnotationStore store(std::move(styles));
  const std::size_t L = store.style_count();

  std::set<std::pair<std::string_view, std::string_view>> seen;
  std::set<std::string_view> experts;
  std::map<std::string_view, std::vector<int>> counts;
  for (const auto& row : rows) {
    if (row.style.index >= L) {
      throw Error(ErrorCode::InvalidArgument,
                  "style index " + std::to_string(row.style.index) + " out of range");
    }
    if (!seen.emplace(row.image_id, row.expert_id).second) {
      throw Error(ErrorCode::Duplicate, "duplicate annotation for image " + row.image_id +
                                            " by expert " + row.expert_id);
    }
    experts.insert(row.expert_id);
    auto& c = counts[row.image_id];
    if (c.empty()) c.assign(L, 0);
    ++c[row.style.index];
  }

  store.image_ids_.reserve(counts.size());
  store.counts_.reserve(counts.size() * L);
  for (auto& [id, c] : counts) {
    store.index_.emplace(std::string(id), store.image_ids_.size());
    store.image_ids_.emplace_back(id);
    store.counts_.insert(store.counts_.end(), c.begin(), c.end());
  }
  store.expert_count_ = experts.size();
  store.annotation_count_ = rows.size();
  return store;
}

AnnotationStore AnnotationStore::ingest(std::istream& in, StyleCatalog styles) {
  std::vector<Annotation> rows;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "annotations line " + std::to_string(line_no) + ": ";
    Annotation row;
    try {
      auto doc = nlohmann::json::parse(line);
      row.image_id = doc.at("image_id").get<std::string>();
      row.expert_id = doc.at("expert_id").get<std::string>();
      row.style = styles.parse(doc.at("style").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, where + "malformed row: " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what());
    }
    if (!seen.emplace(row.image_id, row.expert_id).second) {
      throw Error(ErrorCode::Duplicate, where + "duplicate annotation for image " + row.image_id +
                                            " by expert " + row.expert_id);
    }
    rows.push_back(std::move(row));
  }
  return from_annotations(rows, std::move(styles));
}

AnnotationStore AnnotationStore::load(const std::filesystem::path& path, StyleCatalog styles) {
  auto in = detail::open_input(path);
  try {
    return ingest(in, std::move(styles));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::optional<std::size_t> AnnotationStore::find(std::string_view image_id) const {
  auto it = index_.find(std::string(image_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const char* split_name(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view name) {
  if (iequals(name, "train")) return Split::Train;
  if (iequals(name, "validation") || iequals(name, "val")) return Split::Validation;
  if (iequals(name, "test")) return Split::Test;
  return std::nullopt;
}

std::optional<Split> SplitAssignment::split_of(std::string_view image_id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), image_id);
  if (it == ids_.end() || *it != image_id) return std::nullopt;
  return splits_[static_cast<std::size_t>(it - ids_.begin())];
}

std::vector<std::string> SplitAssignment::members(Split split) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (splits_[i] == split) out.push_back(ids_[i]);
  }
  return out;
}

std::array<std::size_t, 3> SplitAssignment::sizes() const {
  std::array<std::size_t, 3> n{};
  for (auto s : splits_) ++n[static_cast<std::size_t>(s)];
  return n;
}

nlohmann::json SplitAssignment::to_json() const {
  nlohmann::json doc;
  doc["seed"] = seed_;
  doc["fractions"] = {{"train", fractions_.train},
                      {"validation", fractions_.validation},
                      {"test", fractions_.test}};
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    doc[split_name(s)] = members(s);
  }
  return doc;
}

SplitAssignment SplitAssignment::from_json(const nlohmann::json& doc) {
  SplitAssignment out;
  try {
    out.seed_ = doc.value("seed", std::uint64_t{0});
    if (doc.contains("fractions")) {
      const auto& f = doc.at("fractions");
      out.fractions_ = {f.at("train").get<double>(), f.at("validation").get<double>(),
                        f.at("test").get<double>()};
    }
    std::vector<std::pair<std::string, Split>> rows;
    for (Split s : {Split::Train, Split::Validation, Split::Test}) {
      for (const auto& id : doc.at(split_name(s))) rows.emplace_back(id.get<std::string>(), s);
    }
    std::sort(rows.begin(), rows.end());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].first == rows[i - 1].first) {
        throw Error(ErrorCode::Duplicate, "image " + rows[i].first + " is in two splits");
      }
    }
    for (auto& [id, s] : rows) {
      out.ids_.push_back(std::move(id));
      out.splits_.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed split file: ") + e.what());
  }
  return out;
}

void SplitAssignment::save(const std::filesystem::path& path) const {
  auto out = detail::open_output(path);
  out << to_json().dump(2) << '\n';
  detail::finish_output(out, path);
}

SplitAssignment SplitAssignment::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(detail::read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

SplitAssignment assign_splits(std::span<const std::string> image_ids, SplitFractions fractions,
                              std::uint64_t seed) {
  const double parts[3] = {fractions.train, fractions.validation, fractions.test};
  std::size_t requested = 0;
  for (double p : parts) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "split fractions must be >= 0");
    if (p > 0.0) ++requested;
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1");
  }

  std::vector<std::string> ids(image_ids.begin(), image_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorCode::Duplicate, "duplicate image id in split input");
  }
  const std::size_t n = ids.size();
  if (n < requested) {
    throw Error(ErrorCode::InvalidArgument, std::to_string(n) + " images cannot fill " +
                                                std::to_string(requested) + " splits");
  }

  std::array<std::size_t, 3> size{};
  size[0] = static_cast<std::size_t>(std::llround(parts[0] * double(n)));
  size[1] = static_cast<std::size_t>(std::llround(parts[1] * double(n)));
  size[0] = std::min(size[0], n);
  size[1] = std::min(size[1], n - size[0]);
  size[2] = n - size[0] - size[1];
  // Every requested split gets at least one image.
  for (std::size_t s = 0; s < 3; ++s) {
    if (parts[s] > 0.0 && size[s] == 0) {
      auto donor = std::max_element(size.begin(), size.end()) - size.begin();
      --size[static_cast<std::size_t>(donor)];
      ++size[s];
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  SplitAssignment out;
  out.seed_ = seed;
  out.fractions_ = fractions;
  out.ids_ = std::move(ids);
  out.splits_.assign(n, Split::Train);
  for (std::size_t pos = 0; pos < n; ++pos) {
    Split s = pos < size[0] ? Split::Train : pos < size[0] + size[1] ? Split::Validation : Split::Test;
    out.splits_[order[pos]] = s;
  }
  return out;
}

ValidationSetSpec ValidationSetSpec::all_labels(std::size_t style_count) {
  return {std::vector<int>(style_count, 1), false};
}

ValidationSetSpec ValidationSetSpec::clean() { return {{10, 8, 7, 7}, true}; }

void ValidationSetSpec::validate(std::size_t style_count, std::size_t expert_count) const {
  if (l_min.size() != style_count) {
    throw Error(ErrorCode::InvalidArgument, "l_min has " + std::to_string(l_min.size()) +
                                                " entries for " + std::to_string(style_count) +
                                                " styles");
  }
  for (int v : l_min) {
    if (v < 1 || static_cast<std::size_t>(v) > expert_count) {
      throw Error(ErrorCode::InvalidArgument,
                  "l_min entries must lie in [1, " + std::to_string(expert_count) + "]");
    }
  }
}

std::vector<StyleMembership> build_style_set(const AnnotationStore& store,
                                             const ValidationSetSpec& spec) {
  const std::size_t L = store.style_count();
  if (spec.l_min.size() != L) {
    throw Error(ErrorCode::InvalidArgument, "l_min size does not match the style count");
  }
  for (int v : spec.l_min) {
    if (v < 1) throw Error(ErrorCode::InvalidArgument, "l_min entries must be >= 1");
  }

  std::vector<StyleMembership> out;
  for (std::size_t i = 0; i < store.image_count(); ++i) {
    auto c = store.counts(i);
    if (spec.single_label) {
      std::size_t best = 0;
      bool tie = false;
      for (std::size_t l = 1; l < L; ++l) {
        if (c[l] > c[best]) {
          best = l;
          tie = false;
        } else if (c[l] == c[best]) {
          tie = true;
        }
      }
      if (!tie && c[best] >= spec.l_min[best]) {
        out.push_back({i, StyleId{static_cast<std::uint32_t>(best)}});
      }
    } else {
      for (std::size_t l = 0; l < L; ++l) {
        if (c[l] >= spec.l_min[l]) out.push_back({i, StyleId{static_cast<std::uint32_t>(l)}});
      }
    }
  }
  return out;
}

nlohmann::json style_set_to_json(const AnnotationStore& store,
                                 std::span<const StyleMembership> set) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : set) {
    rows.push_back({{"image_id", store.image_id(m.image)}, {"style", store.styles().name(m.style)}});
  }
  return rows;
}

}  // namespace stylerank
