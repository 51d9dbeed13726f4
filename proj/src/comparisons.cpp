#include "stylerank/comparisons.hpp"

#include <algorithm>
#include <fstream>
#include <tuple>
#include <unordered_set>

#include "file_util.hpp"
#include "json.hpp"
#include "stylerank/error.hpp"
#include "stylerank/rng.hpp"

namespace stylerank {

namespace {

std::vector<std::size_t> select_images(const AnnotationStore& store, const SplitAssignment* splits,
                                       std::optional<Split> split) {
  std::vector<std::size_t> out;
  if (split && splits == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "a split was requested but no split assignment given");
  }
  for (std::size_t i = 0; i < store.image_count(); ++i) {
    if (split && splits->split_of(store.image_id(i)) != split) continue;
    out.push_back(i);
  }
  return out;
}

// Images grouped by their label count for one style; bucket c holds images
// with exactly c labels (c >= 1).
std::vector<std::vector<std::size_t>> count_buckets(const AnnotationStore& store,
                                                    std::span<const std::size_t> images,
                                                    StyleId style) {
  std::vector<std::vector<std::size_t>> buckets(store.expert_count() + 1);
  for (auto i : images) {
    const int c = store.count(i, style);
    if (c >= 1) buckets[static_cast<std::size_t>(c)].push_back(i);
  }
  return buckets;
}

ComparisonLabel make_label(const AnnotationStore& store, std::size_t a, std::size_t b,
                           StyleId style, int y_ab) {
  // Canonical orientation: lexicographically smaller id first.
  if (a < b) return {store.image_id(a), store.image_id(b), style, y_ab};
  return {store.image_id(b), store.image_id(a), style, -y_ab};
}

void sort_labels(std::vector<ComparisonLabel>& labels) {
  std::sort(labels.begin(), labels.end(), [](const auto& x, const auto& y) {
    return std::tie(x.style, x.i, x.j) < std::tie(y.style, y.i, y.j);
  });
}

struct BucketPair {
  StyleId style;
  std::size_t low;   // smaller count
  std::size_t high;  // larger count
  std::uint64_t weight;
};

}  // namespace

void ComparisonConfig::validate() const {
  if (threshold < 0) throw Error(ErrorCode::InvalidArgument, "threshold t must be >= 0");
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "comparison count must be >= 1");
}

std::optional<int> eligible_pair(int count_i, int count_j, int threshold) noexcept {
  if (count_i < 1 || count_j < 1) return std::nullopt;
  if (count_i - count_j > threshold) return +1;
  if (count_j - count_i > threshold) return -1;
  return std::nullopt;
}

std::vector<std::uint64_t> eligible_population(const AnnotationStore& store,
                                               const SplitAssignment* splits,
                                               std::optional<Split> split, int threshold) {
  const auto images = select_images(store, splits, split);
  std::vector<std::uint64_t> pop(store.style_count(), 0);
  for (std::uint32_t l = 0; l < store.style_count(); ++l) {
    auto buckets = count_buckets(store, images, StyleId{l});
    for (std::size_t a = 1; a < buckets.size(); ++a) {
      for (std::size_t b = a + 1; b < buckets.size(); ++b) {
        if (static_cast<long>(b - a) > threshold) pop[l] += buckets[a].size() * buckets[b].size();
      }
    }
  }
  return pop;
}

std::vector<ComparisonLabel> sample_comparisons(const AnnotationStore& store,
                                                const SplitAssignment* splits,
                                                const ComparisonConfig& config) {
  config.validate();
  if (store.empty()) throw Error(ErrorCode::EmptyPopulation, "annotation store is empty");
  const auto images = select_images(store, splits, config.split);

  std::vector<std::vector<std::vector<std::size_t>>> buckets;
  std::vector<BucketPair> pairs;
  std::uint64_t total = 0;
  for (std::uint32_t l = 0; l < store.style_count(); ++l) {
    buckets.push_back(count_buckets(store, images, StyleId{l}));
    const auto& bl = buckets.back();
    for (std::size_t a = 1; a < bl.size(); ++a) {
      for (std::size_t b = a + 1; b < bl.size(); ++b) {
        if (static_cast<long>(b - a) <= config.threshold) continue;
        const std::uint64_t w = bl[a].size() * bl[b].size();
        if (w == 0) continue;
        pairs.push_back({StyleId{l}, a, b, w});
        total += w;
      }
    }
  }
  if (total == 0) {
    throw Error(ErrorCode::EmptyPopulation, "no eligible comparisons at threshold t = " +
                                                std::to_string(config.threshold));
  }

  const std::uint64_t target = std::min<std::uint64_t>(config.count, total);
  Rng rng(config.seed);
  std::vector<ComparisonLabel> out;
  out.reserve(target);

  if (target * 2 >= total) {
    // Dense regime: the population is at most twice the request, so list it
    // and take a partial shuffle.
    for (const auto& p : pairs) {
      const auto& bl = buckets[p.style.index];
      for (auto hi : bl[p.high]) {
        for (auto lo : bl[p.low]) out.push_back(make_label(store, hi, lo, p.style, +1));
      }
    }
    for (std::uint64_t k = 0; k < target; ++k) {
      std::swap(out[k], out[k + rng.uniform_index(out.size() - k)]);
    }
    out.resize(target);
  } else {
    std::vector<std::uint64_t> cumulative;
    cumulative.reserve(pairs.size());
    std::uint64_t acc = 0;
    for (const auto& p : pairs) cumulative.push_back(acc += p.weight);

    struct KeyHash {
      std::size_t operator()(const std::tuple<std::uint32_t, std::size_t, std::size_t>& k) const {
        auto [l, a, b] = k;
        return std::hash<std::uint64_t>()((std::uint64_t(a) * 0x9e3779b97f4a7c15ULL) ^
                                          (std::uint64_t(b) << 3) ^ l);
      }
    };
    std::unordered_set<std::tuple<std::uint32_t, std::size_t, std::size_t>, KeyHash> taken;
    const std::uint64_t max_attempts = kRejectionRetryFactor * config.count;
    std::uint64_t attempts = 0;
    while (out.size() < target) {
      if (++attempts > max_attempts) {
        throw Error(ErrorCode::EmptyPopulation, "comparison population too sparse: gave up after " +
                                                    std::to_string(max_attempts) + " draws");
      }
      const std::uint64_t u = rng.uniform_index(total);
      const auto& p = pairs[static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin())];
      const auto& bl = buckets[p.style.index];
      const auto hi = bl[p.high][rng.uniform_index(bl[p.high].size())];
      const auto lo = bl[p.low][rng.uniform_index(bl[p.low].size())];
      if (!taken.emplace(p.style.index, std::min(hi, lo), std::max(hi, lo)).second) continue;
      out.push_back(make_label(store, hi, lo, p.style, +1));
    }
  }
  sort_labels(out);
  return out;
}

std::vector<ComparisonLabel> enumerate_comparisons(const AnnotationStore& store,
                                                   const SplitAssignment* splits,
                                                   std::optional<StyleId> style, int threshold,
                                                   std::optional<Split> split, std::size_t cap) {
  const auto images = select_images(store, splits, split);
  if (images.size() > cap) {
    throw Error(ErrorCode::InvalidArgument, "enumeration over " + std::to_string(images.size()) +
                                                " images exceeds the oracle cap of " +
                                                std::to_string(cap));
  }
  std::vector<ComparisonLabel> out;
  for (std::uint32_t l = 0; l < store.style_count(); ++l) {
    if (style && style->index != l) continue;
    for (std::size_t a = 0; a < images.size(); ++a) {
      for (std::size_t b = a + 1; b < images.size(); ++b) {
        const auto i = images[a];
        const auto j = images[b];
        if (auto y = eligible_pair(store.count(i, StyleId{l}), store.count(j, StyleId{l}), threshold)) {
          out.push_back({store.image_id(i), store.image_id(j), StyleId{l}, *y});
        }
      }
    }
  }
  sort_labels(out);
  return out;
}

void write_comparisons(std::ostream& out, const std::vector<ComparisonLabel>& labels,
                       const StyleCatalog& styles) {
  for (const auto& c : labels) {
    nlohmann::json row = {{"i", c.i}, {"j", c.j}, {"style", styles.name(c.style)}, {"y", c.y}};
    out << row.dump() << '\n';
  }
}

void save_comparisons(const std::filesystem::path& path,
                      const std::vector<ComparisonLabel>& labels, const StyleCatalog& styles) {
  auto out = detail::open_output(path);
  write_comparisons(out, labels, styles);
  detail::finish_output(out, path);
}

std::vector<ComparisonLabel> read_comparisons(std::istream& in, const StyleCatalog& styles) {
  std::vector<ComparisonLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "comparisons line " + std::to_string(line_no) + ": ";
    try {
      auto doc = nlohmann::json::parse(line);
      ComparisonLabel c{doc.at("i").get<std::string>(), doc.at("j").get<std::string>(),
                        styles.parse(doc.at("style").get<std::string>()), doc.at("y").get<int>()};
      if (c.y != 1 && c.y != -1) throw Error(ErrorCode::Parse, "y must be +1 or -1");
      if (c.i == c.j) throw Error(ErrorCode::Parse, "comparison of an image with itself");
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, where + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what());
    }
  }
  return out;
}

std::vector<ComparisonLabel> load_comparisons(const std::filesystem::path& path,
                                              const StyleCatalog& styles) {
  auto in = detail::open_input(path);
  return read_comparisons(in, styles);
}

}  // namespace stylerank
