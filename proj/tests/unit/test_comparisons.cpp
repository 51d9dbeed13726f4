#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "stylerank/comparisons.hpp"
#include "stylerank/error.hpp"
#include "stylerank/synthetic.hpp"
#include "support.hpp"

using namespace stylerank;
using stylerank::testing::store_from_counts;

namespace {

AnnotationStore synthetic_store(std::size_t images, std::size_t experts, std::uint64_t seed) {
  SyntheticCorpusConfig c;
  c.image_count = images;
  c.expert_count = experts;
  c.feature_dim = 8;
  c.expert_noise = 0.4;
  c.seed = seed;
  return AnnotationStore::from_annotations(generate_corpus(c).annotations);
}

}  // namespace

TEST_CASE("eligible_pair applies the label gate and strict margin") {
  CHECK(eligible_pair(5, 1, 3) == 1);
  CHECK_FALSE(eligible_pair(4, 1, 3).has_value());
  CHECK_FALSE(eligible_pair(0, 9, 1).has_value());
  CHECK(eligible_pair(1, 9, 1) == -1);
  CHECK(eligible_pair(2, 1, 0) == 1);
  CHECK_FALSE(eligible_pair(3, 3, 0).has_value());
}

TEST_CASE("eligible_pair is antisymmetric") {
  for (int a = 0; a <= 10; ++a) {
    for (int b = 0; b <= 10; ++b) {
      for (int t = 0; t <= 4; ++t) {
        const auto ab = eligible_pair(a, b, t);
        const auto ba = eligible_pair(b, a, t);
        REQUIRE(ab.has_value() == ba.has_value());
        if (ab) CHECK(*ab == -*ba);
      }
    }
  }
}

TEST_CASE("three-image example keeps only the pair with labels on both sides") {
  const auto store = store_from_counts({{10, 0, 0, 0}, {5, 0, 0, 0}, {0, 0, 0, 0}});
  // img002 has no Modern label, so neither of its pairs is eligible.
  const auto all = enumerate_comparisons(store, nullptr, StyleId{0}, 3, std::nullopt);
  REQUIRE(all.size() == 1);
  CHECK(all[0] == ComparisonLabel{"img000", "img001", StyleId{0}, 1});

  const auto sampled = sample_comparisons(store, nullptr, {3, 1000, 4, std::nullopt});
  CHECK(sampled == all);
}

TEST_CASE("no overlapping style labels gives nothing") {
  const auto store = store_from_counts({{3, 0, 0, 0}, {0, 3, 0, 0}});
  CHECK(enumerate_comparisons(store, nullptr, std::nullopt, 0, std::nullopt).empty());
  CHECK_THROWS_AS(sample_comparisons(store, nullptr, {0, 5, 1, std::nullopt}), Error);
}

TEST_CASE("threshold at the expert count empties the population") {
  const auto store = synthetic_store(50, 10, 3);
  CHECK(enumerate_comparisons(store, nullptr, std::nullopt, 10, std::nullopt).empty());
  CHECK(enumerate_comparisons(store, nullptr, std::nullopt, 9, std::nullopt).empty());
  try {
    sample_comparisons(store, nullptr, {10, 5, 1, std::nullopt});
    FAIL("expected empty population");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyPopulation);
  }
}

TEST_CASE("sampling is deterministic and a subset of the enumeration") {
  const auto store = synthetic_store(50, 10, 11);
  for (int t = 1; t <= 3; ++t) {
    const auto all = enumerate_comparisons(store, nullptr, std::nullopt, t, std::nullopt);
    const std::set<ComparisonLabel> universe(all.begin(), all.end());
    const auto pop = eligible_population(store, nullptr, std::nullopt, t);
    std::uint64_t pop_total = 0;
    for (auto p : pop) pop_total += p;
    CHECK(pop_total == all.size());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      for (std::size_t n : {std::size_t{1}, std::size_t{25}, all.size() / 3, all.size() + 10}) {
        const auto s = sample_comparisons(store, nullptr, {t, n, seed, std::nullopt});
        CHECK(s.size() == std::min(n, all.size()));
        CHECK(s == sample_comparisons(store, nullptr, {t, n, seed, std::nullopt}));
        const std::set<ComparisonLabel> unique(s.begin(), s.end());
        CHECK(unique.size() == s.size());
        for (const auto& c : s) CHECK(universe.count(c) == 1);
      }
    }
  }
}

TEST_CASE("enumeration is monotone in the threshold") {
  const auto store = synthetic_store(50, 10, 5);
  auto sorted = [&](int t) {
    auto v = enumerate_comparisons(store, nullptr, std::nullopt, t, std::nullopt);
    std::sort(v.begin(), v.end());
    return v;
  };
  auto prev = sorted(0);
  for (int t = 1; t <= 10; ++t) {
    const auto cur = sorted(t);
    CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    CHECK(cur.size() <= prev.size());
    prev = cur;
  }
}

TEST_CASE("every enumerated label obeys the label rule") {
  const auto store = synthetic_store(40, 10, 8);
  for (const auto& c : enumerate_comparisons(store, nullptr, std::nullopt, 2, std::nullopt)) {
    const int ci = store.count(*store.find(c.i), c.style);
    const int cj = store.count(*store.find(c.j), c.style);
    CHECK(c.i < c.j);
    CHECK(ci >= 1);
    CHECK(cj >= 1);
    CHECK(c.y == (ci - cj > 2 ? 1 : -1));
    CHECK(std::abs(ci - cj) > 2);
  }
}

TEST_CASE("different seeds give different samples") {
  const auto store = synthetic_store(200, 10, 2);
  const auto a = sample_comparisons(store, nullptr, {1, 100, 1, std::nullopt});
  const auto b = sample_comparisons(store, nullptr, {1, 100, 2, std::nullopt});
  CHECK(a != b);
}

TEST_CASE("split restriction keeps both images in the split") {
  const auto store = synthetic_store(300, 10, 4);
  const auto splits = assign_splits(store.image_ids(), {}, 4);
  const auto s = sample_comparisons(store, &splits, {1, 500, 9, Split::Train});
  for (const auto& c : s) {
    CHECK(splits.split_of(c.i) == Split::Train);
    CHECK(splits.split_of(c.j) == Split::Train);
  }
  CHECK_THROWS_AS(sample_comparisons(store, nullptr, {1, 5, 9, Split::Train}), Error);
}

TEST_CASE("config validation and oracle cap") {
  const auto store = synthetic_store(60, 10, 1);
  CHECK_THROWS_AS(sample_comparisons(store, nullptr, {-1, 5, 1, std::nullopt}), Error);
  CHECK_THROWS_AS(sample_comparisons(store, nullptr, {1, 0, 1, std::nullopt}), Error);
  CHECK_THROWS_AS(enumerate_comparisons(store, nullptr, std::nullopt, 1, std::nullopt, 59), Error);
}

TEST_CASE("comparisons round-trip through JSONL") {
  const auto store = synthetic_store(80, 10, 6);
  const auto s = sample_comparisons(store, nullptr, {2, 300, 3, std::nullopt});
  std::stringstream buf;
  write_comparisons(buf, s, store.styles());
  CHECK(read_comparisons(buf, store.styles()) == s);

  std::istringstream bad(R"({"i":"a","j":"b","style":"Modern","y":0})");
  CHECK_THROWS_AS(read_comparisons(bad, store.styles()), Error);
}
