// Acceptance run: one PASS/FAIL line per criterion. Oracles here are written
// independently of the library code they check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "stylerank/comparisons.hpp"
#include "stylerank/compat.hpp"
#include "stylerank/error.hpp"
#include "stylerank/eval.hpp"
#include "stylerank/rng.hpp"
#include "stylerank/service.hpp"
#include "stylerank/stylenet.hpp"
#include "stylerank/synthetic.hpp"
#include "stylerank/training.hpp"
#include "support.hpp"

using namespace stylerank;
using namespace stylerank::testing;
using Json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<float> random_x(std::mt19937_64& gen, std::size_t d) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> x(d);
  for (auto& v : x) v = n(gen);
  return x;
}

// ---- gradient oracle ------------------------------------------------------

Outcome gradient_oracle() {
  std::mt19937_64 gen(101);
  double worst = 0.0;
  std::size_t checks = 0;
  for (int instance = 0; instance < 25; ++instance) {
    const auto head = random_head(5, 4, 7000 + instance);
    std::vector<std::vector<float>> xs;
    for (int i = 0; i < 16; ++i) xs.push_back(random_x(gen, 5));
    std::vector<ComparisonExample> batch;
    for (int i = 0; i < 8; ++i) {
      batch.push_back({xs[2 * i], xs[2 * i + 1], StyleId{std::uint32_t(gen() % 4)},
                       gen() % 2 ? 1 : -1});
    }
    for (double lambda : {0.0, 1e-3}) {
      for (auto mode : {PredictionMode::Softmax, PredictionMode::LogitDifference}) {
        const bool logit = mode == PredictionMode::LogitDifference;
        const auto analytic = batch_gradient(head, batch, lambda, mode);
        const auto numeric = numeric_gradient(
            head, [&](const StyleHead& h) { return reference_objective(h, batch, lambda, logit); },
            1e-5);
        for (double err : block_relative_errors(analytic.gradient, numeric)) {
          worst = std::max(worst, err);
          ++checks;
        }
      }
    }
  }
  return {worst < 1e-5, fmt("worst block relative error %.2e over %zu blocks", worst, checks)};
}

// ---- loss identities ------------------------------------------------------

Outcome loss_identities() {
  double worst = std::abs(bt_loss(1, 0.0) - std::log(2.0));
  const double ln2_err = worst;
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int n = 0; n < 1000; ++n) {
    const double fi = u(gen), fj = u(gen);
    const double si = std::exp(fi), sj = std::exp(fj);
    // y = +1: i beats j with probability s_i / (s_i + s_j); y = -1 flips it.
    worst = std::max(worst, std::abs(std::exp(-bt_loss(1, fi - fj)) - si / (si + sj)));
    worst = std::max(worst, std::abs(std::exp(-bt_loss(-1, fi - fj)) - sj / (si + sj)));
  }
  return {worst <= 1e-12, fmt("|bt_loss(+1,0) - ln2| = %.1e, worst marginal error %.1e", ln2_err,
                              worst)};
}

// ---- comparison-generation oracle -----------------------------------------

using Triple = std::tuple<std::string, std::string, std::uint32_t, int>;

// Every ordered pair, as the definition reads: both images carry the style
// and the count gap strictly exceeds t.
std::map<std::tuple<std::string, std::string, std::uint32_t>, int> brute_labels(
    const AnnotationStore& store, int t) {
  std::map<std::tuple<std::string, std::string, std::uint32_t>, int> out;
  for (std::size_t a = 0; a < store.image_count(); ++a) {
    for (std::size_t b = 0; b < store.image_count(); ++b) {
      if (a == b) continue;
      for (std::uint32_t l = 0; l < 4; ++l) {
        const int ca = store.count(a, StyleId{l}), cb = store.count(b, StyleId{l});
        if (ca < 1 || cb < 1 || std::abs(ca - cb) <= t) continue;
        out[{store.image_id(a), store.image_id(b), l}] = ca > cb ? 1 : -1;
      }
    }
  }
  return out;
}

Outcome comparison_oracle() {
  SyntheticCorpusConfig cfg;
  cfg.image_count = 50;
  cfg.expert_count = 10;
  cfg.feature_dim = 4;
  cfg.expert_noise = 0.4;
  cfg.seed = 303;
  const auto corpus = generate_corpus(cfg);
  const auto store = AnnotationStore::from_annotations(corpus.annotations);

  std::vector<std::string> problems;
  std::set<Triple> previous;
  std::size_t sizes[3] = {};
  for (int t = 1; t <= 3; ++t) {
    const auto brute = brute_labels(store, t);
    std::set<Triple> canonical;
    for (const auto& [key, y] : brute) {
      const auto& [i, j, l] = key;
      auto mirror = brute.find({j, i, l});
      if (mirror == brute.end() || mirror->second != -y) {
        problems.push_back(fmt("t=%d antisymmetry broken at (%s, %s)", t, i.c_str(), j.c_str()));
      }
      if (i < j) canonical.insert({i, j, l, y});
    }
    std::set<Triple> library;
    for (const auto& c : enumerate_comparisons(store, nullptr, std::nullopt, t, std::nullopt)) {
      library.insert({c.i, c.j, c.style.index, c.y});
    }
    if (library != canonical) problems.push_back(fmt("t=%d enumeration differs from brute force", t));
    for (std::uint64_t seed : {1, 2, 3}) {
      for (std::size_t n : {std::size_t(10), canonical.size() / 2, canonical.size() + 50}) {
        if (n == 0) continue;
        const auto sample = sample_comparisons(store, nullptr, {t, n, seed, std::nullopt});
        std::set<Triple> seen;
        for (const auto& c : sample) {
          const Triple key{c.i, c.j, c.style.index, c.y};
          if (!canonical.count(key)) problems.push_back(fmt("t=%d sample outside enumeration", t));
          if (!seen.insert(key).second) problems.push_back(fmt("t=%d duplicate in sample", t));
        }
        if (sample.size() != std::min(n, canonical.size())) {
          problems.push_back(fmt("t=%d sample size %zu for n=%zu", t, sample.size(), n));
        }
      }
    }
    if (t > 1 && !std::includes(previous.begin(), previous.end(), canonical.begin(),
                                canonical.end())) {
      problems.push_back(fmt("enumeration at t=%d is not contained in t=%d", t, t - 1));
    }
    previous = canonical;
    sizes[t - 1] = canonical.size();
  }
  if (sizes[2] == 0) problems.push_back("degenerate corpus: no pairs at t=3");
  return {problems.empty(), problems.empty()
                                ? fmt("eligible pairs t=1/2/3: %zu/%zu/%zu", sizes[0], sizes[1],
                                      sizes[2])
                                : problems.front()};
}

// ---- synthetic recovery ---------------------------------------------------

struct RecoveryRun {
  double pair_ordering = 0.0;
  double comparison_acc = 0.0;
  double baseline_acc = 0.0;
};

RecoveryRun recovery_run(const SyntheticCorpusConfig& cfg, bool with_baseline) {
  const auto corpus = generate_corpus(cfg);
  const auto store = AnnotationStore::from_annotations(corpus.annotations);
  const auto splits = assign_splits(store.image_ids(), {}, cfg.seed);
  const auto comparisons = sample_comparisons(store, &splits, {3, 20000, cfg.seed, Split::Train});
  const auto validation =
      labeled_images(store, &splits, Split::Validation, ValidationSetSpec::clean());
  const auto test = labeled_images(store, &splits, Split::Test, ValidationSetSpec::clean());
  TrainConfig train_cfg;
  train_cfg.seed = cfg.seed;
  const auto trained = train(corpus.features, comparisons, train_cfg, validation);

  RecoveryRun r;
  const auto heldout =
      sample_comparisons(store, &splits, {3, 5000, derive_seed(cfg.seed, 99), Split::Test});
  r.pair_ordering = pair_ordering_accuracy(trained.head, corpus.features, heldout);
  r.comparison_acc = classification_accuracy(trained.head, corpus.features, test).accuracy;
  if (with_baseline) {
    std::vector<StyleMembership> train_labels;
    for (const auto& m : build_style_set(store, ValidationSetSpec::all_labels(4))) {
      if (splits.split_of(store.image_id(m.image)) == Split::Train) train_labels.push_back(m);
    }
    const auto base = baseline_train_discrete(corpus.features, train_labels, store, train_cfg,
                                              validation);
    r.baseline_acc = classification_accuracy(base.head, corpus.features, test).accuracy;
  }
  return r;
}

Outcome synthetic_recovery() {
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticCorpusConfig nominal;
    nominal.seed = seed;
    const auto a = recovery_run(nominal, false);

    SyntheticCorpusConfig noisy = nominal;
    noisy.expert_noise = 0.5;
    noisy.expert_bias = 0.3;
    noisy.feature_noise = 1.5;
    const auto b = recovery_run(noisy, true);

    const bool ok = a.pair_ordering >= 0.90 && b.comparison_acc > b.baseline_acc;
    pass = pass && ok;
    detail += fmt("%sseed %llu: pair-order %.3f, noisy clean acc %.3f vs baseline %.3f",
                  detail.empty() ? "" : "; ", static_cast<unsigned long long>(seed),
                  a.pair_ordering, b.comparison_acc, b.baseline_acc);
  }
  return {pass, detail};
}

// ---- ranking oracles ------------------------------------------------------

struct Catalog {
  FurnitureRegistry registry;
  FeatureTable embeddings{kEmbeddingDim};
  std::map<std::string, std::vector<std::vector<float>>> vectors;  // validated only
};

Catalog ranking_catalog() {
  std::mt19937_64 gen(505);
  const char* classes[] = {"sofa", "table", "lamp", "rug"};
  Catalog c;
  for (int i = 0; i < 20; ++i) {
    FurnitureItem item{fmt("item%02d", i), classes[i % 4], {}, std::nullopt};
    const int images = 1 + static_cast<int>(gen() % 5);
    for (int k = 0; k < images; ++k) {
      const auto image = item.id + fmt("_%d", k);
      const auto v = random_x(gen, kEmbeddingDim);
      c.embeddings.add(image, v);
      item.image_ids.push_back(image);
    }
    c.registry.add_item(item);
    for (int k = 0; k < images; ++k) {
      const bool skip = k == 1 && i % 3 == 0;
      c.registry.record_validation(item.image_ids[k], item.id,
                                   skip ? ValidationStatus::Unknown : ValidationStatus::Similar);
      if (!skip) {
        const auto v = c.embeddings.at(item.image_ids[k]);
        c.vectors[item.id].emplace_back(v.begin(), v.end());
      }
    }
  }
  return c;
}

double oracle_distance(const Catalog& c, const std::string& a, const std::string& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : c.vectors.at(a)) {
    for (const auto& y : c.vectors.at(b)) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += (double(x[k]) - y[k]) * (double(x[k]) - y[k]);
      best = std::min(best, std::sqrt(s));
    }
  }
  return best;
}

Outcome ranking_oracles() {
  const auto c = ranking_catalog();
  const auto index = CompatibilityIndex::build(c.registry, c.embeddings);
  std::vector<std::string> problems;
  std::vector<std::string> ids, classes = {"sofa", "table", "lamp", "rug"};
  for (const auto& item : c.registry.items()) ids.push_back(item.id);
  auto class_of = [&](const std::string& id) { return c.registry.find(id)->class_name; };
  // The index stores f32; the oracle rounds the same way before ranking.
  auto stored = [&](const std::string& a, const std::string& b) {
    return static_cast<float>(oracle_distance(c, a, b));
  };

  for (const auto& a : ids) {
    for (const auto& b : ids) {
      const auto* ia = c.registry.find(a);
      const auto* ib = c.registry.find(b);
      const auto va = c.registry.validated_images(*ia), vb = c.registry.validated_images(*ib);
      if (std::abs(furniture_distance(c.embeddings, va, vb) - oracle_distance(c, a, b)) > 1e-12 ||
          index.distance(a, b) != stored(a, b)) {
        problems.push_back("furniture distance " + a + "/" + b);
      }
    }
  }

  for (const auto& seed : ids) {
    for (const auto& cls : classes) {
      std::vector<std::pair<float, std::string>> brute;
      for (const auto& id : ids) {
        if (id != seed && class_of(id) == cls) brute.emplace_back(stored(seed, id), id);
      }
      std::sort(brute.begin(), brute.end());
      const auto got = rank_single_seed(index, seed, cls, 150);
      bool same = got.size() == brute.size();
      for (std::size_t r = 0; same && r < got.size(); ++r) {
        same = got[r].furniture_id == brute[r].second && got[r].distance == brute[r].first;
      }
      if (!same) problems.push_back("single-seed ranking for " + seed + " in " + cls);

      const std::vector<std::string> one = {seed};
      const auto multi = rank_multi_seed(index, one, cls, 150);
      if (multi.size() != got.size()) problems.push_back("singleton multi-seed size " + seed);
      for (std::size_t r = 0; r < std::min(multi.size(), got.size()); ++r) {
        if (multi[r].furniture_id != got[r].furniture_id) {
          problems.push_back("singleton multi-seed order " + seed);
          break;
        }
      }
      if (scene_energy(index, one) != 0.0) problems.push_back("singleton energy " + seed);
    }
  }

  std::mt19937_64 gen(506);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> scene;
    const std::size_t size = 2 + gen() % 4;
    while (scene.size() < size) {
      const auto& pick = ids[gen() % ids.size()];
      if (std::find(scene.begin(), scene.end(), pick) == scene.end()) scene.push_back(pick);
    }
    double energy = 0.0;
    for (std::size_t a = 0; a < scene.size(); ++a) {
      for (std::size_t b = a + 1; b < scene.size(); ++b) energy += stored(scene[a], scene[b]);
    }
    if (std::abs(scene_energy(index, scene) - energy) > 1e-9 * std::max(1.0, energy)) {
      problems.push_back(fmt("scene energy trial %d", trial));
    }
    const auto& cls = classes[gen() % classes.size()];
    std::vector<std::pair<double, std::string>> brute;
    for (const auto& id : ids) {
      if (class_of(id) != cls || std::find(scene.begin(), scene.end(), id) != scene.end()) continue;
      double sum = 0.0;
      for (const auto& s : scene) sum += stored(s, id);
      brute.emplace_back(sum, id);
    }
    std::sort(brute.begin(), brute.end());
    const auto got = rank_multi_seed(index, scene, cls, 150);
    bool same = got.size() == brute.size();
    for (std::size_t r = 0; same && r < got.size(); ++r) {
      same = got[r].furniture_id == brute[r].second &&
             std::abs(got[r].distance - brute[r].first) <= 1e-9 * std::max(1.0, brute[r].first);
    }
    if (!same) problems.push_back(fmt("multi-seed ranking trial %d", trial));
  }
  return {problems.empty(), problems.empty() ? fmt("%zu items, %zu rankable", ids.size(),
                                                   index.rankable_count())
                                             : problems.front()};
}

// ---- metric oracles -------------------------------------------------------

QueryRelevance query(const std::vector<int>& pattern) {
  QueryRelevance q;
  for (int v : pattern) q.relevant.push_back(v != 0);
  q.total_relevant = static_cast<std::size_t>(std::count(pattern.begin(), pattern.end(), 1));
  return q;
}

Outcome metric_oracles() {
  const auto doc = read_json(fixture("metrics.json"));
  RetrievalRun run;
  for (const auto& r : doc.at("runs")) run.push_back(query(r.get<std::vector<int>>()));
  std::vector<std::string> problems;
  for (const auto& [k, v] : doc.at("recall_at_k").items()) {
    if (recall_at_k(run, std::stoul(k)) != v.get<double>()) problems.push_back("recall@" + k);
  }
  // The fixture evaluates each definition in float64 in rank order, so any
  // deviation is a real difference, not rounding.
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (average_precision(run[i]) != doc["ap"][i].get<double>()) problems.push_back(fmt("AP %zu", i));
    if (average_precision(run[i], 3) != doc["ap_at_3"][i].get<double>()) {
      problems.push_back(fmt("AP@3 %zu", i));
    }
    if (ndcg(run[i]) != doc["ndcg"][i].get<double>()) {
      problems.push_back(fmt("NDCG %zu", i));
    }
    if (ndcg(run[i], 3) != doc["ndcg_at_3"][i].get<double>()) {
      problems.push_back(fmt("NDCG@3 %zu", i));
    }
  }
  if (mean_average_precision(run) != doc["map"].get<double>()) {
    problems.push_back("mAP");
  }

  std::mt19937_64 gen(606);
  for (int trial = 0; trial < 100; ++trial) {
    RetrievalRun random_run;
    for (int q = 0; q < 10; ++q) {
      std::vector<int> p(9);
      for (auto& v : p) v = static_cast<int>(gen() % 4 == 0);
      random_run.push_back(query(p));
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= 9; ++k) {
      const double r = recall_at_k(random_run, k);
      if (r < prev) problems.push_back(fmt("recall decreases at k=%zu, trial %d", k, trial));
      prev = r;
    }
  }
  return {problems.empty(), problems.empty() ? fmt("%zu fixture queries, 100 random runs",
                                                   run.size())
                                             : problems.front()};
}

// ---- agreement formula ----------------------------------------------------

Outcome agreement_formula() {
  const double cell = agreement_cell(46, 100);
  std::vector<std::string> problems;
  if (std::abs(cell - 0.54) > 1e-12) problems.push_back(fmt("cell = %.15f", cell));

  SyntheticCorpusConfig cfg;
  cfg.image_count = 300;
  cfg.feature_dim = 4;
  cfg.expert_noise = 0.3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const auto store = AnnotationStore::from_annotations(generate_corpus(cfg).annotations);
    const auto m = expert_agreement_matrix(store);
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) {
        const double v = m.at(a, b);
        if (v < 0.0 || v > 1.0) problems.push_back("cell out of [0, 1]");
        if (a >= b && v != 0.0) problems.push_back("diagonal or lower triangle not zero");
        if (a < b) {
          std::size_t both = 0, either = 0;
          for (std::size_t i = 0; i < store.image_count(); ++i) {
            const bool x = store.count(i, StyleId{std::uint32_t(a)}) > 0;
            const bool y = store.count(i, StyleId{std::uint32_t(b)}) > 0;
            both += x && y;
            either += x || y;
          }
          const double expect = either ? 1.0 - double(both) / double(either) : 1.0;
          if (std::abs(v - expect) > 1e-15) problems.push_back("cell differs from set oracle");
        }
      }
    }
  }
  return {problems.empty(), problems.empty() ? fmt("cell(46, 100) = %.2f", cell) : problems.front()};
}

// ---- determinism ----------------------------------------------------------

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Furniture registry over the corpus images: three classes, one to three
// images per item, every image Similar.
void write_registry(const std::filesystem::path& features, const std::filesystem::path& out) {
  const auto table = FeatureTable::load(features);
  FurnitureRegistry r;
  std::size_t next = 0, n = 0;
  const char* classes[] = {"sofa", "table", "lamp"};
  while (next < table.size() && n < 60) {
    FurnitureItem item{fmt("item%03zu", n), classes[n % 3], {}, std::nullopt};
    const std::size_t images = 1 + n % 3;
    for (std::size_t k = 0; k < images && next < table.size(); ++k) {
      item.image_ids.push_back(table.id(next++));
    }
    const auto images_copy = item.image_ids;
    r.add_item(std::move(item));
    for (const auto& image : images_copy) {
      r.record_validation(image, fmt("item%03zu", n), ValidationStatus::Similar);
    }
    ++n;
  }
  r.save(out);
}

std::string run_pipeline(const std::filesystem::path& d) {
  const std::string cli = STYLERANK_CLI;
  const std::vector<std::string> steps = {
      cli + " synth --images 400 --dim 32 --annotations " + q(d / "ann.jsonl") + " --features " +
          q(d / "feat.styf") + " --seed 11",
      cli + " ingest --annotations " + q(d / "ann.jsonl") + " --splits " + q(d / "splits.json") +
          " --style-set " + q(d / "styles.json") + " --clean-set " + q(d / "clean.json") +
          " --seed 11",
      cli + " gen-comparisons --annotations " + q(d / "ann.jsonl") + " --splits " +
          q(d / "splits.json") + " --split train --t 2 --n 3000 --out " + q(d / "cmp.jsonl") +
          " --seed 11",
      cli + " train --annotations " + q(d / "ann.jsonl") + " --features " + q(d / "feat.styf") +
          " --comparisons " + q(d / "cmp.jsonl") + " --splits " + q(d / "splits.json") +
          " --epochs 5 --lr 1e-3 --out " + q(d / "head.styh") + " --metrics " +
          q(d / "metrics.jsonl") + " --seed 11",
      cli + " embed --model " + q(d / "head.styh") + " --features " + q(d / "feat.styf") +
          " --out " + q(d / "emb.styf"),
      "",  // registry
      cli + " build-index --registry " + q(d / "registry.json") + " --embeddings " +
          q(d / "emb.styf") + " --out " + q(d / "index.bin"),
      cli + " suggest --index " + q(d / "index.bin") + " --registry " + q(d / "registry.json") +
          " --seed-item item000 --class lamp --k 10 > " + q(d / "suggest.csv"),
      cli + " suggest --index " + q(d / "index.bin") +
          " --seed-item item000 --seed-item item001 --class lamp > " + q(d / "suggest_multi.csv"),
      cli + " eval --model " + q(d / "head.styh") + " --annotations " + q(d / "ann.jsonl") +
          " --features " + q(d / "feat.styf") + " --splits " + q(d / "splits.json") +
          " --split test --out " + q(d / "report.json") + " --csv " + q(d / "report.csv"),
  };
  for (const auto& step : steps) {
    if (step.empty()) {
      write_registry(d / "feat.styf", d / "registry.json");
      continue;
    }
    const bool captures = step.find(" > ") != std::string::npos;
    const auto r = run_command(captures ? step : step + " > /dev/null", true);
    if (r.exit_code != 0) return "step failed: " + step + "\n" + r.out;
  }
  return {};
}

Outcome determinism() {
  TempDir a, b;
  for (const auto* d : {&a, &b}) {
    const auto err = run_pipeline(d->path());
    if (!err.empty()) return {false, err};
  }
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    const auto name = entry.path().filename();
    if (!std::filesystem::exists(b.path() / name)) return {false, "missing " + name.string()};
    const auto x = slurp(entry.path()), y = slurp(b.path() / name);
    if (x != y) return {false, "artifact differs: " + name.string()};
    if (x.empty()) return {false, "empty artifact: " + name.string()};
    ++files;
  }
  return {files >= 14, fmt("%zu artifacts byte-identical", files)};
}

// ---- service latency ------------------------------------------------------

Outcome service_latency() {
  SyntheticCatalogConfig cfg;
  cfg.item_count = 1148;
  cfg.seed = 909;
  const auto catalog = generate_catalog(cfg);
  auto index = std::make_shared<const CompatibilityIndex>(
      CompatibilityIndex::build(catalog.registry, catalog.embeddings));
  SuggestionService service(index);
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  std::thread serving([&] { server.listen_after_bind(); });

  std::vector<std::string> seeds;
  for (const auto& item : index->items()) {
    if (item.slot) seeds.push_back(item.id);
  }
  const auto classes = index->classes();
  std::mt19937_64 gen(910);
  httplib::Client client("127.0.0.1", port);
  client.set_keep_alive(true);

  std::vector<double> ms;
  std::size_t errors = 0;
  const int warmup = 50, total = 2000;
  for (int n = 0; n < warmup + total; ++n) {
    const auto& seed = seeds[gen() % seeds.size()];
    const auto& cls = classes[gen() % classes.size()];
    const auto start = std::chrono::steady_clock::now();
    const auto r = client.Get("/v1/suggest/single?seed=" + seed + "&class=" + cls);
    const auto end = std::chrono::steady_clock::now();
    if (!r || r->status != 200) {
      ++errors;
      continue;
    }
    if (n >= warmup) ms.push_back(std::chrono::duration<double, std::milli>(end - start).count());
  }
  server.stop();
  serving.join();
  if (ms.empty()) return {false, "no successful requests"};
  std::sort(ms.begin(), ms.end());
  auto pct = [&](double p) {
    return ms[std::min(ms.size() - 1, static_cast<std::size_t>(std::ceil(p * ms.size())) - 1)];
  };
  const double p50 = pct(0.50), p99 = pct(0.99);
  return {errors == 0 && p50 < 10.0 && p99 < 50.0,
          fmt("%zu items, %zu requests, p50 %.2f ms, p99 %.2f ms, %zu errors",
              index->items().size(), ms.size(), p50, p99, errors)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double budget_secs;  // infinity when no runtime bound applies
  };
  const double none = std::numeric_limits<double>::infinity();
  const std::vector<Criterion> criteria = {
      {"gradient-oracle", gradient_oracle, 60.0},
      {"loss-identities", loss_identities, none},
      {"comparison-oracle", comparison_oracle, 10.0},
      {"synthetic-recovery", synthetic_recovery, 300.0},
      {"ranking-oracles", ranking_oracles, none},
      {"metric-oracles", metric_oracles, none},
      {"agreement-formula", agreement_formula, none},
      {"determinism", determinism, none},
      {"service-latency", service_latency, none},
  };
  int failed = 0;
  for (const auto& [name, run, budget] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= budget) {
      o.pass = false;
      o.detail += fmt(" (over the %.0fs budget)", budget);
    }
    std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
