// stylerank-cli: pipeline driver over the stylerank C API.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "stylerank/stylerank.h"

namespace {

struct Failure {
  sr_status status;
  std::string message;
};

void check(sr_status s) {
  if (s != SR_OK) throw Failure{s, sr_last_error_message()};
}

void usage_error(const std::string& message) { throw Failure{SR_INVALID_ARGUMENT, message}; }

void print_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<sr_dataset, Deleter<sr_dataset, sr_dataset_free>>;
using Head = std::unique_ptr<sr_head, Deleter<sr_head, sr_head_free>>;
using Index = std::unique_ptr<sr_index, Deleter<sr_index, sr_index_free>>;
using Ranking = std::unique_ptr<sr_ranking, Deleter<sr_ranking, sr_ranking_free>>;
using Service = std::unique_ptr<sr_service, Deleter<sr_service, sr_service_free>>;

Dataset load_dataset(const std::string& path) {
  sr_dataset* d = nullptr;
  check(sr_dataset_load(path.c_str(), &d));
  return Dataset(d);
}

Head load_head(const std::string& path) {
  sr_head* h = nullptr;
  check(sr_head_load(path.c_str(), &h));
  return Head(h);
}

Index load_index(const std::string& path, const std::string& registry) {
  sr_index* i = nullptr;
  check(sr_index_load(path.c_str(), &i));
  Index index(i);
  if (!registry.empty()) check(sr_index_check_registry(index.get(), registry.c_str()));
  return index;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

std::string env_name(const std::string& flag) {
  std::string out = "STYLERANK_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return out;
}

// Every flag can also come from STYLERANK_<FLAG>.
template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option("--" + name, value, help)->envname(env_name(name));
}

CLI::Option* switch_flag(CLI::App* app, const std::string& name, bool& value,
                         const std::string& help) {
  return app->add_flag("--" + name, value, help)->envname(env_name(name));
}

CLI::Option* seed_flag(CLI::App* app, std::uint64_t& seed) {
  return flag(app, "seed", seed, "RNG seed")->required();
}

void add_train_flags(CLI::App* app, sr_train_options& o, bool& logit_difference) {
  flag(app, "lr", o.learning_rate, "RMSProp learning rate")->capture_default_str();
  flag(app, "lambda", o.lambda, "L2 weight")->capture_default_str();
  flag(app, "rho", o.rmsprop_decay, "RMSProp decay")->capture_default_str();
  flag(app, "batch", o.batch_size, "minibatch size")->capture_default_str();
  flag(app, "epochs", o.max_epochs, "maximum epochs")->capture_default_str();
  flag(app, "patience", o.early_stop_patience, "early-stop patience")->capture_default_str();
  switch_flag(app, "logit-difference", logit_difference, "score pairs on raw logits");
}

void stop_on_signal(sr_service* service) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  sr_service_stop(service);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-compatibility pipeline: annotations to comparisons, training, "
               "embeddings, compatibility index and suggestions"};
  app.set_config("--config", "", "key = value configuration file");
  app.require_subcommand(1);
  app.set_version_flag("--version", sr_version());

  // synth
  sr_synth_options synth;
  sr_synth_options_default(&synth);
  bool separable = false;
  std::string annotations, features, out;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic annotated corpus");
  flag(c_synth, "images", synth.image_count, "image count")->capture_default_str();
  flag(c_synth, "experts", synth.expert_count, "expert count")->capture_default_str();
  flag(c_synth, "dim", synth.feature_dim, "feature dimension")->capture_default_str();
  flag(c_synth, "dominance", synth.dominance, "dominant style weight")->capture_default_str();
  flag(c_synth, "spread", synth.mixture_spread, "mixture spread")->capture_default_str();
  flag(c_synth, "expert-noise", synth.expert_noise, "expert label noise")->capture_default_str();
  flag(c_synth, "expert-bias", synth.expert_bias, "expert style lean")->capture_default_str();
  flag(c_synth, "feature-noise", synth.feature_noise, "feature noise")->capture_default_str();
  switch_flag(c_synth, "separable", separable, "features carry the dominant style only");
  flag(c_synth, "annotations", annotations, "output annotations JSONL")->required();
  flag(c_synth, "features", features, "output feature table")->required();
  seed_flag(c_synth, synth.seed);

  // synth-catalog
  std::size_t items = 1148, max_images = 4;
  double similar_fraction = 1.0;
  std::uint64_t seed = 0;
  std::string registry, embeddings;
  auto* c_catalog = app.add_subcommand("synth-catalog", "generate a synthetic furniture catalog");
  flag(c_catalog, "items", items, "furniture items")->capture_default_str();
  flag(c_catalog, "max-images", max_images, "max scene images per item")->capture_default_str();
  flag(c_catalog, "similar-fraction", similar_fraction, "share of validated items")
      ->capture_default_str();
  flag(c_catalog, "registry", registry, "output registry JSON")->required();
  flag(c_catalog, "embeddings", embeddings, "output embedding table")->required();
  seed_flag(c_catalog, seed);

  // ingest
  double f_train = 0.8, f_val = 0.1, f_test = 0.1;
  std::string splits, style_set, clean_set;
  auto* c_ingest = app.add_subcommand("ingest", "validate annotations and assign splits");
  flag(c_ingest, "annotations", annotations, "annotations JSONL")->required()->check(CLI::ExistingFile);
  flag(c_ingest, "splits", splits, "output split assignment JSON")->required();
  flag(c_ingest, "train-fraction", f_train, "train share")->capture_default_str();
  flag(c_ingest, "val-fraction", f_val, "validation share")->capture_default_str();
  flag(c_ingest, "test-fraction", f_test, "test share")->capture_default_str();
  flag(c_ingest, "style-set", style_set, "output all-labels style set JSON");
  flag(c_ingest, "clean-set", clean_set, "output clean style set JSON");
  seed_flag(c_ingest, seed);

  // gen-comparisons
  int threshold = 3;
  std::size_t count = 0;
  std::string split;
  auto* c_cmp = app.add_subcommand("gen-comparisons", "sample comparison labels");
  flag(c_cmp, "annotations", annotations, "annotations JSONL")->required()->check(CLI::ExistingFile);
  flag(c_cmp, "splits", splits, "split assignment JSON");
  flag(c_cmp, "split", split, "restrict to one split (train, validation, test)");
  flag(c_cmp, "t", threshold, "count margin threshold")->capture_default_str();
  flag(c_cmp, "n", count, "comparisons to sample")->required();
  flag(c_cmp, "out", out, "output comparisons JSONL")->required();
  seed_flag(c_cmp, seed);

  // train
  sr_train_options train;
  sr_train_options_default(&train);
  bool logit_difference = false;
  std::string comparisons, metrics;
  auto* c_train = app.add_subcommand("train", "train the style head on comparisons");
  flag(c_train, "annotations", annotations, "annotations JSONL")->required()->check(CLI::ExistingFile);
  flag(c_train, "features", features, "feature table")->required()->check(CLI::ExistingFile);
  flag(c_train, "comparisons", comparisons, "comparisons JSONL")->required()->check(CLI::ExistingFile);
  flag(c_train, "splits", splits, "split assignment JSON (enables validation)");
  flag(c_train, "out", out, "output checkpoint")->required();
  flag(c_train, "metrics", metrics, "per-epoch metrics JSONL");
  add_train_flags(c_train, train, logit_difference);
  seed_flag(c_train, train.seed);

  // grid-search
  std::string grid, report;
  auto* c_grid = app.add_subcommand("grid-search", "pick lambda, t and comparison count by validation accuracy");
  flag(c_grid, "annotations", annotations, "annotations JSONL")->required()->check(CLI::ExistingFile);
  flag(c_grid, "features", features, "feature table")->required()->check(CLI::ExistingFile);
  flag(c_grid, "splits", splits, "split assignment JSON")->required()->check(CLI::ExistingFile);
  flag(c_grid, "grid", grid, "grid JSON {lambdas, thresholds, comparison_counts}");
  flag(c_grid, "report", report, "output grid report JSON")->required();
  flag(c_grid, "out", out, "output checkpoint of the best cell");
  add_train_flags(c_grid, train, logit_difference);
  seed_flag(c_grid, train.seed);

  // embed
  std::string model;
  auto* c_embed = app.add_subcommand("embed", "compute 16-d style embeddings");
  flag(c_embed, "model", model, "checkpoint")->required()->check(CLI::ExistingFile);
  flag(c_embed, "features", features, "feature table")->required()->check(CLI::ExistingFile);
  flag(c_embed, "out", out, "output embedding table")->required();

  // build-index
  auto* c_index = app.add_subcommand("build-index", "precompute furniture distances");
  flag(c_index, "registry", registry, "furniture registry JSON")->required()->check(CLI::ExistingFile);
  flag(c_index, "embeddings", embeddings, "image embedding table")->required()->check(CLI::ExistingFile);
  flag(c_index, "out", out, "output index")->required();

  // eval
  std::string csv;
  auto* c_eval = app.add_subcommand("eval", "classification and retrieval report");
  flag(c_eval, "model", model, "checkpoint")->required()->check(CLI::ExistingFile);
  flag(c_eval, "annotations", annotations, "annotations JSONL")->required()->check(CLI::ExistingFile);
  flag(c_eval, "features", features, "feature table")->required()->check(CLI::ExistingFile);
  flag(c_eval, "splits", splits, "split assignment JSON");
  flag(c_eval, "split", split, "split to evaluate");
  flag(c_eval, "out", out, "output report JSON")->required();
  flag(c_eval, "csv", csv, "output report CSV");

  // suggest
  std::string index_path, class_name;
  std::vector<std::string> seed_items;
  std::size_t k = 150;
  auto* c_suggest = app.add_subcommand("suggest", "rank furniture of a class against seed items");
  flag(c_suggest, "index", index_path, "compatibility index")->required()->check(CLI::ExistingFile);
  flag(c_suggest, "registry", registry, "registry to check the index against");
  flag(c_suggest, "seed-item", seed_items, "seed furniture id; repeat for a scene")->required();
  flag(c_suggest, "class", class_name, "candidate class")->required();
  flag(c_suggest, "k", k, "suggestions to return")->capture_default_str();

  // serve
  std::string host = "127.0.0.1", scenes_dir;
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "serve the /v1 HTTP API");
  flag(c_serve, "index", index_path, "compatibility index")->required()->check(CLI::ExistingFile);
  flag(c_serve, "registry", registry, "registry to check the index against");
  flag(c_serve, "host", host, "bind address")->capture_default_str();
  flag(c_serve, "port", port, "bind port (0 picks one)")->capture_default_str();
  flag(c_serve, "scenes-dir", scenes_dir, "directory for saved scenes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  train.logit_difference = logit_difference ? 1 : 0;
  synth.separable = separable ? 1 : 0;

  try {
    if (c_synth->parsed()) {
      check(sr_synth_corpus(&synth, annotations.c_str(), features.c_str()));
    } else if (c_catalog->parsed()) {
      check(sr_synth_catalog(items, max_images, similar_fraction, seed, registry.c_str(),
                             embeddings.c_str()));
    } else if (c_ingest->parsed()) {
      auto dataset = load_dataset(annotations);
      check(sr_dataset_assign_splits(dataset.get(), f_train, f_val, f_test, seed, splits.c_str()));
      if (!style_set.empty()) check(sr_dataset_write_style_set(dataset.get(), 0, style_set.c_str()));
      if (!clean_set.empty()) check(sr_dataset_write_style_set(dataset.get(), 1, clean_set.c_str()));
      char* summary = nullptr;
      check(sr_dataset_summary(dataset.get(), &summary));
      std::cout << summary << '\n';
      sr_string_free(summary);
    } else if (c_cmp->parsed()) {
      if (!split.empty() && splits.empty()) usage_error("--split needs --splits");
      auto dataset = load_dataset(annotations);
      std::size_t written = 0;
      check(sr_generate_comparisons(dataset.get(), opt(splits), opt(split), threshold, count, seed,
                                    out.c_str(), &written));
      std::cout << nlohmann::json{{"comparisons", written}, {"out", out}}.dump() << '\n';
    } else if (c_train->parsed()) {
      auto dataset = load_dataset(annotations);
      std::ofstream log;
      if (!metrics.empty()) {
        log.open(metrics, std::ios::trunc);
        if (!log) throw Failure{SR_IO, "cannot write " + metrics};
      }
      auto on_epoch = [](const sr_epoch_metrics* m, void* user) {
        auto* log = static_cast<std::ofstream*>(user);
        if (log->is_open()) *log << m->line << '\n';
        std::cerr << m->line << '\n';
      };
      sr_head* h = nullptr;
      check(sr_train(dataset.get(), features.c_str(), comparisons.c_str(), opt(splits), &train,
                     on_epoch, &log, &h));
      Head head(h);
      check(sr_head_save(head.get(), out.c_str()));
    } else if (c_grid->parsed()) {
      auto dataset = load_dataset(annotations);
      sr_head* h = nullptr;
      check(sr_grid_search(dataset.get(), features.c_str(), splits.c_str(), opt(grid), &train,
                           report.c_str(), &h));
      Head head(h);
      if (!out.empty()) check(sr_head_save(head.get(), out.c_str()));
    } else if (c_embed->parsed()) {
      auto head = load_head(model);
      check(sr_embed(head.get(), features.c_str(), out.c_str()));
    } else if (c_index->parsed()) {
      sr_index* i = nullptr;
      check(sr_index_build(registry.c_str(), embeddings.c_str(), &i));
      Index index(i);
      check(sr_index_save(index.get(), out.c_str()));
      std::cout << nlohmann::json{{"items", sr_index_item_count(index.get())},
                                  {"rankable", sr_index_rankable_count(index.get())}}
                       .dump()
                << '\n';
    } else if (c_eval->parsed()) {
      if (!split.empty() && splits.empty()) usage_error("--split needs --splits");
      auto head = load_head(model);
      auto dataset = load_dataset(annotations);
      check(sr_evaluate(head.get(), dataset.get(), features.c_str(), opt(splits), opt(split),
                        out.c_str(), opt(csv)));
    } else if (c_suggest->parsed()) {
      auto index = load_index(index_path, registry);
      sr_ranking* r = nullptr;
      if (seed_items.size() == 1) {
        check(sr_rank_single(index.get(), seed_items[0].c_str(), class_name.c_str(), k, &r));
      } else {
        std::vector<const char*> scene;
        for (const auto& s : seed_items) scene.push_back(s.c_str());
        check(sr_rank_multi(index.get(), scene.data(), scene.size(), class_name.c_str(), k, &r));
      }
      Ranking ranking(r);
      for (std::size_t i = 0; i < sr_ranking_size(ranking.get()); ++i) {
        std::printf("%zu,%s,%.6f\n", i + 1, sr_ranking_id(ranking.get(), i),
                    sr_ranking_distance(ranking.get(), i));
      }
    } else if (c_serve->parsed()) {
      auto index = load_index(index_path, registry);
      sr_service* s = nullptr;
      check(sr_service_create(index.get(), opt(scenes_dir), &s));
      Service service(s);
      index.reset();

      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);

      int bound = 0;
      check(sr_service_bind(service.get(), host.c_str(), port, &bound));
      std::cerr << nlohmann::json{{"listening", host + ":" + std::to_string(bound)}}.dump()
                << std::endl;
      std::thread waiter(stop_on_signal, service.get());
      const sr_status st = sr_service_run(service.get());
      pthread_kill(waiter.native_handle(), SIGTERM);
      waiter.join();
      check(st);
    }
  } catch (const Failure& f) {
    print_error(sr_status_name(f.status), f.message);
    return 1;
  }
  return 0;
}
