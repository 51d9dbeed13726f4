#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "stylerank/compat.hpp"

namespace stylerank {

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

// Stateless /v1 suggestion API over an immutable index snapshot. Transport
// agnostic: handle() takes the method, request target and body.
//
//   GET  /v1/furniture?class=&page=          catalog page (50 per page)
//   GET  /v1/suggest/single?seed=&class=&k=  single-seed ranking
//   POST /v1/suggest/multi  {scene, class, k} multi-seed ranking
//   POST /v1/scene/energy   {scene}          scene energy
//   POST /v1/scenes         {name, placements} save, returns {id}
//   GET  /v1/scenes/{id}                     load
//
// Any request may pin `generation` (query or body); a mismatch is 409.
class SuggestionService {
 public:
  static constexpr std::size_t kPageSize = 50;

  // Scenes persist as <scenes_dir>/<id>.json when a directory is given.
  explicit SuggestionService(std::shared_ptr<const CompatibilityIndex> index,
                             std::optional<std::filesystem::path> scenes_dir = std::nullopt);

  HttpResponse handle(std::string_view method, std::string_view target, std::string_view body);

  // Atomically replaces the snapshot; in-flight requests keep the old one.
  std::uint64_t swap_index(std::shared_ptr<const CompatibilityIndex> index);
  std::uint64_t generation() const;
  std::shared_ptr<const CompatibilityIndex> snapshot() const;

 private:
  struct Snapshot {
    std::shared_ptr<const CompatibilityIndex> index;
    std::uint64_t generation = 0;
  };
  Snapshot current() const;

  HttpResponse save_scene(std::string_view body);
  HttpResponse load_scene(std::string_view id);

  mutable std::mutex snapshot_mutex_;
  Snapshot snapshot_;

  std::mutex scenes_mutex_;
  std::optional<std::filesystem::path> scenes_dir_;
  std::map<std::string, std::string> scenes_;  // id -> JSON document
  std::uint64_t next_scene_ = 1;
};

// Blocking HTTP/1.1 front end for a SuggestionService.
class HttpServer {
 public:
  explicit HttpServer(SuggestionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 binds an ephemeral port. Returns the bound port; throws Io.
  int bind(const std::string& host, int port);
  // Serves until stop(). bind() must have succeeded.
  void listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stylerank
