#include "stylerank/service.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>

#include "file_util.hpp"
#include "httplib.h"
#include "json.hpp"
#include "stylerank/error.hpp"

namespace stylerank {

namespace {

using Json = nlohmann::json;
using Query = std::map<std::string, std::string, std::less<>>;

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string percent_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out.push_back(' ');
    } else if (s[i] == '%' && i + 2 < s.size() &&
               hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2])));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

Query parse_query(std::string_view text) {
  Query q;
  while (!text.empty()) {
    const auto amp = text.find('&');
    const auto part = text.substr(0, amp);
    if (!part.empty()) {
      const auto eq = part.find('=');
      q[percent_decode(part.substr(0, eq))] =
          eq == std::string_view::npos ? std::string() : percent_decode(part.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    text.remove_prefix(amp + 1);
  }
  return q;
}

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be a non-negative integer");
  }
  return v;
}

HttpResponse json_response(int status, const Json& doc) { return {status, doc.dump()}; }

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Unrankable: return 422;
    case ErrorCode::GenerationMismatch:
    case ErrorCode::StaleIndex: return 409;
    case ErrorCode::InvalidArgument:
    case ErrorCode::Parse:
    case ErrorCode::Duplicate: return 400;
    default: return 500;
  }
}

HttpResponse error_response(int status, std::string_view code, std::string_view message) {
  return json_response(status, {{"error", {{"code", code}, {"message", message}}}});
}

Json parse_body(std::string_view body) {
  try {
    auto doc = Json::parse(body);
    if (!doc.is_object()) throw Error(ErrorCode::Parse, "request body must be a JSON object");
    return doc;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed JSON body: ") + e.what());
  }
}

std::vector<std::string> scene_ids(const Json& body) {
  if (!body.contains("scene") || !body.at("scene").is_array()) {
    throw Error(ErrorCode::InvalidArgument, "body needs a \"scene\" array of furniture ids");
  }
  std::vector<std::string> ids;
  for (const auto& v : body.at("scene")) {
    if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, "scene ids must be strings");
    ids.push_back(v.get<std::string>());
  }
  return ids;
}

Json suggestion_rows(const CompatibilityIndex& index, const std::vector<Suggestion>& ranked) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto* item = index.find(ranked[r].furniture_id);
    rows.push_back({{"rank", r + 1},
                    {"furniture_id", ranked[r].furniture_id},
                    {"class", item->class_name},
                    {"distance", ranked[r].distance},
                    {"thumbnail", item->thumbnail ? Json(*item->thumbnail) : Json(nullptr)}});
  }
  return rows;
}

void check_generation(std::optional<std::uint64_t> pinned, std::uint64_t current) {
  if (pinned && *pinned != current) {
    throw Error(ErrorCode::GenerationMismatch, "request pinned index generation " +
                                                   std::to_string(*pinned) + " but " +
                                                   std::to_string(current) + " is loaded");
  }
}

std::optional<std::uint64_t> pinned_generation(const Query& query) {
  auto it = query.find("generation");
  if (it == query.end()) return std::nullopt;
  return parse_count(it->second, "generation");
}

std::optional<std::uint64_t> pinned_generation(const Json& body) {
  if (!body.contains("generation")) return std::nullopt;
  if (!body.at("generation").is_number_unsigned()) {
    throw Error(ErrorCode::InvalidArgument, "generation must be a non-negative integer");
  }
  return body.at("generation").get<std::uint64_t>();
}

std::size_t body_k(const Json& body) {
  if (!body.contains("k")) return kDefaultSuggestionCount;
  if (!body.at("k").is_number_unsigned()) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  return body.at("k").get<std::size_t>();
}

std::string body_class(const Json& body) {
  if (!body.contains("class") || !body.at("class").is_string()) {
    throw Error(ErrorCode::InvalidArgument, "body needs a \"class\" string");
  }
  return body.at("class").get<std::string>();
}

}  // namespace

SuggestionService::SuggestionService(std::shared_ptr<const CompatibilityIndex> index,
                                     std::optional<std::filesystem::path> scenes_dir)
    : snapshot_{std::move(index), 1}, scenes_dir_(std::move(scenes_dir)) {
  if (!snapshot_.index) throw Error(ErrorCode::InvalidArgument, "service needs an index");
  if (scenes_dir_) {
    std::error_code ec;
    std::filesystem::create_directories(*scenes_dir_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create scene directory " + scenes_dir_->string());
    static const std::regex pattern(R"(scene-(\d+)\.json)");
    for (const auto& entry : std::filesystem::directory_iterator(*scenes_dir_)) {
      std::smatch m;
      const auto name = entry.path().filename().string();
      if (std::regex_match(name, m, pattern)) {
        next_scene_ = std::max<std::uint64_t>(next_scene_, std::stoull(m[1]) + 1);
      }
    }
  }
}

SuggestionService::Snapshot SuggestionService::current() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

std::uint64_t SuggestionService::swap_index(std::shared_ptr<const CompatibilityIndex> index) {
  if (!index) throw Error(ErrorCode::InvalidArgument, "cannot swap in an empty index");
  std::lock_guard lock(snapshot_mutex_);
  snapshot_.index = std::move(index);
  return ++snapshot_.generation;
}

std::uint64_t SuggestionService::generation() const { return current().generation; }

std::shared_ptr<const CompatibilityIndex> SuggestionService::snapshot() const {
  return current().index;
}

HttpResponse SuggestionService::handle(std::string_view method, std::string_view target,
                                       std::string_view body) {
  const auto qpos = target.find('?');
  const std::string path(target.substr(0, qpos));
  const Query query = qpos == std::string_view::npos ? Query{} : parse_query(target.substr(qpos + 1));
  const auto snap = current();
  const auto& index = *snap.index;

  try {
    if (path == "/v1/furniture") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      check_generation(pinned_generation(query), snap.generation);
      std::string cls;
      if (auto it = query.find("class"); it != query.end()) cls = it->second;
      if (!cls.empty() && !index.has_class(cls)) {
        throw Error(ErrorCode::NotFound, "unknown furniture class " + cls);
      }
      std::size_t page = 1;
      if (auto it = query.find("page"); it != query.end()) page = parse_count(it->second, "page");
      if (page < 1) throw Error(ErrorCode::InvalidArgument, "page starts at 1");
      Json items = Json::array();
      std::size_t total = 0;
      for (const auto& item : index.items()) {
        if (!cls.empty() && item.class_name != cls) continue;
        if (total >= (page - 1) * kPageSize && total < page * kPageSize) {
          items.push_back({{"id", item.id},
                           {"class", item.class_name},
                           {"thumbnail", item.thumbnail ? Json(*item.thumbnail) : Json(nullptr)},
                           {"rankable", item.slot.has_value()}});
        }
        ++total;
      }
      return json_response(200, {{"generation", snap.generation},
                                  {"page", page},
                                  {"page_size", kPageSize},
                                  {"total", total},
                                  {"items", items}});
    }

    if (path == "/v1/suggest/single") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      check_generation(pinned_generation(query), snap.generation);
      auto seed = query.find("seed");
      auto cls = query.find("class");
      if (seed == query.end() || cls == query.end()) {
        throw Error(ErrorCode::InvalidArgument, "seed and class are required");
      }
      std::size_t k = kDefaultSuggestionCount;
      if (auto it = query.find("k"); it != query.end()) k = parse_count(it->second, "k");
      const auto ranked = rank_single_seed(index, seed->second, cls->second, k);
      return json_response(200, {{"generation", snap.generation},
                                 {"strategy", "single"},
                                 {"seed", seed->second},
                                 {"class", cls->second},
                                 {"k", k},
                                 {"results", suggestion_rows(index, ranked)}});
    }

    if (path == "/v1/suggest/multi") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      const auto doc = parse_body(body);
      check_generation(pinned_generation(doc), snap.generation);
      const auto scene = scene_ids(doc);
      const auto cls = body_class(doc);
      const auto k = body_k(doc);
      const auto ranked = rank_multi_seed(index, scene, cls, k);
      return json_response(200, {{"generation", snap.generation},
                                 {"strategy", "multi"},
                                 {"scene", scene},
                                 {"class", cls},
                                 {"k", k},
                                 {"results", suggestion_rows(index, ranked)}});
    }

    if (path == "/v1/scene/energy") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      const auto doc = parse_body(body);
      check_generation(pinned_generation(doc), snap.generation);
      const auto scene = scene_ids(doc);
      return json_response(200, {{"generation", snap.generation},
                                 {"scene", scene},
                                 {"energy", scene_energy(index, scene)}});
    }

    if (path == "/v1/scenes") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      return save_scene(body);
    }

    static constexpr std::string_view kScenePrefix = "/v1/scenes/";
    if (path.starts_with(kScenePrefix) && path.size() > kScenePrefix.size()) {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return load_scene(std::string_view(path).substr(kScenePrefix.size()));
    }
  } catch (const Error& e) {
    return error_response(status_for(e.code()), error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
  return error_response(404, "not_found", "no route for " + path);
}

HttpResponse SuggestionService::save_scene(std::string_view body) {
  auto scene = Scene::from_json(parse_body(body));
  const auto snap = current();
  for (const auto& p : scene.placements) {
    if (snap.index->find(p.furniture_id) == nullptr) {
      throw Error(ErrorCode::NotFound, "unknown furniture " + p.furniture_id);
    }
  }
  std::lock_guard lock(scenes_mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene-%06llu", static_cast<unsigned long long>(next_scene_++));
  scene.id = buf;
  const std::string doc = scene.to_json().dump();
  if (scenes_dir_) {
    const auto file = *scenes_dir_ / (scene.id + ".json");
    auto out = detail::open_output(file);
    out << doc << '\n';
    detail::finish_output(out, file);
  }
  scenes_[scene.id] = doc;
  return json_response(201, {{"id", scene.id}});
}

HttpResponse SuggestionService::load_scene(std::string_view id) {
  std::lock_guard lock(scenes_mutex_);
  if (auto it = scenes_.find(std::string(id)); it != scenes_.end()) return {200, it->second};
  static const std::regex pattern(R"(scene-\d+)");
  const std::string key(id);
  if (scenes_dir_ && std::regex_match(key, pattern)) {
    const auto file = *scenes_dir_ / (key + ".json");
    if (std::filesystem::exists(file)) {
      auto doc = Json::parse(detail::read_text(file)).dump();
      scenes_[key] = doc;
      return {200, doc};
    }
  }
  throw Error(ErrorCode::NotFound, "unknown scene " + key);
}

struct HttpServer::Impl {
  SuggestionService& service;
  httplib::Server server;
  bool bound = false;

  explicit Impl(SuggestionService& s) : service(s) {}
};

HttpServer::HttpServer(SuggestionService& service) : impl_(std::make_unique<Impl>(service)) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      target += '?';
      bool first = true;
      for (const auto& [k, v] : req.params) {
        if (!first) target += '&';
        first = false;
        target += httplib::detail::encode_query_param(k) + "=" +
                  httplib::detail::encode_query_param(v);
      }
    }
    auto out = impl_->service.handle(req.method, target, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  // Small JSON replies otherwise stall on Nagle plus delayed ACK (~40 ms).
  impl_->server.set_tcp_nodelay(true);
  impl_->server.Get(R"(/v1/.*)", forward);
  impl_->server.Post(R"(/v1/.*)", forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound_port = -1;
  }
  if (bound_port < 0) {
    throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return bound_port;
}

void HttpServer::listen_after_bind() {
  if (!impl_->bound) throw Error(ErrorCode::InvalidArgument, "bind() before listening");
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace stylerank
