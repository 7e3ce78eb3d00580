#pragma once

// Long-running recommendation service: a snapshot slot that is swapped
// atomically on every rebuild, a periodic rebuild scheduler and an HTTP/JSON
// front end. Readers grab the current generation once per request and never
// wait for a rebuild in progress.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ars/engine.hpp"
#include "ars/error.hpp"
#include "ars/graph.hpp"
#include "ars/ingest.hpp"

namespace ars {

struct ServiceConfig {
  std::vector<SourceSpec> sources;
  BuildOptions build_options;
  std::chrono::seconds rebuild_interval{3600};
  std::string host{"127.0.0.1"};
  int port{8080};
  std::size_t default_limit{10};
  bool use_weights{false};
  // Pre-built edge list served when the initial build fails; also where
  // successful rebuilds are written when `write_graph` is set.
  std::optional<std::filesystem::path> graph;
  bool write_graph{false};
};

/// Reads the pipeline config plus the service keys:
///   "rebuild_interval" (seconds), "listen" ("host:port"), "default_limit",
///   "use_weights", "graph", "write_graph".
inline ServiceConfig load_service_config(const std::filesystem::path& path) {
  auto doc = read_json_file(path);
  auto pipeline = load_pipeline_config(path);
  ServiceConfig cfg;
  cfg.sources = std::move(pipeline.sources);
  cfg.build_options = std::move(pipeline.options);
  try {
    auto interval = doc.value("rebuild_interval", std::int64_t{3600});
    if (interval < 1) throw Error(Errc::config_error, "rebuild_interval must be >= 1");
    cfg.rebuild_interval = std::chrono::seconds(interval);
    auto limit = doc.value("default_limit", std::int64_t{10});
    if (limit < 1) throw Error(Errc::config_error, "default_limit must be >= 1");
    cfg.default_limit = static_cast<std::size_t>(limit);
    cfg.use_weights = doc.value("use_weights", false);
    cfg.write_graph = doc.value("write_graph", false);
    if (doc.contains("graph")) {
      std::filesystem::path graph = doc["graph"].get<std::string>();
      cfg.graph = graph.is_relative() ? path.parent_path() / graph : graph;
    }
    if (doc.contains("listen")) {
      auto listen = doc["listen"].get<std::string>();
      auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error(Errc::config_error, "listen must be host:port");
      cfg.host = listen.substr(0, colon);
      int port = -1;
      if (!detail::parse_uint(std::string_view(listen).substr(colon + 1), port) || port > 65535)
        throw Error(Errc::config_error, "bad listen port");
      cfg.port = port;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, std::string("bad service config: ") + e.what());
  }
  return cfg;
}

/// One published generation. Everything a query needs travels together so a
/// reader never mixes two generations.
struct Published {
  std::uint64_t generation{0};
  GraphSnapshot snapshot;
  std::optional<IdMaps> maps;
};

struct LastBuild {
  bool ok{false};
  std::string error;
  std::uint64_t generation{0};
  IngestReport report;
};

enum class RebuildStatus { Ok, Busy, Failed };

struct RebuildOutcome {
  RebuildStatus status{RebuildStatus::Failed};
  std::uint64_t generation{0};
  std::string error;
};

using Rebuilder = std::function<BuildResult()>;

class SnapshotSlot {
 public:
  std::shared_ptr<const Published> current() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  std::uint64_t generation() const {
    auto cur = current();
    return cur ? cur->generation : 0;
  }

  LastBuild last_build() const {
    std::lock_guard lock(mu_);
    return last_;
  }

  std::uint64_t publish(GraphSnapshot snapshot, std::optional<IdMaps> maps,
                        IngestReport report = {}) {
    auto next = std::make_shared<Published>();
    next->snapshot = std::move(snapshot);
    next->maps = std::move(maps);
    std::lock_guard lock(mu_);
    next->generation = (current_ ? current_->generation : 0) + 1;
    current_ = std::move(next);
    last_ = LastBuild{true, {}, current_->generation, std::move(report)};
    return current_->generation;
  }

  /// Runs `rebuild` unless another rebuild holds the slot. The slot is only
  /// touched after a complete, successful build.
  RebuildOutcome trigger_rebuild(const Rebuilder& rebuild) {
    bool expected = false;
    if (!building_.compare_exchange_strong(expected, true)) {
      return {RebuildStatus::Busy, generation(), std::string(to_string(Errc::busy))};
    }
    struct Release {
      std::atomic<bool>& flag;
      ~Release() { flag.store(false); }
    } release{building_};

    try {
      auto result = rebuild();
      auto gen = publish(std::move(result.snapshot), std::move(result.maps),
                         std::move(result.report));
      return {RebuildStatus::Ok, gen, {}};
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      auto gen = current_ ? current_->generation : 0;
      last_ = LastBuild{false, e.what(), gen, {}};
      return {RebuildStatus::Failed, gen, e.what()};
    }
  }

  bool rebuilding() const noexcept { return building_.load(); }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Published> current_;
  LastBuild last_;
  std::atomic<bool> building_{false};
};

inline RebuildOutcome trigger_rebuild(SnapshotSlot& slot, const std::vector<SourceSpec>& sources,
                                      const BuildOptions& options = {}) {
  return slot.trigger_rebuild([&] { return build_graph(sources, options); });
}

namespace detail {

inline void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline nlohmann::json items_json(const RecommendationVector& vec, const Published& pub,
                                 bool raw) {
  auto items = nlohmann::json::array();
  for (const auto& r : vec) {
    nlohmann::json obj = r.object.value;
    if (raw && pub.maps) {
      if (auto key = pub.maps->raw_object(r.object)) obj = *key;
    }
    items.push_back({{"object", std::move(obj)}, {"score", r.score}});
  }
  return items;
}

inline nlohmann::json stats_json(const GraphSnapshot& s, std::uint64_t generation) {
  auto st = stats(s);
  auto per_class = nlohmann::json::array();
  for (const auto& [cls, c] : st.per_class) {
    per_class.push_back(
        {{"class_id", cls.value}, {"kernels", c.kernel_count}, {"objects", c.object_count}});
  }
  return {{"generation", generation},      {"count_objects", st.count_objects},
          {"count_kernels", st.count_kernels}, {"count_nodes", st.count_nodes},
          {"count_arcs", st.count_arcs},     {"count_classes", st.count_classes},
          {"per_class", std::move(per_class)}};
}

}  // namespace detail

class RecommendationService {
 public:
  explicit RecommendationService(ServiceConfig config, Rebuilder rebuilder = {})
      : config_(std::move(config)), rebuilder_(std::move(rebuilder)) {
    if (!rebuilder_) {
      rebuilder_ = [this] {
        auto result = build_graph(config_.sources, config_.build_options);
        if (config_.write_graph && config_.graph) save_bundle(result, *config_.graph);
        return result;
      };
    }
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    // No SO_REUSEPORT: a second instance on the same port must fail to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes),
                 sizeof(yes));
    });
    routes();
  }

  ~RecommendationService() { stop(); }

  RecommendationService(const RecommendationService&) = delete;
  RecommendationService& operator=(const RecommendationService&) = delete;

  SnapshotSlot& slot() noexcept { return slot_; }
  const ServiceConfig& config() const noexcept { return config_; }
  int port() const noexcept { return port_; }

  /// Binds the listening socket (port 0 picks a free port).
  int bind() {
    if (config_.port == 0) {
      port_ = server_.bind_to_any_port(config_.host);
    } else if (server_.bind_to_port(config_.host, config_.port)) {
      port_ = config_.port;
    } else {
      port_ = -1;
    }
    if (port_ <= 0) {
      throw Error(Errc::io_error, "cannot bind " + config_.host + ":" +
                                      std::to_string(config_.port));
    }
    return port_;
  }

  /// Starts the listener and the scheduler. The first action of the
  /// scheduler is the initial build; until it lands, queries answer 503.
  void start(bool schedule = true) {
    if (port_ <= 0) bind();
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    if (schedule) scheduler_ = std::thread([this] { run_scheduler(); });
  }

  void stop() {
    {
      std::lock_guard lock(stop_mu_);
      stopping_ = true;
    }
    stop_cv_.notify_all();
    if (scheduler_.joinable()) scheduler_.join();
    server_.stop();
    if (listener_.joinable()) listener_.join();
  }

  RebuildOutcome rebuild() { return slot_.trigger_rebuild(rebuilder_); }

 private:
  void run_scheduler() {
    auto first = rebuild();
    if (first.status == RebuildStatus::Failed && slot_.generation() == 0 && config_.graph) {
      try {
        auto bundle = load_bundle(*config_.graph);
        slot_.publish(std::move(bundle.snapshot), std::move(bundle.maps));
      } catch (const std::exception& e) {
        std::fprintf(stderr, "fallback graph unusable: %s\n", e.what());
      }
    }
    if (first.status == RebuildStatus::Failed) {
      std::fprintf(stderr, "initial build failed: %s\n", first.error.c_str());
    }
    std::unique_lock lock(stop_mu_);
    while (!stopping_) {
      if (stop_cv_.wait_for(lock, config_.rebuild_interval, [this] { return stopping_; })) break;
      lock.unlock();
      auto outcome = rebuild();
      if (outcome.status == RebuildStatus::Failed) {
        std::fprintf(stderr, "rebuild failed, keeping generation %llu: %s\n",
                     static_cast<unsigned long long>(outcome.generation), outcome.error.c_str());
      }
      lock.lock();
    }
  }

  // Parses `top`; nullopt after replying 400.
  std::optional<std::size_t> limit_param(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("top")) return config_.default_limit;
    std::size_t top = 0;
    if (!detail::parse_uint(std::string_view(req.get_param_value("top")), top)) {
      detail::reply(res, 400, {{"error", "top must be a non-negative integer"}});
      return std::nullopt;
    }
    return top;
  }

  bool weighted_param(const httplib::Request& req) const {
    if (!req.has_param("weighted")) return config_.use_weights;
    auto v = req.get_param_value("weighted");
    return v == "1" || v == "true";
  }

  static bool raw_param(const httplib::Request& req) {
    return req.has_param("raw") &&
           (req.get_param_value("raw") == "1" || req.get_param_value("raw") == "true");
  }

  std::shared_ptr<const Published> ready(httplib::Response& res) const {
    auto pub = slot_.current();
    if (!pub) detail::reply(res, 503, {{"error", "not ready"}});
    return pub;
  }

  // Resolves an id token; replies and returns nullopt on failure.
  static std::optional<ObjectId> resolve(const Published& pub, const std::string& token,
                                         bool raw, httplib::Response& res) {
    if (raw) {
      if (!pub.maps) {
        detail::reply(res, 400, {{"error", "no raw key mapping loaded"}});
        return std::nullopt;
      }
      auto id = pub.maps->find_object(token);
      if (!id) {
        detail::reply(res, 404, {{"error", "object not found"}, {"object", token}});
        return std::nullopt;
      }
      return id;
    }
    ObjectId id;
    if (!detail::parse_uint(std::string_view(token), id.value)) {
      detail::reply(res, 400, {{"error", "object id must be an integer"}, {"object", token}});
      return std::nullopt;
    }
    return id;
  }

  void routes() {
    server_.Get(R"(/recommend/([^/]+))", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      auto pub = ready(res);
      if (!pub) return;
      auto limit = limit_param(req, res);
      if (!limit) return;
      bool raw = raw_param(req);
      auto anchor = resolve(*pub, req.matches[1], raw, res);
      if (!anchor) return;
      try {
        auto vec = recommend(pub->snapshot, *anchor, *limit, weighted_param(req));
        nlohmann::json object = anchor->value;
        if (raw) object = std::string(req.matches[1]);
        detail::reply(res, 200,
                      {{"object", std::move(object)},
                       {"generation", pub->generation},
                       {"items", detail::items_json(vec, *pub, raw)}});
      } catch (const Error& e) {
        detail::reply(res, e.code() == Errc::object_not_found ? 404 : 400,
                      {{"error", "object not found"}, {"object", anchor->value}});
      }
    });

    server_.Get("/recommend", [this](const httplib::Request& req, httplib::Response& res) {
      auto pub = ready(res);
      if (!pub) return;
      if (!req.has_param("path")) {
        detail::reply(res, 400, {{"error", "path parameter required"}});
        return;
      }
      auto limit = limit_param(req, res);
      if (!limit) return;
      bool raw = raw_param(req);
      std::vector<ObjectId> seeds;
      auto path = req.get_param_value("path");
      auto tokens = nlohmann::json::array();
      for (std::size_t pos = 0;;) {
        auto comma = path.find(',', pos);
        auto token = path.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        auto id = resolve(*pub, token, raw, res);
        if (!id) return;
        seeds.push_back(*id);
        tokens.push_back(raw ? nlohmann::json(token) : nlohmann::json(id->value));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      try {
        auto vec = recommend_for_path(pub->snapshot, SeedSet(std::move(seeds)), *limit,
                                      weighted_param(req));
        detail::reply(res, 200,
                      {{"path", std::move(tokens)},
                       {"generation", pub->generation},
                       {"items", detail::items_json(vec, *pub, raw)}});
      } catch (const Error& e) {
        int status = e.code() == Errc::object_not_found ? 404 : 400;
        detail::reply(res, status, {{"error", e.what()}});
      }
    });

    server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      auto pub = ready(res);
      if (!pub) return;
      detail::reply(res, 200, detail::stats_json(pub->snapshot, pub->generation));
    });

    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      auto pub = slot_.current();
      auto last = slot_.last_build();
      nlohmann::json body{{"status", pub ? "ok" : "not ready"},
                          {"generation", pub ? pub->generation : 0},
                          {"rebuilding", slot_.rebuilding()},
                          {"last_build_ok", last.ok}};
      if (!last.ok && !last.error.empty()) body["last_build_error"] = last.error;
      detail::reply(res, pub ? 200 : 503, body);
    });

    server_.Post("/rebuild", [this](const httplib::Request&, httplib::Response& res) {
      auto outcome = rebuild();
      switch (outcome.status) {
        case RebuildStatus::Ok:
          detail::reply(res, 200, {{"status", "ok"}, {"generation", outcome.generation}});
          break;
        case RebuildStatus::Busy:
          detail::reply(res, 409, {{"status", "rejected-busy"}, {"generation", outcome.generation}});
          break;
        case RebuildStatus::Failed:
          detail::reply(res, 500, {{"status", "failed"},
                                   {"generation", outcome.generation},
                                   {"error", outcome.error}});
          break;
      }
    });
  }

  ServiceConfig config_;
  Rebuilder rebuilder_;
  SnapshotSlot slot_;
  httplib::Server server_;
  int port_{0};
  std::thread listener_;
  std::thread scheduler_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_{false};
};

}  // namespace ars
