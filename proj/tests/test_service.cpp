#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <future>
#include <latch>
#include <thread>

#include "ars/service.hpp"
#include "fixtures.hpp"

using namespace ars;
using namespace ars::testing;
using namespace std::chrono_literals;

namespace {

BuildResult f1_result() {
  BuildResult r;
  r.snapshot = make_f1();
  for (std::uint32_t o = 1; o <= 5; ++o) r.maps.add_object({O(o), "sku-" + std::to_string(o)});
  return r;
}

// Graph for build number n: o1 shares n kernels with o2 and n with o3, so a
// reader can tell which build produced an answer.
BuildResult tagged_result(std::uint32_t n) {
  GraphBuilder b;
  b.declare_class({C(1), "x", ClassKind::Behavioural, 1});
  std::uint32_t k = 1;
  for (std::uint32_t i = 0; i < n; ++i) {
    b.add_arc(J(k), O(1), C(1));
    b.add_arc(J(k++), O(2), C(1));
    b.add_arc(J(k), O(1), C(1));
    b.add_arc(J(k++), O(3), C(1));
  }
  return BuildResult{b.freeze(), {}, {}};
}

ServiceConfig test_config() {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.rebuild_interval = 3600s;
  return cfg;
}

void wait_for_generation(SnapshotSlot& slot, std::uint64_t g) {
  for (int i = 0; i < 500 && slot.generation() < g; ++i) std::this_thread::sleep_for(10ms);
  ASSERT_GE(slot.generation(), g);
}

nlohmann::json body(const httplib::Result& res) { return nlohmann::json::parse(res->body); }

}  // namespace

TEST(SnapshotSlot, GenerationsAndFailures) {
  TempDir dir;
  auto orders = dir.write("orders.csv", "a,1\na,2\n");
  std::vector<SourceSpec> good{{C(1), "orders", ClassKind::Behavioural, 1, orders, SourceFormat::Csv}};
  std::vector<SourceSpec> bad{{C(1), "orders", ClassKind::Behavioural, 1, dir.path / "missing.csv",
                               SourceFormat::Csv}};

  SnapshotSlot slot;
  EXPECT_EQ(slot.generation(), 0u);
  EXPECT_FALSE(slot.current());

  EXPECT_EQ(trigger_rebuild(slot, good).generation, 1u);
  auto outcome = trigger_rebuild(slot, good);
  EXPECT_EQ(outcome.status, RebuildStatus::Ok);
  EXPECT_EQ(outcome.generation, 2u);
  auto before = slot.current();

  outcome = trigger_rebuild(slot, bad);
  EXPECT_EQ(outcome.status, RebuildStatus::Failed);
  EXPECT_EQ(outcome.generation, 2u);
  EXPECT_EQ(slot.current(), before);
  EXPECT_FALSE(slot.last_build().ok);
  EXPECT_NE(slot.last_build().error.find("missing.csv"), std::string::npos);
  EXPECT_EQ(slot.current()->snapshot.arc_count(), 2u);
}

TEST(SnapshotSlot, ConcurrentTriggersExactlyOneRuns) {
  SnapshotSlot slot;
  std::promise<void> release;
  auto gate = release.get_future().share();
  std::latch entered(1);
  auto slow = [&] {
    entered.count_down();
    gate.wait();
    return f1_result();
  };
  auto first = std::async(std::launch::async, [&] { return slot.trigger_rebuild(slow); });
  entered.wait();
  auto second = slot.trigger_rebuild(slow);
  EXPECT_EQ(second.status, RebuildStatus::Busy);
  release.set_value();
  EXPECT_EQ(first.get().status, RebuildStatus::Ok);
  EXPECT_EQ(slot.generation(), 1u);
  // Free again afterwards.
  EXPECT_EQ(slot.trigger_rebuild([] { return f1_result(); }).generation, 2u);
}

TEST(Service, EndpointsOnF1) {
  RecommendationService service(test_config(), [] { return f1_result(); });
  service.start();
  wait_for_generation(service.slot(), 1);
  httplib::Client cli("127.0.0.1", service.port());

  auto res = cli.Get("/recommend/1?top=2");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body,
            R"({"generation":1,"items":[{"object":2,"score":1},{"object":3,"score":1}],"object":1})");

  res = cli.Get("/recommend/999999");
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(body(res)["object"], 999999);

  res = cli.Get("/recommend/abc");
  EXPECT_EQ(res->status, 400);
  res = cli.Get("/recommend/1?top=x");
  EXPECT_EQ(res->status, 400);
  res = cli.Get("/recommend/1?top=0");
  EXPECT_TRUE(body(res)["items"].empty());

  res = cli.Get("/recommend?path=1,4");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(body(res)["items"],
            nlohmann::json::parse(R"([{"object":2,"score":2},{"object":3,"score":2}])"));
  res = cli.Get("/recommend?path=1,99");
  EXPECT_EQ(res->status, 404);
  res = cli.Get("/recommend?path=1,1");
  EXPECT_EQ(res->status, 400);

  res = cli.Get("/recommend/3?raw=0&weighted=1");
  EXPECT_EQ(body(res)["items"].size(), 3u);

  res = cli.Get("/recommend/sku-1?raw=1&top=1");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(body(res)["items"], nlohmann::json::parse(R"([{"object":"sku-2","score":1}])"));
  EXPECT_EQ(cli.Get("/recommend/sku-9?raw=1")->status, 404);

  res = cli.Get("/stats");
  ASSERT_EQ(res->status, 200);
  auto st = body(res);
  EXPECT_EQ(st["generation"], 1);
  EXPECT_EQ(st["count_objects"], 5);
  EXPECT_EQ(st["count_kernels"], 4);
  EXPECT_EQ(st["count_nodes"], 9);
  EXPECT_EQ(st["count_arcs"], 8);
  EXPECT_EQ(st["count_classes"], 2);

  res = cli.Get("/healthz");
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(body(res)["status"], "ok");

  res = cli.Post("/rebuild");
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(body(res)["generation"], 2);
  EXPECT_EQ(body(cli.Get("/recommend/1"))["generation"], 2);
  service.stop();
}

TEST(Service, WeightedDefaultFromConfig) {
  auto cfg = test_config();
  cfg.use_weights = true;
  RecommendationService service(cfg, [] {
    auto r = f1_result();
    r.snapshot = r.snapshot.with_weights({{C(2), 3}});
    return r;
  });
  service.start();
  wait_for_generation(service.slot(), 1);
  httplib::Client cli("127.0.0.1", service.port());
  EXPECT_EQ(body(cli.Get("/recommend/3"))["items"],
            nlohmann::json::parse(
                R"([{"object":2,"score":3},{"object":4,"score":3},{"object":1,"score":1}])"));
  EXPECT_EQ(body(cli.Get("/recommend/3?weighted=0"))["items"][0]["score"], 1);
}

TEST(Service, NotReadyDuringInitialBuild) {
  std::promise<void> release;
  auto gate = release.get_future().share();
  RecommendationService service(test_config(), [gate] {
    gate.wait();
    return f1_result();
  });
  service.start();
  httplib::Client cli("127.0.0.1", service.port());
  EXPECT_EQ(cli.Get("/recommend/1")->status, 503);
  EXPECT_EQ(cli.Get("/stats")->status, 503);
  EXPECT_EQ(cli.Get("/healthz")->status, 503);
  release.set_value();
  wait_for_generation(service.slot(), 1);
  EXPECT_EQ(cli.Get("/recommend/1")->status, 200);
}

TEST(Service, FailedRebuildKeepsServing) {
  std::atomic<int> calls{0};
  RecommendationService service(test_config(), [&calls]() -> BuildResult {
    if (calls++ > 0) throw Error(Errc::io_error, "cannot read orders.csv");
    return f1_result();
  });
  service.start();
  wait_for_generation(service.slot(), 1);
  httplib::Client cli("127.0.0.1", service.port());
  auto res = cli.Post("/rebuild");
  EXPECT_EQ(res->status, 500);
  EXPECT_EQ(body(res)["generation"], 1);
  auto health = body(cli.Get("/healthz"));
  EXPECT_EQ(health["last_build_ok"], false);
  EXPECT_EQ(cli.Get("/recommend/1")->status, 200);
  EXPECT_EQ(body(cli.Get("/recommend/1"))["generation"], 1);
}

TEST(Service, SchedulerRebuildsPeriodically) {
  auto cfg = test_config();
  cfg.rebuild_interval = 1s;
  RecommendationService service(cfg, [] { return f1_result(); });
  service.start();
  wait_for_generation(service.slot(), 3);
  service.stop();
}

TEST(Service, ReadsDoNotWaitForRebuild) {
  std::atomic<int> calls{0};
  RecommendationService service(test_config(), [&calls] {
    if (calls++ > 0) std::this_thread::sleep_for(1500ms);
    return f1_result();
  });
  service.start();
  wait_for_generation(service.slot(), 1);
  auto rebuild = std::async(std::launch::async, [&] {
    httplib::Client c("127.0.0.1", service.port());
    c.set_read_timeout(10s);
    return c.Post("/rebuild")->status;
  });
  std::this_thread::sleep_for(100ms);
  ASSERT_TRUE(service.slot().rebuilding());
  httplib::Client cli("127.0.0.1", service.port());
  auto t0 = std::chrono::steady_clock::now();
  auto res = cli.Get("/recommend/1");
  auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(body(res)["generation"], 1);
  EXPECT_LT(elapsed, 500ms);
  EXPECT_EQ(cli.Post("/rebuild")->status, 409);
  EXPECT_EQ(rebuild.get(), 200);
}

TEST(Service, BindFailureIsStartupError) {
  RecommendationService first(test_config(), [] { return f1_result(); });
  auto port = first.bind();
  auto cfg = test_config();
  cfg.port = port;
  RecommendationService second(cfg, [] { return f1_result(); });
  try {
    second.bind();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
}

TEST(ServiceConfigFile, Parses) {
  TempDir dir;
  auto cfg = dir.write("svc.json", R"({
    "sources": [{"class_id": 1, "path": "orders.csv"}],
    "rebuild_interval": 120, "listen": "0.0.0.0:9000", "default_limit": 5,
    "use_weights": true, "graph": "graph.csv"
  })");
  auto config = load_service_config(cfg);
  EXPECT_EQ(config.rebuild_interval, 120s);
  EXPECT_EQ(config.host, "0.0.0.0");
  EXPECT_EQ(config.port, 9000);
  EXPECT_EQ(config.default_limit, 5u);
  EXPECT_TRUE(config.use_weights);
  EXPECT_EQ(config.graph, dir.path / "graph.csv");

  auto defaults = load_service_config(
      dir.write("d.json", R"({"sources": [{"class_id": 1, "path": "orders.csv"}]})"));
  EXPECT_EQ(defaults.rebuild_interval, 3600s);
  EXPECT_EQ(defaults.default_limit, 10u);

  for (const char* bad : {R"({"sources": [{"class_id": 1, "path": "a"}], "rebuild_interval": 0})",
                          R"({"sources": [{"class_id": 1, "path": "a"}], "default_limit": 0})",
                          R"({"sources": [{"class_id": 1, "path": "a"}], "listen": "nohost"})"}) {
    EXPECT_THROW(load_service_config(dir.write("b.json", bad)), Error) << bad;
  }
}

// Readers under load see whole generations only: in build n, o1's two
// candidates both score exactly n, and generation n is build n.
TEST(Service, ConcurrentReadersSeeCompleteGenerations) {
  std::atomic<std::uint32_t> builds{0};
  RecommendationService service(test_config(), [&builds] {
    auto n = ++builds;
    std::this_thread::sleep_for(20ms);
    return tagged_result(n);
  });
  service.start();
  wait_for_generation(service.slot(), 1);

  std::atomic<bool> done{false};
  std::atomic<int> mismatches{0};
  std::atomic<int> answered{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 8; ++t) {
    readers.emplace_back([&] {
      httplib::Client cli("127.0.0.1", service.port());
      while (!done) {
        auto res = cli.Get("/recommend/1");
        if (!res || res->status != 200) {
          ++mismatches;
          continue;
        }
        auto j = nlohmann::json::parse(res->body);
        auto g = j["generation"].get<std::uint64_t>();
        const auto& items = j["items"];
        if (items.size() != 2 || items[0]["score"] != g || items[1]["score"] != g) ++mismatches;
        ++answered;
      }
    });
  }
  httplib::Client admin("127.0.0.1", service.port());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(admin.Post("/rebuild")->status, 200);
  done = true;
  for (auto& r : readers) r.join();
  EXPECT_EQ(mismatches.load(), 0);
  EXPECT_GT(answered.load(), 0);
  EXPECT_EQ(service.slot().generation(), 11u);
}
