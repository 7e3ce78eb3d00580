#pragma once

// `ars` command-line front end. Exit codes: 0 success, 1 domain errors
// (unknown object, invalid graph), 2 usage, config, io and format errors.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ars/engine.hpp"
#include "ars/error.hpp"
#include "ars/eval.hpp"
#include "ars/graph.hpp"
#include "ars/ingest.hpp"
#include "ars/service.hpp"

namespace ars {

namespace detail {

inline std::atomic<bool>& stop_requested() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::object_not_found:
    case Errc::kernel_not_found:
      return 1;
    default:
      return 2;
  }
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

inline void print_stats(std::ostream& out, const GraphStats& st) {
  out << "objects=" << st.count_objects << '\n'
      << "kernels=" << st.count_kernels << '\n'
      << "nodes=" << st.count_nodes << '\n'
      << "arcs=" << st.count_arcs << '\n'
      << "classes=" << st.count_classes << '\n';
  for (const auto& [cls, c] : st.per_class) {
    out << "class " << cls << ": kernels=" << c.kernel_count << " objects=" << c.object_count
        << '\n';
  }
}

}  // namespace detail

inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out,
                        std::ostream& err) {
  CLI::App app{"Session-graph recommendation engine", "ars"};
  app.require_subcommand(1);

  std::string graph_path = "graph.csv";
  auto add_graph = [&](CLI::App* sub) {
    sub->add_option("--graph,-g", graph_path, "Edge-list file")->capture_default_str();
  };

  auto* build = app.add_subcommand("build", "Ingest sources and write the edge list");
  std::string config_path;
  build->add_option("--config,-c", config_path, "Pipeline config (JSON)")->required();
  build->add_option("--out,-o", graph_path, "Edge-list output")->capture_default_str();

  auto* rec = app.add_subcommand("recommend", "Recommend objects for an anchor or a path");
  std::string anchor;
  std::string path_list;
  std::optional<std::size_t> top;
  bool weighted = false;
  bool raw = false;
  rec->add_option("object", anchor, "Anchor object id");
  rec->add_option("--top,-n", top, "Keep the N best");
  rec->add_flag("--weighted,-w", weighted, "Use class weights");
  rec->add_option("--path", path_list, "Further visited objects, comma separated");
  rec->add_flag("--raw", raw, "Ids are raw keys, translated through the map sidecars");
  add_graph(rec);

  auto* st = app.add_subcommand("stats", "Print graph counts");
  add_graph(st);

  auto* val = app.add_subcommand("validate", "Check the graph model constraints");
  add_graph(val);

  auto* ev = app.add_subcommand("eval", "Replay an interaction log and report effectiveness");
  std::string log_path;
  std::size_t eval_top = 10;
  ev->add_option("--log", log_path, "Interaction log CSV")->required();
  ev->add_option("--top,-n", eval_top, "Recommendations issued per entry")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  ev->add_flag("--weighted,-w", weighted, "Use class weights");
  add_graph(ev);

  auto* bench = app.add_subcommand("bench", "Build-time scaling benchmark on synthetic graphs");
  std::string steps;
  std::uint64_t seed = 1;
  std::size_t reps = 1;
  std::size_t queries = 100;
  std::string csv_path;
  bench->add_option("--steps", steps, "Target element counts, comma separated")->required();
  bench->add_option("--seed", seed, "Generator seed")->capture_default_str();
  bench->add_option("--reps", reps, "Repetitions per step")->capture_default_str();
  bench->add_option("--queries", queries, "Sampled anchors per step")->capture_default_str();
  bench->add_option("--csv", csv_path, "Also write the series with a header to this file");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string serve_config;
  std::string listen;
  serve->add_option("--config,-c", serve_config, "Service config (JSON)")->required();
  serve->add_option("--listen", listen, "Override host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    auto code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*build) {
      auto config = load_pipeline_config(config_path);
      auto result = build_graph(config.sources, config.options);
      save_bundle(result, graph_path);
      out << to_json(result.report).dump() << '\n';
      return 0;
    }

    if (*rec) {
      auto bundle = load_bundle(graph_path);
      auto resolve = [&](const std::string& token) -> ObjectId {
        if (raw) {
          if (!bundle.maps) throw Error(Errc::config_error, "no map sidecars next to the graph");
          if (auto id = bundle.maps->find_object(token)) return *id;
          throw Error(Errc::object_not_found, "object " + token + " not found");
        }
        ObjectId id;
        if (!detail::parse_uint(std::string_view(token), id.value)) {
          throw Error(Errc::invalid_argument, "object id '" + token + "' is not an integer");
        }
        return id;
      };
      std::vector<ObjectId> seeds;
      if (!anchor.empty()) seeds.push_back(resolve(anchor));
      for (const auto& token : detail::split_list(path_list)) seeds.push_back(resolve(token));
      if (seeds.empty()) throw Error(Errc::invalid_argument, "give an object or --path");

      auto vec = seeds.size() == 1 && path_list.empty()
                     ? recommend(bundle.snapshot, seeds.front(), top, weighted)
                     : recommend_for_path(bundle.snapshot, SeedSet(std::move(seeds)), top, weighted);
      for (const auto& r : vec) {
        if (raw) {
          out << bundle.maps->raw_object(r.object).value_or(std::to_string(r.object.value));
        } else {
          out << r.object;
        }
        out << ',' << r.score << '\n';
      }
      return 0;
    }

    if (*st) {
      detail::print_stats(out, stats(load_bundle(graph_path).snapshot));
      return 0;
    }

    if (*val) {
      auto report = validate(load_bundle(graph_path).snapshot);
      if (report.ok) {
        out << "ok\n";
        return 0;
      }
      for (auto k : report.orphan_kernels) out << "orphan kernel " << k << '\n';
      for (auto o : report.orphan_objects) out << "orphan object " << o << '\n';
      for (auto c : report.undeclared_classes) out << "undeclared class " << c << '\n';
      return 1;
    }

    if (*ev) {
      auto snapshot = load_bundle(graph_path).snapshot;
      auto report = replay_evaluate(snapshot, load_interaction_log(log_path), eval_top, weighted);
      out << to_text(report) << to_json(report).dump() << '\n';
      return 0;
    }

    if (*bench) {
      std::vector<std::size_t> sizes;
      for (const auto& token : detail::split_list(steps)) {
        std::size_t n = 0;
        if (!detail::parse_uint(std::string_view(token), n)) {
          throw Error(Errc::invalid_argument, "bad step '" + token + "'");
        }
        sizes.push_back(n);
      }
      auto series = scaling_bench(sizes, seed, {reps, queries});
      for (const auto& row : series.rows) out << bench_csv_row(row) << '\n';
      if (!csv_path.empty()) {
        auto file = detail::open_output(csv_path);
        file << to_csv(series);
      }
      return 0;
    }

    if (*serve) {
      auto config = load_service_config(serve_config);
      if (!listen.empty()) {
        auto colon = listen.rfind(':');
        int port = -1;
        if (colon == std::string::npos ||
            !detail::parse_uint(std::string_view(listen).substr(colon + 1), port)) {
          throw Error(Errc::config_error, "--listen must be host:port");
        }
        config.host = listen.substr(0, colon);
        config.port = port;
      }
      RecommendationService service(std::move(config));
      service.bind();
      err << "listening on " << service.config().host << ':' << service.port() << std::endl;
      detail::stop_requested() = false;
      std::signal(SIGINT, [](int) { detail::stop_requested() = true; });
      std::signal(SIGTERM, [](int) { detail::stop_requested() = true; });
      service.start();
      while (!detail::stop_requested()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
      }
      service.stop();
      return 0;
    }
  } catch (const Error& e) {
    if (e.code() == Errc::object_not_found) {
      err << "object not found: " << e.what() << '\n';
    } else {
      err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    }
    return detail::exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace ars
