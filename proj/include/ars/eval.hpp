#pragma once

// Evaluation harness: the effectiveness ratio, log replay, a random
// baseline, synthetic graph generators and the build-time scaling bench.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ars/engine.hpp"
#include "ars/error.hpp"
#include "ars/graph.hpp"
#include "ars/ingest.hpp"

namespace ars {

/// 100 * effective / total, with an empty denominator defined as 0.
inline double effectiveness(std::uint64_t effective, std::uint64_t total) {
  if (effective > total) {
    throw Error(Errc::invalid_argument, "effective count exceeds total");
  }
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(effective) / static_cast<double>(total);
}

/// Effectiveness rounded half-up to two decimals, computed in integers so
/// that e.g. 1/3 reports as exactly 33.33.
inline double effectiveness_rounded(std::uint64_t effective, std::uint64_t total) {
  if (effective > total) {
    throw Error(Errc::invalid_argument, "effective count exceeds total");
  }
  if (total == 0) return 0.0;
  std::uint64_t hundredths = (effective * 20000 + total) / (2 * total);
  return static_cast<double>(hundredths) / 100.0;
}

struct InteractionEntry {
  std::string visit_key;
  ObjectId anchor;
  std::optional<ObjectId> followed;
  std::string day;  // empty when the log carries no dates
};

using InteractionLog = std::vector<InteractionEntry>;

struct DayCounts {
  std::uint64_t issued{0};
  std::uint64_t effective{0};
};

struct EvalReport {
  std::uint64_t recommendations_issued{0};
  std::uint64_t effective{0};
  std::uint64_t skipped{0};  // issued for anchors absent from the snapshot
  double effectiveness_pct{0.0};
  std::map<std::string, DayCounts> per_day;
};

/// Reads `visit_key,anchor,followed[,day]`; `followed` may be empty. A first
/// line equal to the column names is treated as a header.
inline InteractionLog parse_interaction_log(std::istream& in) {
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (line_no == 1 &&
        (view == "visit_key,anchor,followed" || view == "visit_key,anchor,followed,day")) {
      continue;
    }
    if (view.empty()) continue;
    std::vector<std::string_view> fields;
    for (std::size_t pos = 0;;) {
      auto comma = view.find(',', pos);
      fields.push_back(view.substr(pos, comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    auto bad = [&](const char* why) {
      throw Error(Errc::format_error,
                  "interaction log line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 3 && fields.size() != 4) bad("expected 3 or 4 fields");
    InteractionEntry entry;
    entry.visit_key = std::string(fields[0]);
    if (!detail::parse_uint(fields[1], entry.anchor.value)) bad("anchor is not an id");
    if (!fields[2].empty()) {
      ObjectId followed;
      if (!detail::parse_uint(fields[2], followed.value)) bad("followed is not an id");
      entry.followed = followed;
    }
    if (fields.size() == 4) entry.day = std::string(fields[3]);
    log.push_back(std::move(entry));
  }
  return log;
}

inline InteractionLog load_interaction_log(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_interaction_log(in);
}

/// Replays a log through an arbitrary recommender. `issue` returns nullopt
/// when the anchor cannot be served; such entries count as issued and skipped.
inline EvalReport replay(
    const InteractionLog& log,
    const std::function<std::optional<RecommendationVector>(std::size_t,
                                                            const InteractionEntry&)>& issue) {
  EvalReport report;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& entry = log[i];
    ++report.recommendations_issued;
    auto& day = report.per_day[entry.day];
    ++day.issued;
    auto vec = issue(i, entry);
    if (!vec) {
      ++report.skipped;
      continue;
    }
    if (entry.followed &&
        std::any_of(vec->begin(), vec->end(),
                    [&](const Recommendation& r) { return r.object == *entry.followed; })) {
      ++report.effective;
      ++day.effective;
    }
  }
  if (report.per_day.size() == 1 && report.per_day.begin()->first.empty()) {
    report.per_day.clear();
  }
  report.effectiveness_pct =
      effectiveness_rounded(report.effective, report.recommendations_issued);
  return report;
}

inline EvalReport replay_evaluate(const GraphSnapshot& s, const InteractionLog& log,
                                  std::size_t limit, bool use_weights = false) {
  if (limit == 0) throw Error(Errc::invalid_argument, "limit must be >= 1");
  return replay(log, [&](std::size_t, const InteractionEntry& e)
                    -> std::optional<RecommendationVector> {
    if (s.kernels_of(e.anchor).empty()) return std::nullopt;
    return recommend(s, e.anchor, limit, use_weights);
  });
}

inline std::string to_text(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "recommendations: " << r.recommendations_issued << '\n'
      << "effective: " << r.effective << '\n'
      << "skipped: " << r.skipped << '\n'
      << "effectiveness: " << r.effectiveness_pct << "%\n";
  for (const auto& [day, c] : r.per_day) {
    out << day << ": " << c.effective << '/' << c.issued << " = "
        << effectiveness_rounded(c.effective, c.issued) << "%\n";
  }
  return out.str();
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"recommendations", r.recommendations_issued},
                   {"effective", r.effective},
                   {"skipped", r.skipped},
                   {"effectiveness_pct", r.effectiveness_pct}};
  if (!r.per_day.empty()) {
    auto& days = j["per_day"] = nlohmann::json::object();
    for (const auto& [day, c] : r.per_day) {
      days[day] = {{"recommendations", c.issued},
                   {"effective", c.effective},
                   {"effectiveness_pct", effectiveness_rounded(c.effective, c.issued)}};
    }
  }
  return j;
}

/// Uniformly sampled distinct objects other than the anchor, all scored 0.
inline RecommendationVector random_baseline(const GraphSnapshot& s, ObjectId anchor,
                                            std::size_t limit, std::uint64_t seed) {
  if (s.object_count() == 0) throw Error(Errc::invalid_argument, "snapshot has no objects");
  std::vector<ObjectId> pool;
  pool.reserve(s.object_count());
  for (auto o : s.objects())
    if (o != anchor) pool.push_back(o);
  std::vector<ObjectId> picked;
  std::mt19937_64 rng(seed);
  std::sample(pool.begin(), pool.end(), std::back_inserter(picked), limit, rng);
  std::shuffle(picked.begin(), picked.end(), rng);
  RecommendationVector out;
  out.reserve(picked.size());
  for (auto o : picked) out.push_back({o, 0});
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic graphs

struct SyntheticSpec {
  std::size_t objects{100};
  std::size_t kernels{350};
  std::size_t arcs{630};
  std::size_t classes{1};
  double zipf_exponent{1.0};
  std::uint64_t seed{1};

  /// Sizes for a target element count |O| + |J| + |E|, keeping the
  /// object share near 1.1% and |E| / |J| near 1.8.
  static SyntheticSpec for_elements(std::size_t elements, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.objects = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(0.011 * static_cast<double>(elements))));
    auto rest = elements > spec.objects ? elements - spec.objects : 0;
    spec.kernels = std::max(spec.objects,
                            static_cast<std::size_t>(std::llround(rest / 2.8)));
    spec.arcs = std::max(spec.kernels, rest > spec.kernels ? rest - spec.kernels : 0);
    return spec;
  }
};

struct SyntheticGraph {
  std::vector<Arc> arcs;
  ClassTable classes;

  std::size_t element_count() const;
};

/// Random bipartite graph with exactly spec.kernels kernels and spec.arcs
/// arcs. Every object gets at least one arc when kernels >= objects; further
/// arcs pick objects from a Zipf popularity law. Deterministic per seed.
inline SyntheticGraph generate_synthetic(const SyntheticSpec& spec) {
  if (spec.objects == 0 || spec.kernels == 0 || spec.classes == 0 ||
      spec.arcs < spec.kernels || spec.arcs > spec.kernels * spec.objects) {
    throw Error(Errc::invalid_argument, "infeasible synthetic graph sizes");
  }
  std::mt19937_64 rng(spec.seed);
  SyntheticGraph g;
  for (std::size_t c = 1; c <= spec.classes; ++c) {
    ClassId id{static_cast<std::uint32_t>(c)};
    g.classes.emplace(id, KernelClass{id, "synthetic-" + std::to_string(c),
                                      ClassKind::Behavioural, 1});
  }

  std::vector<double> popularity(spec.objects);
  for (std::size_t i = 0; i < spec.objects; ++i)
    popularity[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.zipf_exponent);
  std::discrete_distribution<std::size_t> pick_object(popularity.begin(), popularity.end());
  std::uniform_int_distribution<std::size_t> pick_kernel(0, spec.kernels - 1);
  std::uniform_int_distribution<std::size_t> pick_class(1, spec.classes);

  std::vector<std::vector<std::uint32_t>> members(spec.kernels);
  for (std::size_t k = 0; k < spec.kernels; ++k) {
    auto o = k < spec.objects ? k : pick_object(rng);
    members[k].push_back(static_cast<std::uint32_t>(o));
  }
  std::size_t placed = spec.kernels;
  while (placed < spec.arcs) {
    auto k = pick_kernel(rng);
    auto& m = members[k];
    if (m.size() == spec.objects) continue;
    auto o = static_cast<std::uint32_t>(pick_object(rng));
    if (std::find(m.begin(), m.end(), o) != m.end()) continue;
    m.push_back(o);
    ++placed;
  }

  g.arcs.reserve(spec.arcs);
  for (std::size_t k = 0; k < spec.kernels; ++k) {
    ClassId cls{static_cast<std::uint32_t>(pick_class(rng))};
    for (auto o : members[k]) {
      g.arcs.push_back(Arc{KernelId{static_cast<std::uint32_t>(k + 1)}, ObjectId{o + 1}, cls});
    }
  }
  return g;
}

/// Runs the clear / deduplicating insert / finalize pipeline over `g`.
inline GraphSnapshot build_snapshot(const SyntheticGraph& g) {
  GraphBuilder builder(g.classes);
  builder.reserve(g.arcs.size());
  for (const auto& arc : g.arcs) builder.add_arc(arc.kernel, arc.object, arc.class_id);
  return builder.freeze();
}

inline std::size_t SyntheticGraph::element_count() const {
  std::vector<std::uint32_t> objects, kernels;
  for (const auto& a : arcs) {
    objects.push_back(a.object.value);
    kernels.push_back(a.kernel.value);
  }
  auto distinct = [](std::vector<std::uint32_t>& v) {
    std::sort(v.begin(), v.end());
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
  };
  return distinct(objects) + distinct(kernels) + arcs.size();
}

/// Co-occurrence corpus with planted pairs (a, b) that share many kernels,
/// buried in noise kernels, plus a log whose visits follow a -> b and b -> a.
struct PlantedCorpus {
  GraphSnapshot snapshot;
  InteractionLog log;
};

inline PlantedCorpus generate_planted(std::uint64_t seed, std::size_t objects = 60,
                                      std::size_t pairs = 10,
                                      std::size_t kernels_per_pair = 6,
                                      std::size_t noise_kernels = 300) {
  if (objects < 2 * pairs + 1) throw Error(Errc::invalid_argument, "too few objects");
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> ids(objects);
  std::iota(ids.begin(), ids.end(), 1u);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::uniform_int_distribution<std::size_t> any_object(0, objects - 1);
  std::uniform_int_distribution<std::size_t> noise_size(1, 3);

  GraphBuilder builder;
  builder.declare_class({ClassId{1}, "planted", ClassKind::Behavioural, 1});
  std::uint32_t next_kernel = 1;
  auto fill = [&](std::vector<std::uint32_t> members) {
    KernelId k{next_kernel++};
    for (auto o : members) builder.add_arc(k, ObjectId{o}, ClassId{1});
  };

  PlantedCorpus corpus;
  for (std::size_t p = 0; p < pairs; ++p) {
    auto a = ids[2 * p], b = ids[2 * p + 1];
    for (std::size_t i = 0; i < kernels_per_pair; ++i) {
      std::vector<std::uint32_t> members{a, b};
      if (i % 2 == 0) members.push_back(ids[any_object(rng)]);
      fill(members);
    }
    corpus.log.push_back({"v" + std::to_string(2 * p), ObjectId{a}, ObjectId{b}, {}});
    corpus.log.push_back({"v" + std::to_string(2 * p + 1), ObjectId{b}, ObjectId{a}, {}});
  }
  for (std::size_t i = 0; i < noise_kernels; ++i) {
    std::vector<std::uint32_t> members;
    for (auto n = noise_size(rng); n > 0; --n) members.push_back(ids[any_object(rng)]);
    fill(members);
  }
  corpus.snapshot = builder.freeze();
  return corpus;
}

// ---------------------------------------------------------------------------
// Scaling bench

struct BenchRow {
  std::size_t elements{0};
  double build_seconds{0.0};       // mean over repetitions
  double mean_query_seconds{0.0};  // mean over sampled anchors and repetitions
  std::vector<double> build_samples;
};

struct BenchSeries {
  std::vector<BenchRow> rows;
};

struct BenchOptions {
  std::size_t repetitions{1};
  std::size_t queries{100};
};

inline BenchSeries scaling_bench(const std::vector<std::size_t>& size_steps,
                                 std::uint64_t generator_seed,
                                 const BenchOptions& options = {}) {
  if (size_steps.empty()) throw Error(Errc::invalid_argument, "no size steps");
  for (std::size_t i = 1; i < size_steps.size(); ++i) {
    if (size_steps[i] <= size_steps[i - 1]) {
      throw Error(Errc::invalid_argument, "size steps must be strictly increasing");
    }
  }
  using clock = std::chrono::steady_clock;
  BenchSeries series;
  for (auto target : size_steps) {
    auto graph = generate_synthetic(SyntheticSpec::for_elements(target, generator_seed));
    BenchRow row;
    double query_total = 0.0;
    std::size_t query_count = 0;
    for (std::size_t rep = 0; rep < std::max<std::size_t>(1, options.repetitions); ++rep) {
      auto t0 = clock::now();
      auto snapshot = build_snapshot(graph);
      auto t1 = clock::now();
      row.build_samples.push_back(std::chrono::duration<double>(t1 - t0).count());
      row.elements = snapshot.node_count() + snapshot.arc_count();

      std::mt19937_64 rng(generator_seed ^ (rep + 1));
      std::uniform_int_distribution<std::size_t> pick(0, snapshot.object_count() - 1);
      for (std::size_t q = 0; q < options.queries; ++q) {
        auto anchor = snapshot.objects()[pick(rng)];
        auto q0 = clock::now();
        auto vec = recommend(snapshot, anchor);
        auto q1 = clock::now();
        query_total += std::chrono::duration<double>(q1 - q0).count();
        ++query_count;
        (void)vec;
      }
    }
    row.build_seconds =
        std::accumulate(row.build_samples.begin(), row.build_samples.end(), 0.0) /
        static_cast<double>(row.build_samples.size());
    row.mean_query_seconds = query_count ? query_total / static_cast<double>(query_count) : 0.0;
    if (!series.rows.empty() && row.elements <= series.rows.back().elements) {
      throw Error(Errc::invalid_argument, "size steps too close to separate");
    }
    series.rows.push_back(std::move(row));
  }
  return series;
}

inline std::string bench_csv_row(const BenchRow& row) {
  std::ostringstream out;
  out << row.elements << ',' << std::setprecision(6) << std::fixed << row.build_seconds << ','
      << std::setprecision(9) << row.mean_query_seconds;
  return out.str();
}

inline std::string to_csv(const BenchSeries& series) {
  std::string out = "elements,build_seconds,mean_query_seconds\n";
  for (const auto& row : series.rows) out += bench_csv_row(row) + '\n';
  return out;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error(Errc::invalid_argument, "spearman needs two equal-length samples");
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(xs), ry = ranks(ys);
  double n = static_cast<double>(xs.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ars
