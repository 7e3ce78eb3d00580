#pragma once

// Event-log ingestion and the edge-list file formats.
//
// A rebuild always starts from an empty builder (clear), inserts every
// event through the deduplicating builder (insert) and freezes the result
// into an indexed snapshot (finalize). Raw keys are interned: each
// (class, raw kernel key) gets a fresh dense KernelId and each raw object key
// a fresh dense ObjectId, both counting from 1.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ars/error.hpp"
#include "ars/graph.hpp"
#include "ars/ids.hpp"

namespace ars {

enum class SourceFormat { Csv, Jsonl };

inline SourceFormat parse_source_format(std::string_view tag) {
  if (tag == "csv") return SourceFormat::Csv;
  if (tag == "jsonl") return SourceFormat::Jsonl;
  throw Error(Errc::config_error, "unknown source format '" + std::string(tag) + "'");
}

struct SourceSpec {
  ClassId class_id;
  std::string class_name;
  ClassKind kind{ClassKind::Behavioural};
  std::uint32_t weight{1};
  std::filesystem::path path;
  SourceFormat format{SourceFormat::Csv};

  KernelClass kernel_class() const { return {class_id, class_name, kind, weight}; }
};

struct RawEvent {
  std::string kernel_key;
  std::string object_key;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

struct ClassIngest {
  ClassId class_id;
  std::size_t events_read{0};
  std::size_t arcs_emitted{0};
  std::size_t duplicates_dropped{0};
  std::size_t malformed_lines{0};

  friend bool operator==(const ClassIngest&, const ClassIngest&) = default;
};

struct IngestReport {
  std::vector<ClassIngest> per_class;
  ClassIngest totals;
  double build_seconds{0.0};
};

struct MappedKernel {
  KernelId id;
  ClassId class_id;
  std::string raw_key;
};

struct MappedObject {
  ObjectId id;
  std::string raw_key;
};

/// Interned id -> raw key tables, written beside the edge list.
class IdMaps {
 public:
  void add_kernel(MappedKernel k) { kernels_.push_back(std::move(k)); }
  void add_object(MappedObject o) {
    object_index_.emplace(o.raw_key, o.id);
    object_raw_.emplace(o.id, o.raw_key);
    objects_.push_back(std::move(o));
  }

  const std::vector<MappedKernel>& kernels() const noexcept { return kernels_; }
  const std::vector<MappedObject>& objects() const noexcept { return objects_; }

  std::optional<ObjectId> find_object(const std::string& raw) const {
    auto it = object_index_.find(raw);
    if (it == object_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::string> raw_object(ObjectId id) const {
    auto it = object_raw_.find(id);
    if (it == object_raw_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<MappedKernel> kernels_;
  std::vector<MappedObject> objects_;
  std::unordered_map<std::string, ObjectId> object_index_;
  std::unordered_map<ObjectId, std::string> object_raw_;
};

struct BuildResult {
  GraphSnapshot snapshot;
  IdMaps maps;
  IngestReport report;
};

struct BuildOptions {
  // When set, events whose raw object key is not listed are rejected and
  // counted as malformed (dangling product reference).
  std::optional<std::unordered_set<std::string>> allowed_objects;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool usable_key(std::string_view key) {
  return !key.empty() && key.find_first_of("\r\n") == std::string_view::npos;
}

inline std::optional<RawEvent> parse_csv_event(std::string_view line) {
  auto comma = line.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto kernel = trim(line.substr(0, comma));
  auto object = trim(line.substr(comma + 1));
  if (object.find(',') != std::string_view::npos) return std::nullopt;
  if (!usable_key(kernel) || !usable_key(object)) return std::nullopt;
  return RawEvent{std::string(kernel), std::string(object)};
}

inline std::optional<RawEvent> parse_jsonl_event(std::string_view line) {
  auto doc = nlohmann::json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  auto kernel = doc.find("kernel");
  auto object = doc.find("object");
  if (kernel == doc.end() || object == doc.end() || !kernel->is_string() ||
      !object->is_string()) {
    return std::nullopt;
  }
  auto k = kernel->get<std::string>();
  auto o = object->get<std::string>();
  if (!usable_key(k) || !usable_key(o)) return std::nullopt;
  return RawEvent{std::move(k), std::move(o)};
}

template <typename T>
bool parse_uint(std::string_view text, T& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Streams well-formed events of one source to `sink`; returns the number of
/// malformed records skipped. Blank lines are ignored. A CSV file may start
/// with the exact header `kernel,object`.
inline std::size_t for_each_event(const SourceSpec& spec,
                                  const std::function<void(RawEvent&&)>& sink) {
  auto in = detail::open_input(spec.path);
  std::size_t malformed = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (first) {
      first = false;
      if (spec.format == SourceFormat::Csv && view == "kernel,object") continue;
    }
    if (detail::trim(view).empty()) continue;
    auto event = spec.format == SourceFormat::Csv ? detail::parse_csv_event(view)
                                                  : detail::parse_jsonl_event(view);
    if (event) {
      sink(std::move(*event));
    } else {
      ++malformed;
    }
  }
  if (in.bad()) throw Error(Errc::io_error, "read failed on " + spec.path.string());
  return malformed;
}

struct ParsedEvents {
  std::vector<RawEvent> events;
  std::size_t malformed{0};
};

inline ParsedEvents parse_events(const SourceSpec& spec) {
  ParsedEvents parsed;
  parsed.malformed =
      for_each_event(spec, [&](RawEvent&& e) { parsed.events.push_back(std::move(e)); });
  return parsed;
}

/// Interns raw events into a GraphBuilder and keeps per-class counters.
class Ingestor {
 public:
  explicit Ingestor(BuildOptions options = {}) : options_(std::move(options)) {}

  void declare(const KernelClass& cls) {
    builder_.declare_class(cls);
    index_.emplace(cls.id, report_.per_class.size());
    report_.per_class.push_back(ClassIngest{cls.id});
  }

  void add(ClassId cls, const std::string& kernel_key, const std::string& object_key) {
    auto& counters = counters_for(cls);
    ++counters.events_read;
    if (options_.allowed_objects && !options_.allowed_objects->contains(object_key)) {
      ++counters.malformed_lines;
      return;
    }
    auto kernel = intern_kernel(cls, kernel_key);
    auto object = intern_object(object_key);
    if (builder_.add_arc(kernel, object, cls)) {
      ++counters.arcs_emitted;
    } else {
      ++counters.duplicates_dropped;
    }
  }

  void add_malformed(ClassId cls, std::size_t count) {
    auto& counters = counters_for(cls);
    counters.events_read += count;
    counters.malformed_lines += count;
  }

  BuildResult finish() {
    BuildResult result;
    for (const auto& c : report_.per_class) {
      report_.totals.events_read += c.events_read;
      report_.totals.arcs_emitted += c.arcs_emitted;
      report_.totals.duplicates_dropped += c.duplicates_dropped;
      report_.totals.malformed_lines += c.malformed_lines;
    }
    result.snapshot = builder_.freeze();
    result.maps = std::move(maps_);
    result.report = std::move(report_);
    *this = Ingestor{};
    return result;
  }

 private:
  ClassIngest& counters_for(ClassId cls) {
    auto it = index_.find(cls);
    if (it == index_.end()) {
      std::ostringstream msg;
      msg << "class " << cls << " is not declared";
      throw Error(Errc::class_unknown, msg.str());
    }
    return report_.per_class[it->second];
  }

  KernelId intern_kernel(ClassId cls, const std::string& raw) {
    auto& table = kernel_ids_[cls];
    auto [it, inserted] = table.try_emplace(raw, KernelId{next_kernel_});
    if (inserted) {
      ++next_kernel_;
      maps_.add_kernel({it->second, cls, raw});
    }
    return it->second;
  }

  ObjectId intern_object(const std::string& raw) {
    auto [it, inserted] = object_ids_.try_emplace(raw, ObjectId{next_object_});
    if (inserted) {
      ++next_object_;
      maps_.add_object({it->second, raw});
    }
    return it->second;
  }

  BuildOptions options_;
  GraphBuilder builder_;
  IngestReport report_;
  std::map<ClassId, std::size_t> index_;
  std::map<ClassId, std::unordered_map<std::string, KernelId>> kernel_ids_;
  std::unordered_map<std::string, ObjectId> object_ids_;
  std::uint32_t next_kernel_{1};
  std::uint32_t next_object_{1};
  IdMaps maps_;
};

/// Rebuilds a snapshot from scratch out of every source. Either returns a
/// complete result or throws; nothing is published on failure.
inline BuildResult build_graph(const std::vector<SourceSpec>& sources,
                               const BuildOptions& options = {}) {
  if (sources.empty()) throw Error(Errc::config_error, "no sources configured");
  auto start = std::chrono::steady_clock::now();

  Ingestor ingestor(options);
  for (const auto& source : sources) ingestor.declare(source.kernel_class());
  for (const auto& source : sources) {
    auto malformed = for_each_event(source, [&](RawEvent&& e) {
      ingestor.add(source.class_id, e.kernel_key, e.object_key);
    });
    ingestor.add_malformed(source.class_id, malformed);
  }
  auto result = ingestor.finish();

  result.report.build_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Edge-list persistence: `kernel,object,class` per line, sorted by
// (kernel, object), LF terminated, no header.

inline std::string format_edge_list(const GraphSnapshot& s) {
  std::string out;
  out.reserve(s.arc_count() * 20);
  char buf[16];
  auto put = [&](std::uint32_t v, char sep) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
    out.push_back(sep);
  };
  for (const auto& arc : s.arcs()) {
    put(arc.kernel.value, ',');
    put(arc.object.value, ',');
    put(arc.class_id.value, '\n');
  }
  return out;
}

inline std::size_t save_edge_list(const GraphSnapshot& s,
                                  const std::filesystem::path& sink) {
  auto text = format_edge_list(s);
  auto out = detail::open_output(sink);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::io_error, "write failed on " + sink.string());
  return text.size();
}

inline GraphSnapshot parse_edge_list(std::istream& in,
                                     std::optional<ClassTable> classes = std::nullopt) {
  ClassTable table = classes.value_or(ClassTable{});
  std::vector<Arc> arcs;
  std::unordered_set<std::uint64_t> seen;
  std::unordered_map<KernelId, ClassId> kernel_class;
  std::string line;
  std::size_t line_no = 0;

  auto fail = [&](Errc code, const std::string& why) {
    throw Error(code, "line " + std::to_string(line_no) + ": " + why);
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    auto c1 = view.find(',');
    auto c2 = c1 == std::string_view::npos ? c1 : view.find(',', c1 + 1);
    if (c2 == std::string_view::npos || view.find(',', c2 + 1) != std::string_view::npos) {
      fail(Errc::format_error, "expected kernel,object,class");
    }
    Arc arc;
    if (!detail::parse_uint(view.substr(0, c1), arc.kernel.value) ||
        !detail::parse_uint(view.substr(c1 + 1, c2 - c1 - 1), arc.object.value) ||
        !detail::parse_uint(view.substr(c2 + 1), arc.class_id.value)) {
      fail(Errc::format_error, "fields must be non-negative 32-bit integers");
    }
    auto key = (static_cast<std::uint64_t>(arc.kernel.value) << 32) | arc.object.value;
    if (!seen.insert(key).second) {
      std::ostringstream msg;
      msg << "duplicate arc " << arc.kernel << "->" << arc.object;
      fail(Errc::format_error, msg.str());
    }
    auto [it, inserted] = kernel_class.try_emplace(arc.kernel, arc.class_id);
    if (!inserted && it->second != arc.class_id) {
      std::ostringstream msg;
      msg << "kernel " << arc.kernel << " appears under classes " << it->second
          << " and " << arc.class_id;
      fail(Errc::kernel_class_conflict, msg.str());
    }
    if (!table.contains(arc.class_id)) {
      table.emplace(arc.class_id,
                    KernelClass{arc.class_id, "class-" + std::to_string(arc.class_id.value),
                                ClassKind::Behavioural, 1});
    }
    arcs.push_back(arc);
  }
  if (in.bad()) throw Error(Errc::io_error, "read failed");
  return GraphSnapshot::assemble(std::move(arcs), std::move(table));
}

/// Loads a canonical edge list. Classes seen in the file weigh 1 unless a
/// class table is supplied.
inline GraphSnapshot load_edge_list(const std::filesystem::path& source,
                                    std::optional<ClassTable> classes = std::nullopt) {
  auto in = detail::open_input(source);
  try {
    return parse_edge_list(in, std::move(classes));
  } catch (const Error& e) {
    throw Error(e.code(), source.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sidecar files next to an edge list `graph.csv`:
//   graph.kernels.map   interned_id,class_id,raw_key
//   graph.objects.map   interned_id,0,raw_key
//   graph.classes       class_id,name,kind,weight
//   graph.report.json   last ingest report

inline std::filesystem::path sidecar_path(const std::filesystem::path& edge_list,
                                          std::string_view suffix) {
  auto p = edge_list;
  p.replace_extension(std::string(suffix));
  return p;
}

inline void save_id_maps(const IdMaps& maps, const std::filesystem::path& edge_list) {
  {
    auto out = detail::open_output(sidecar_path(edge_list, ".kernels.map"));
    for (const auto& k : maps.kernels())
      out << k.id.value << ',' << k.class_id.value << ',' << k.raw_key << '\n';
  }
  auto out = detail::open_output(sidecar_path(edge_list, ".objects.map"));
  for (const auto& o : maps.objects()) out << o.id.value << ",0," << o.raw_key << '\n';
}

inline std::optional<IdMaps> load_id_maps(const std::filesystem::path& edge_list) {
  auto kpath = sidecar_path(edge_list, ".kernels.map");
  auto opath = sidecar_path(edge_list, ".objects.map");
  if (!std::filesystem::exists(kpath) || !std::filesystem::exists(opath))
    return std::nullopt;

  IdMaps maps;
  auto read = [](const std::filesystem::path& path, auto&& emit) {
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view view = line;
      auto c1 = view.find(',');
      auto c2 = c1 == std::string_view::npos ? c1 : view.find(',', c1 + 1);
      std::uint32_t id = 0, cls = 0;
      if (c2 == std::string_view::npos || !detail::parse_uint(view.substr(0, c1), id) ||
          !detail::parse_uint(view.substr(c1 + 1, c2 - c1 - 1), cls)) {
        throw Error(Errc::format_error,
                    path.string() + ": line " + std::to_string(line_no) + ": bad map row");
      }
      emit(id, cls, std::string(view.substr(c2 + 1)));
    }
  };
  read(kpath, [&](std::uint32_t id, std::uint32_t cls, std::string raw) {
    maps.add_kernel({KernelId{id}, ClassId{cls}, std::move(raw)});
  });
  read(opath, [&](std::uint32_t id, std::uint32_t, std::string raw) {
    maps.add_object({ObjectId{id}, std::move(raw)});
  });
  return maps;
}

inline void save_class_table(const ClassTable& classes,
                             const std::filesystem::path& edge_list) {
  auto out = detail::open_output(sidecar_path(edge_list, ".classes"));
  for (const auto& [id, cls] : classes) {
    out << id.value << ',' << cls.name << ',' << to_string(cls.kind) << ','
        << cls.weight << '\n';
  }
}

inline std::optional<ClassTable> load_class_table(const std::filesystem::path& edge_list) {
  auto path = sidecar_path(edge_list, ".classes");
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto in = detail::open_input(path);
  ClassTable table;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string_view> f;
    std::string_view view = line;
    for (std::size_t pos = 0;;) {
      auto comma = view.find(',', pos);
      f.push_back(view.substr(pos, comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    KernelClass cls;
    auto kind = f.size() == 4 ? parse_class_kind(f[2]) : std::nullopt;
    if (!kind || !detail::parse_uint(f[0], cls.id.value) ||
        !detail::parse_uint(f[3], cls.weight) || cls.weight == 0) {
      throw Error(Errc::format_error, path.string() + ": bad class row '" + line + "'");
    }
    cls.name = std::string(f[1]);
    cls.kind = *kind;
    table.emplace(cls.id, std::move(cls));
  }
  return table;
}

inline nlohmann::json to_json(const IngestReport& report) {
  auto row = [](const ClassIngest& c) {
    return nlohmann::json{{"events_read", c.events_read},
                          {"arcs_emitted", c.arcs_emitted},
                          {"duplicates_dropped", c.duplicates_dropped},
                          {"malformed_lines", c.malformed_lines}};
  };
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.per_class) {
    auto j = row(c);
    j["class_id"] = c.class_id.value;
    classes.push_back(std::move(j));
  }
  return {{"per_class", std::move(classes)},
          {"totals", row(report.totals)},
          {"build_seconds", report.build_seconds}};
}

/// Graph written by `build`: edge list plus every sidecar.
struct GraphBundle {
  GraphSnapshot snapshot;
  std::optional<IdMaps> maps;
};

inline void save_bundle(const BuildResult& result, const std::filesystem::path& edge_list) {
  save_edge_list(result.snapshot, edge_list);
  save_class_table(result.snapshot.classes(), edge_list);
  save_id_maps(result.maps, edge_list);
  auto out = detail::open_output(sidecar_path(edge_list, ".report.json"));
  out << to_json(result.report).dump(2) << '\n';
}

inline GraphBundle load_bundle(const std::filesystem::path& edge_list) {
  GraphBundle bundle;
  bundle.snapshot = load_edge_list(edge_list, load_class_table(edge_list));
  bundle.maps = load_id_maps(edge_list);
  return bundle;
}

// ---------------------------------------------------------------------------
// Pipeline config (JSON):
//   { "sources": [ { "class_id": 1, "name": "orders", "kind": "behavioural",
//                    "weight": 3, "path": "orders.csv", "format": "csv" } ],
//     "allow_objects": "products.txt" }
// Relative paths resolve against the config file's directory.

struct PipelineConfig {
  std::vector<SourceSpec> sources;
  BuildOptions options;
};

inline std::vector<SourceSpec> parse_sources(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir) {
  if (!doc.contains("sources") || !doc["sources"].is_array() || doc["sources"].empty()) {
    throw Error(Errc::config_error, "config needs a non-empty 'sources' array");
  }
  std::vector<SourceSpec> sources;
  std::unordered_set<std::uint32_t> ids;
  try {
    for (const auto& entry : doc["sources"]) {
      SourceSpec spec;
      spec.class_id = ClassId{entry.at("class_id").get<std::uint32_t>()};
      spec.class_name = entry.value("name", "class-" + std::to_string(spec.class_id.value));
      if (spec.class_name.find_first_of(",\r\n") != std::string::npos) {
        throw Error(Errc::config_error, "class name may not contain commas or newlines");
      }
      auto kind = parse_class_kind(entry.value("kind", "behavioural"));
      if (!kind) throw Error(Errc::config_error, "unknown class kind");
      spec.kind = *kind;
      spec.weight = entry.value("weight", 1u);
      if (spec.weight == 0) throw Error(Errc::config_error, "class weight must be >= 1");
      std::filesystem::path path = entry.at("path").get<std::string>();
      spec.path = path.is_absolute() ? path : base_dir / path;
      spec.format = parse_source_format(entry.value("format", "csv"));
      if (!ids.insert(spec.class_id.value).second) {
        throw Error(Errc::config_error,
                    "class_id " + std::to_string(spec.class_id.value) + " used twice");
      }
      sources.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, std::string("bad source entry: ") + e.what());
  }
  return sources;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(Errc::config_error, path.string() + ": not a JSON object");
  }
  return doc;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  auto doc = read_json_file(path);
  auto base = path.parent_path();
  PipelineConfig config;
  config.sources = parse_sources(doc, base);
  if (doc.contains("allow_objects")) {
    std::filesystem::path allow = doc["allow_objects"].get<std::string>();
    if (allow.is_relative()) allow = base / allow;
    auto in = detail::open_input(allow);
    std::unordered_set<std::string> keys;
    std::string line;
    while (std::getline(in, line)) {
      auto key = detail::trim(line);
      if (!key.empty()) keys.emplace(key);
    }
    config.options.allowed_objects = std::move(keys);
  }
  return config;
}

}  // namespace ars
