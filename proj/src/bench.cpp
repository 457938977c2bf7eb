#include <loom/bench.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

namespace loom::bench {

namespace {

constexpr const char* kStream = "out";
constexpr const char* kChannel = "v";

json simple_node_body(const std::string& name) {
  return json{{"name", name},
              {"streams",
               json::array({json{{"name", kStream},
                                 {"channels",
                                  json::array({json{{"name", kChannel}}})}}})}};
}

json composite_node_body(const std::string& name,
                         const std::vector<std::string>& operands,
                         const std::map<std::string, StreamRef>& streams) {
  std::string expr;
  for (const std::string& op : operands) {
    if (!expr.empty()) expr += " + ";
    expr += "{$" + op + ".channels." + kChannel + ".current-value}";
  }
  json sources = json::object();
  for (const std::string& op : operands) {
    const StreamRef& ref = streams.at(op);
    sources[op] = json{{"soId", ref.so_id}, {"streamId", ref.stream_id}};
  }
  json channel{{"type", "number"}, {"current-value", expr}};
  json stream{{"channels", json{{kChannel, std::move(channel)}}},
              {"sources", std::move(sources)}};
  return json{{"name", name}, {"streams", json{{kStream, std::move(stream)}}}};
}

SensorUpdate numbered_update(double value, int64_t ts) {
  SensorUpdate su;
  su.stream_name = kStream;
  su.channels.push_back({kChannel, Value(value), ValueType::Numeric,
                         std::nullopt});
  su.last_update = ts;
  return su;
}

// Bookkeeping for one benchmarked topology: degree table, priming, injection
// sequencing, and the graph-derived invariant checks.  run_benchmark drives a
// single cell; run_sweep drives many of them round-robin.
struct CellRun {
  Service* service;
  const DeployedTopology* deployed;
  std::vector<std::string> sources;
  std::map<std::string, topo::ExecutionTree> trees;
  BenchReport report;
  RuntimeCounters before;
  std::vector<uint64_t> traces;
  int64_t next_index = 0;
  int64_t first_measured = 0;

  CellRun(Service& svc, const DeployedTopology& dep, const std::string& family,
          int size)
      : service(&svc), deployed(&dep) {
    sources = deployed->spec.source_ids();
    if (sources.empty())
      throw Error(ErrorCode::InfeasibleKnobs, "topology has no source to feed");
    report.family = family;
    report.size = size;
    std::map<std::string, std::pair<int, int>> degree;  // node -> (in, out)
    for (const auto& [from, to] : deployed->spec.edges) {
      degree[to].first++;
      degree[from].second++;
    }
    for (const topo::Node& node : deployed->spec.nodes)
      report.degree_of[deployed->streams.at(node.id).str()] = degree[node.id];
    for (const std::string& src : sources)
      trees.emplace(src, derive_execution_tree(deployed->spec, src));
  }

  Runtime& runtime() { return service->runtime(); }

  // Prime every stream (sources and composites alike) directly in the store
  // so each expression finds operand data and reachability alone decides
  // which composites emit.
  void prime() {
    for (const topo::Node& node : deployed->spec.nodes)
      service->store().append_update(deployed->streams.at(node.id),
                                     numbered_update(0, 1000));
  }

  uint64_t inject() {
    int64_t index = next_index++;
    const std::string& src = sources[index % sources.size()];
    const StreamRef& ref = deployed->streams.at(src);
    IngestResult r = runtime().ingest(
        ref, numbered_update(static_cast<double>(index), 2000 + index));
    if (r.outcome != IngestOutcome::Accepted)
      throw Error(ErrorCode::RuntimeUnhealthy,
                  "injection " + std::to_string(index) + " was not accepted");
    return r.trace_id;
  }

  void start_measuring() {
    runtime().metrics().clear();
    before = runtime().counters();
    first_measured = next_index;
  }

  void finish() {
    for (uint64_t trace : traces) {
      int64_t ns = runtime().trace_end_to_end_ns(trace);
      if (ns < 0)
        throw Error(ErrorCode::RuntimeUnhealthy, "trace did not complete");
      report.end_to_end_ns.push_back(ns);
    }
    RuntimeCounters after = runtime().counters();
    InvariantReport& inv = report.invariants;
    for (size_t k = 0; k < traces.size(); ++k) {
      const topo::ExecutionTree& tree = trees.at(
          sources[static_cast<size_t>(first_measured + int64_t(k)) %
                  sources.size()]);
      inv.expected_emissions += tree.reachable.size();
      inv.expected_discards += tree.expected_discards;
    }
    // Only composite computations emit; source ingestions are not counted.
    inv.observed_emissions = after.emissions - before.emissions;
    inv.observed_discards = (after.discard_stale - before.discard_stale) +
                            (after.discard_lost_race -
                             before.discard_lost_race);
    inv.other_discards =
        (after.discard_insufficient - before.discard_insufficient) +
        (after.discard_prefiltered - before.discard_prefiltered) +
        (after.discard_postfiltered - before.discard_postfiltered) +
        (after.discard_code_error - before.discard_code_error) +
        (after.discard_unresolved - before.discard_unresolved);

    report.samples = runtime().metrics().snapshot();
  }
};

}  // namespace

DeployedTopology deploy(const topo::TopologySpec& spec, Service& service) {
  DeployedTopology out;
  out.spec = spec;
  // Pass 1: every node starts as a simple stream so any later composite can
  // reference it, whatever the edge order (cycles included).
  for (const topo::Node& node : spec.nodes) {
    json desc = service.create_so(simple_node_body(node.id));
    out.streams[node.id] = {desc.at("id").get<std::string>(), kStream};
  }
  // Pass 2: turn composite nodes into summations over their operands.
  std::map<std::string, std::vector<std::string>> operands;
  for (const auto& [from, to] : spec.edges) operands[to].push_back(from);
  for (const topo::Node& node : spec.nodes) {
    if (node.kind != topo::NodeKind::Composite) continue;
    service.update_so(
        out.streams.at(node.id).so_id,
        composite_node_body(node.id, operands.at(node.id), out.streams));
  }
  return out;
}

BenchReport run_benchmark(Service& service, const DeployedTopology& deployed,
                          const BenchOptions& options,
                          const std::string& family, int size) {
  if (options.injections < 1)
    throw Error(ErrorCode::InfeasibleKnobs, "need at least one injection");
  CellRun cell(service, deployed, family, size);
  Runtime& runtime = cell.runtime();

  cell.prime();
  for (int w = 0; w < options.warmup_injections; ++w) {
    uint64_t trace = cell.inject();
    if (!runtime.wait_trace(trace, options.quiescence_timeout_ms))
      throw Error(ErrorCode::RuntimeUnhealthy, "warmup did not drain");
  }
  cell.start_measuring();

  cell.traces.reserve(options.injections);
  if (options.mode == PacingMode::Serial) {
    for (int k = 0; k < options.injections; ++k) {
      uint64_t trace = cell.inject();
      if (!runtime.wait_trace(trace, options.quiescence_timeout_ms))
        throw Error(ErrorCode::RuntimeUnhealthy,
                    "quiescence not reached within deadline");
      cell.traces.push_back(trace);
    }
  } else {
    double rate = options.rate_per_sec > 0 ? options.rate_per_sec : 1.0;
    auto interval =
        std::chrono::nanoseconds(static_cast<int64_t>(1e9 / rate));
    auto slot = std::chrono::steady_clock::now();
    for (int k = 0; k < options.injections; ++k) {
      cell.traces.push_back(cell.inject());
      slot += interval;
      std::this_thread::sleep_until(slot);
    }
    if (!runtime.wait_quiescent(options.quiescence_timeout_ms))
      throw Error(ErrorCode::RuntimeUnhealthy,
                  "quiescence not reached within deadline");
  }
  cell.finish();
  return std::move(cell.report);
}

std::vector<BenchReport> run_sweep(const std::vector<SweepCell>& cells,
                                   const BenchOptions& options) {
  if (options.injections < 1)
    throw Error(ErrorCode::InfeasibleKnobs, "need at least one injection");
  if (cells.empty())
    throw Error(ErrorCode::InfeasibleKnobs, "sweep needs at least one cell");

  std::vector<CellRun> runs;
  runs.reserve(cells.size());
  for (const SweepCell& cell : cells) {
    if (!cell.service || !cell.deployed)
      throw Error(ErrorCode::InfeasibleKnobs,
                  "sweep cell is missing its service or topology");
    runs.emplace_back(*cell.service, *cell.deployed, cell.family, cell.size);
  }

  for (CellRun& run : runs) run.prime();
  // Warmup rounds visit every cell so all of them start the measured phase
  // in the same steady state.
  for (int w = 0; w < options.warmup_injections; ++w) {
    for (CellRun& run : runs) {
      uint64_t trace = run.inject();
      if (!run.runtime().wait_trace(trace, options.quiescence_timeout_ms))
        throw Error(ErrorCode::RuntimeUnhealthy, "warmup did not drain");
    }
  }
  for (CellRun& run : runs) run.start_measuring();

  for (CellRun& run : runs) run.traces.reserve(options.injections);
  if (options.mode == PacingMode::Serial) {
    for (int k = 0; k < options.injections; ++k) {
      for (CellRun& run : runs) {
        uint64_t trace = run.inject();
        if (!run.runtime().wait_trace(trace, options.quiescence_timeout_ms))
          throw Error(ErrorCode::RuntimeUnhealthy,
                      "quiescence not reached within deadline");
        run.traces.push_back(trace);
      }
    }
  } else {
    double rate = options.rate_per_sec > 0 ? options.rate_per_sec : 1.0;
    auto interval =
        std::chrono::nanoseconds(static_cast<int64_t>(1e9 / rate));
    auto slot = std::chrono::steady_clock::now();
    for (int k = 0; k < options.injections; ++k) {
      for (CellRun& run : runs) {
        run.traces.push_back(run.inject());
        slot += interval;
        std::this_thread::sleep_until(slot);
      }
    }
    for (CellRun& run : runs)
      if (!run.runtime().wait_quiescent(options.quiescence_timeout_ms))
        throw Error(ErrorCode::RuntimeUnhealthy,
                    "quiescence not reached within deadline");
  }

  std::vector<BenchReport> reports;
  reports.reserve(runs.size());
  for (CellRun& run : runs) {
    run.finish();
    reports.push_back(std::move(run.report));
  }
  return reports;
}

std::vector<StageAggRow> aggregate_stages(const BenchReport& report) {
  // (kind, degree, stage) -> sample list
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>>
      buckets;
  for (const StageTimings& row : report.samples) {
    auto it = report.degree_of.find(row.stream.str());
    if (it == report.degree_of.end()) continue;
    auto [in_deg, out_deg] = it->second;
    const std::pair<const char*, double> stages[] = {
        {"queue", double(row.queue_ns)},
        {"input", double(row.input_ns)},
        {"compute", double(row.compute_ns)},
        {"output", double(row.output_ns)}};
    for (const auto& [stage, value] : stages) {
      buckets[{"in", in_deg, stage}].push_back(value);
      buckets[{"out", out_deg, stage}].push_back(value);
    }
  }
  std::vector<StageAggRow> rows;
  for (auto& [key, values] : buckets) {
    StageAggRow row;
    row.degree_kind = std::get<0>(key);
    row.degree = std::get<1>(key);
    row.stage = std::get<2>(key);
    row.n = values.size();
    row.mean_ns = std::accumulate(values.begin(), values.end(), 0.0) /
                  double(values.size());
    row.median_ns = median(values);
    row.p95_ns = percentile(values, 95);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_csv(const std::vector<BenchReport>& reports,
               const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::ofstream stage(fs::path(outdir) / "stage_by_degree.csv");
  stage << "degreeKind,degree,stage,mean_ns,median_ns,p95_ns,n\n";
  std::ofstream e2e(fs::path(outdir) / "end_to_end.csv");
  e2e << "family,size,injection,ns\n";
  if (!stage || !e2e)
    throw Error(ErrorCode::IoError, "cannot write reports under " + outdir);
  for (const BenchReport& report : reports) {
    for (const StageAggRow& row : aggregate_stages(report))
      stage << row.degree_kind << ',' << row.degree << ',' << row.stage << ','
            << std::llround(row.mean_ns) << ',' << std::llround(row.median_ns)
            << ',' << std::llround(row.p95_ns) << ',' << row.n << '\n';
    for (size_t k = 0; k < report.end_to_end_ns.size(); ++k)
      e2e << report.family << ',' << report.size << ',' << k << ','
          << report.end_to_end_ns[k] << '\n';
  }
}

void print_table(const std::vector<BenchReport>& reports) {
  std::printf("%-8s %6s %10s %14s %14s %10s\n", "family", "size", "inject",
              "median_ms", "p95_ms", "checks");
  for (const BenchReport& report : reports) {
    std::vector<double> ns(report.end_to_end_ns.begin(),
                           report.end_to_end_ns.end());
    double med = ns.empty() ? 0 : median(ns);
    double p95 = ns.empty() ? 0 : percentile(ns, 95);
    std::printf("%-8s %6d %10zu %14.3f %14.3f %10s\n", report.family.c_str(),
                report.size, ns.size(), med / 1e6, p95 / 1e6,
                report.invariants.ok() ? "ok" : "VIOLATED");
  }
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double pos = (p / 100.0) * double(values.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  double frac = pos - double(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double median(std::vector<double> values) {
  return percentile(std::move(values), 50);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = (double(i) + double(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nan("");
  std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(rx.size());
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(ry.size());
  double cov = 0, vx = 0, vy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0 || vy == 0) return std::nan("");
  return cov / std::sqrt(vx * vy);
}

}  // namespace loom::bench
