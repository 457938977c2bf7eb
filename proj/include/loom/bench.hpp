#pragma once

#include <map>
#include <string>
#include <vector>

#include <loom/service.hpp>
#include <loom/topo.hpp>

namespace loom::bench {

// One service object per node; composites compute the sum of their operands'
// current values on channel `v` of stream `out`.
struct DeployedTopology {
  topo::TopologySpec spec;
  std::map<std::string, StreamRef> streams;  // node id -> stream
};

DeployedTopology deploy(const topo::TopologySpec& spec, Service& service);

enum class PacingMode {
  Serial,  // wait for each injection to fully propagate before the next
  Paced,   // fire at a fixed rate
};

struct BenchOptions {
  int injections = 10;
  int warmup_injections = 0;  // extra unmeasured leading injections
  double rate_per_sec = 1.0;  // paced mode
  PacingMode mode = PacingMode::Serial;
  int64_t quiescence_timeout_ms = 60000;
};

// Cross-checks of what the run must have done, derived from the graph alone.
struct InvariantReport {
  uint64_t expected_emissions = 0;
  uint64_t observed_emissions = 0;
  uint64_t expected_discards = 0;  // stale arrivals per the execution trees
  uint64_t observed_discards = 0;  // stale + lost-race
  uint64_t other_discards = 0;     // anything else; must be zero
  bool ok() const {
    return expected_emissions == observed_emissions &&
           expected_discards == observed_discards && other_discards == 0;
  }
};

struct BenchReport {
  std::string family;  // length | in | out | random
  int size = 0;
  std::vector<int64_t> end_to_end_ns;  // one per measured injection
  std::vector<StageTimings> samples;   // one per emission
  // Stream key (soId.streamId) -> the node's in/out degree.
  std::map<std::string, std::pair<int, int>> degree_of;
  InvariantReport invariants;
};

// Primes every stream with a baseline update, then injects numbered updates
// with strictly increasing timestamps round-robin over the sources.
BenchReport run_benchmark(Service& service, const DeployedTopology& deployed,
                          const BenchOptions& options,
                          const std::string& family, int size);

// One topology taking part in an interleaved sweep.  The referenced service
// and topology must outlive the run_sweep call.
struct SweepCell {
  Service* service = nullptr;
  const DeployedTopology* deployed = nullptr;
  std::string family;
  int size = 0;
};

// Benchmarks several topologies in one interleaved pass: warmups first, then
// measured injections fired round-robin across the cells, one injection per
// tick of `rate_per_sec`.  Each cell still receives `injections` measured
// updates at a fixed per-cell cadence, but a slow moment of the host machine
// now touches at most a sample or two of every cell instead of wiping out a
// whole cell's run, so the per-cell medians stay comparable to each other.
// Reports are returned in cell order.
std::vector<BenchReport> run_sweep(const std::vector<SweepCell>& cells,
                                   const BenchOptions& options);

struct StageAggRow {
  std::string degree_kind;  // in | out
  int degree = 0;
  std::string stage;  // queue | input | compute | output
  double mean_ns = 0;
  double median_ns = 0;
  double p95_ns = 0;
  size_t n = 0;
};

std::vector<StageAggRow> aggregate_stages(const BenchReport& report);

// Writes stage_by_degree.csv and end_to_end.csv under `outdir`.
void write_csv(const std::vector<BenchReport>& reports,
               const std::string& outdir);
// Per-family end-to-end summary on stdout.
void print_table(const std::vector<BenchReport>& reports);

double percentile(std::vector<double> values, double p);  // linear interp
double median(std::vector<double> values);
// Rank correlation with average ranks on ties; NaN when degenerate.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace loom::bench
