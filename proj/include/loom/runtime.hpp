#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <loom/store.hpp>

namespace loom {

int64_t steady_now_ns();
int64_t wall_now_ms();

enum class IngestOutcome { Accepted, StaleDiscard, QueueFull };

struct IngestResult {
  IngestOutcome outcome;
  // Set when Accepted: identifies every computation this injection causes.
  uint64_t trace_id = 0;
};

// One emission's pipeline timings.  input covers the fetches of a composite
// computation, compute the filter/transform evaluation, queue the wait
// between enqueue and worker pickup, output the span from emission until
// every subscriber has received it.
struct StageTimings {
  StreamRef stream;
  uint64_t trace_id = 0;
  int64_t queue_ns = 0;
  int64_t input_ns = 0;
  int64_t compute_ns = 0;
  int64_t output_ns = 0;
};

class MetricsSink {
 public:
  explicit MetricsSink(size_t max_rows = 1 << 16) : max_rows_(max_rows) {}
  void add(const StageTimings& row);
  std::vector<StageTimings> snapshot() const;
  void clear();
  uint64_t dropped() const;

 private:
  mutable std::mutex mutex_;
  std::deque<StageTimings> rows_;
  size_t max_rows_;
  uint64_t dropped_ = 0;
};

enum class ComputeOutcome {
  Emitted,
  Stale,             // received timestamp not newer than stored previous
  InsufficientData,  // a referenced alias has no stored update yet
  PreFiltered,
  PostFiltered,
  LostRace,          // lost the store gate to a concurrent same-target write
  CodeError,         // expression evaluation failed
  Unresolved,        // target or a source disappeared mid-flight
};
const char* compute_outcome_name(ComputeOutcome o);

// Per-computation trace entry, kept in a bounded ring for tests and
// diagnosis.
struct ComputationRecord {
  uint64_t trace_id = 0;
  StreamRef target;
  ComputeOutcome outcome = ComputeOutcome::Emitted;
  int64_t emitted_ts = -1;   // candidate lastUpdate when one was assembled
  int64_t inputs_max_ts = -1;  // max timestamp over consumed inputs
  int input_fetches = 0;       // store reads issued by the input stage
};

struct DiagnosticRecord {
  std::string so_id;
  std::string stream_id;
  uint64_t trace_id = 0;
  std::string code;
  std::string message;
};

// Stage-4 action triggering is recorded, not transported.
struct ActionRecord {
  std::string so_id;
  std::string action;
  uint64_t trace_id = 0;
  int64_t wall_ms = 0;
};

struct RuntimeCounters {
  uint64_t ingest_accepted = 0;
  uint64_t ingest_stale = 0;
  uint64_t ingest_queue_full = 0;
  uint64_t dispatches = 0;
  uint64_t computations = 0;
  uint64_t emissions = 0;
  uint64_t discard_stale = 0;
  uint64_t discard_insufficient = 0;
  uint64_t discard_prefiltered = 0;
  uint64_t discard_postfiltered = 0;
  uint64_t discard_lost_race = 0;
  uint64_t discard_code_error = 0;
  uint64_t discard_unresolved = 0;
  uint64_t external_delivered = 0;
  uint64_t external_failed = 0;
  uint64_t actions_triggered = 0;
};

struct RuntimeOptions {
  int workers = 0;  // 0 = hardware concurrency
  size_t queue_capacity = 65536;
  int callback_timeout_ms = 2000;
  bool record_computations = true;
  size_t record_capacity = 1 << 16;
};

// The processing engine: a shared work queue consumed by a worker pool.
// External ingestion occupies bounded queue slots (backpressure), internal
// emissions are never refused.  Each accepted injection gets a trace id that
// follows every computation it transitively triggers, which makes
// end-to-end latency and quiescence per injection observable.
class Runtime {
 public:
  Runtime(Store& store, RuntimeOptions options = {});
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  void start();
  // Refuses new ingestions, waits until in-flight work drains, stops workers.
  void shutdown();

  // Gate-then-enqueue for externally produced updates on simple streams.
  IngestResult ingest(const StreamRef& origin, SensorUpdate su);

  // True once every queued and in-flight task has finished.
  bool wait_quiescent(int64_t timeout_ms) const;
  // True once every computation of the trace has finished.
  bool wait_trace(uint64_t trace_id, int64_t timeout_ms) const;
  // Injection-to-quiescence duration; -1 while incomplete or unknown.
  int64_t trace_end_to_end_ns(uint64_t trace_id) const;

  RuntimeCounters counters() const;
  const MetricsSink& metrics() const { return metrics_; }
  MetricsSink& metrics() { return metrics_; }
  std::vector<ComputationRecord> computation_records() const;
  std::vector<DiagnosticRecord> diagnostics() const;
  std::vector<ActionRecord> actions() const;
  void clear_records();

  const RuntimeOptions& options() const { return options_; }

 private:
  struct OutputTracker;

  struct Task {
    enum class Kind { Dispatch, Compute };
    Kind kind = Kind::Dispatch;
    StreamRef origin;  // the stream whose update is being propagated
    StreamRef target;  // Compute: the composite to recompute
    std::string origin_alias;  // Compute: alias the origin holds in target
    std::shared_ptr<const SensorUpdate> update;
    uint64_t trace_id = 0;
    int64_t enqueue_ns = 0;
    bool holds_ingest_slot = false;
    std::shared_ptr<OutputTracker> tracker;  // Dispatch: own emission;
                                             // Compute: parent's emission
    // Dispatch: subscribers snapshotted when the emission was stored, so the
    // dispatch stage notifies exactly the set that existed at emission time.
    std::shared_ptr<const std::vector<Subscription>> subscribers;
  };

  void worker_loop();
  void enqueue(Task task);
  void enqueue_batch(std::vector<Task> tasks);
  void run_dispatch(Task& task);
  void run_compute(Task& task);
  // Enqueue a freshly stored emission of `stream` (ingestion or stage (g)).
  // queue_ns < 0 means "not measured yet": the dispatch stage fills it in
  // (ingestions have no earlier queue wait of their own).
  void emit(const StreamRef& stream,
            std::shared_ptr<const SensorUpdate> update, uint64_t trace_id,
            bool holds_ingest_slot, int64_t queue_ns, int64_t input_ns,
            int64_t compute_ns);
  bool deliver_external(const Subscription& sub, const SensorUpdate& su);
  void diagnose(const StreamRef& at, uint64_t trace_id, const std::string& code,
                const std::string& message);
  void record(const ComputationRecord& rec);

  void trace_register(uint64_t trace_id);
  void trace_child(uint64_t trace_id, int64_t count = 1);
  void trace_done(uint64_t trace_id);
  void trace_close_if_idle(uint64_t trace_id);

  Store& store_;
  RuntimeOptions options_;

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Task> queue_;
  bool running_ = false;
  std::atomic<bool> accepting_{false};
  std::vector<std::thread> workers_;

  std::atomic<size_t> ingest_slots_used_{0};
  std::atomic<uint64_t> next_trace_{1};

  // Outstanding = enqueued-or-running tasks; a child is always counted
  // before its parent retires, so zero means quiescent.
  mutable std::mutex idle_mutex_;
  mutable std::condition_variable idle_cv_;
  int64_t outstanding_ = 0;

  struct TraceEntry {
    int64_t outstanding = 0;
    int64_t start_ns = 0;
    int64_t end_ns = -1;
  };
  mutable std::mutex traces_mutex_;
  mutable std::condition_variable traces_cv_;
  std::map<uint64_t, TraceEntry> traces_;

  MetricsSink metrics_;

  mutable std::mutex records_mutex_;
  std::deque<ComputationRecord> records_;
  std::deque<DiagnosticRecord> diagnostics_;
  std::deque<ActionRecord> actions_;

  struct Atomic64 {
    std::atomic<uint64_t> v{0};
    void operator++(int) { v.fetch_add(1, std::memory_order_relaxed); }
    uint64_t get() const { return v.load(std::memory_order_relaxed); }
  };
  struct {
    Atomic64 ingest_accepted, ingest_stale, ingest_queue_full;
    Atomic64 dispatches, computations, emissions;
    Atomic64 discard_stale, discard_insufficient, discard_prefiltered,
        discard_postfiltered, discard_lost_race, discard_code_error,
        discard_unresolved;
    Atomic64 external_delivered, external_failed, actions_triggered;
  } stats_;
};

}  // namespace loom
