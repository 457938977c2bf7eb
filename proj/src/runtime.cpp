#include <loom/runtime.hpp>

#include <httplib.h>

#include <algorithm>
#include <chrono>

#include <loom/expr.hpp>

namespace loom {

int64_t steady_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int64_t wall_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void MetricsSink::add(const StageTimings& row) {
  std::lock_guard lock(mutex_);
  if (rows_.size() >= max_rows_) {
    rows_.pop_front();
    ++dropped_;
  }
  rows_.push_back(row);
}

std::vector<StageTimings> MetricsSink::snapshot() const {
  std::lock_guard lock(mutex_);
  return {rows_.begin(), rows_.end()};
}

void MetricsSink::clear() {
  std::lock_guard lock(mutex_);
  rows_.clear();
  dropped_ = 0;
}

uint64_t MetricsSink::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

const char* compute_outcome_name(ComputeOutcome o) {
  switch (o) {
    case ComputeOutcome::Emitted: return "Emitted";
    case ComputeOutcome::Stale: return "Stale";
    case ComputeOutcome::InsufficientData: return "InsufficientData";
    case ComputeOutcome::PreFiltered: return "PreFiltered";
    case ComputeOutcome::PostFiltered: return "PostFiltered";
    case ComputeOutcome::LostRace: return "LostRace";
    case ComputeOutcome::CodeError: return "CodeError";
    case ComputeOutcome::Unresolved: return "Unresolved";
  }
  return "?";
}

// Finalizes one emission's output stage once every subscriber has received
// it.  The producing dispatch task holds one token so late finalization can
// never race the fields still being filled in.
struct Runtime::OutputTracker {
  explicit OutputTracker(Runtime& r) : rt(r) {}
  Runtime& rt;
  StageTimings row;
  int64_t emit_ns = 0;
  std::atomic<int> remaining{1};

  void add_children(int n) { remaining.fetch_add(n, std::memory_order_relaxed); }
  void child_received(int64_t now_ns) {
    if (remaining.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      row.output_ns = now_ns - emit_ns;
      rt.metrics_.add(row);
    }
  }
};

Runtime::Runtime(Store& store, RuntimeOptions options)
    : store_(store), options_(options) {
  if (options_.workers <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    options_.workers = hw ? static_cast<int>(hw) : 1;
  }
  if (options_.queue_capacity == 0) options_.queue_capacity = 1;
  accepting_.store(true);
}

Runtime::~Runtime() { shutdown(); }

void Runtime::start() {
  std::unique_lock lock(queue_mutex_);
  if (running_) return;
  running_ = true;
  lock.unlock();
  for (int i = 0; i < options_.workers; ++i)
    workers_.emplace_back([this] { worker_loop(); });
}

void Runtime::shutdown() {
  accepting_.store(false);
  if (workers_.empty()) {
    // Never started: abandon whatever was queued, keeping counters sane.
    std::deque<Task> dropped;
    {
      std::lock_guard lock(queue_mutex_);
      dropped.swap(queue_);
    }
    for (Task& t : dropped) {
      trace_done(t.trace_id);
      std::lock_guard lock(idle_mutex_);
      if (--outstanding_ == 0) idle_cv_.notify_all();
    }
    return;
  }
  wait_quiescent(-1);
  {
    std::lock_guard lock(queue_mutex_);
    running_ = false;
  }
  queue_cv_.notify_all();
  for (std::thread& w : workers_) w.join();
  workers_.clear();
}

void Runtime::enqueue(Task task) {
  {
    std::lock_guard lock(idle_mutex_);
    ++outstanding_;
  }
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(task));
  }
  queue_cv_.notify_one();
}

void Runtime::enqueue_batch(std::vector<Task> tasks) {
  if (tasks.empty()) return;
  const size_t n = tasks.size();
  {
    std::lock_guard lock(idle_mutex_);
    outstanding_ += static_cast<int64_t>(n);
  }
  {
    std::lock_guard lock(queue_mutex_);
    for (Task& t : tasks) queue_.push_back(std::move(t));
  }
  if (n == 1)
    queue_cv_.notify_one();
  else
    queue_cv_.notify_all();
}

IngestResult Runtime::ingest(const StreamRef& origin, SensorUpdate su) {
  if (!accepting_.load()) {
    stats_.ingest_queue_full++;
    return {IngestOutcome::QueueFull};
  }
  auto so = store_.get_so(origin.so_id);
  const StreamSpec* spec = so->stream(origin.stream_id);
  if (!spec)
    throw Error(ErrorCode::NotFound, "service object " + origin.so_id +
                                         " has no stream " + origin.stream_id);
  if (std::holds_alternative<CompositeStreamSpec>(*spec))
    throw Error(ErrorCode::CompositeStreamWrite,
                "stream " + origin.str() +
                    " is composite; its data is produced by the pipeline");

  // Reserve the queue slot before gating so an accepted update always has a
  // place to be dispatched from.
  if (ingest_slots_used_.fetch_add(1) >= options_.queue_capacity) {
    ingest_slots_used_.fetch_sub(1);
    stats_.ingest_queue_full++;
    return {IngestOutcome::QueueFull};
  }
  auto update = std::make_shared<const SensorUpdate>(std::move(su));
  AppendResult gate = store_.append_update(origin, *update);
  if (gate.outcome == AppendOutcome::StaleDiscard) {
    ingest_slots_used_.fetch_sub(1);
    stats_.ingest_stale++;
    return {IngestOutcome::StaleDiscard};
  }
  uint64_t trace_id = next_trace_.fetch_add(1);
  trace_register(trace_id);
  stats_.ingest_accepted++;
  emit(origin, std::move(update), trace_id, /*holds_ingest_slot=*/true, -1, 0,
       0);
  return {IngestOutcome::Accepted, trace_id};
}

void Runtime::emit(const StreamRef& stream,
                   std::shared_ptr<const SensorUpdate> update,
                   uint64_t trace_id, bool holds_ingest_slot, int64_t queue_ns,
                   int64_t input_ns, int64_t compute_ns) {
  auto tracker = std::make_shared<OutputTracker>(*this);
  tracker->row.stream = stream;
  tracker->row.trace_id = trace_id;
  tracker->row.queue_ns = queue_ns;
  tracker->row.input_ns = input_ns;
  tracker->row.compute_ns = compute_ns;
  int64_t now = steady_now_ns();
  tracker->emit_ns = now;

  std::vector<Subscription> fetched;
  try {
    fetched = store_.subscriptions_of(stream);
  } catch (const Error&) {
    // Stream deleted mid-flight; nothing left to notify.
  }
  if (fetched.empty()) {
    // Nothing to dispatch: finalize the timing row (empty output stage).
    if (holds_ingest_slot) ingest_slots_used_.fetch_sub(1);
    if (tracker->row.queue_ns < 0) tracker->row.queue_ns = 0;
    tracker->child_received(now);
    // Emissions from inside a compute task leave the trace open until the
    // worker's own trace_done; only a subscriber-less ingestion, which runs
    // outside any task, has to close the trace itself.
    if (holds_ingest_slot) trace_close_if_idle(trace_id);
    return;
  }

  Task task;
  task.kind = Task::Kind::Dispatch;
  task.origin = stream;
  task.update = std::move(update);
  task.trace_id = trace_id;
  task.enqueue_ns = now;
  task.holds_ingest_slot = holds_ingest_slot;
  task.tracker = std::move(tracker);
  task.subscribers = std::make_shared<const std::vector<Subscription>>(
      std::move(fetched));
  trace_child(trace_id);
  enqueue(std::move(task));
}

void Runtime::worker_loop() {
  for (;;) {
    Task task;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return !running_ || !queue_.empty(); });
      if (queue_.empty()) {
        if (!running_) return;
        continue;
      }
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      if (task.kind == Task::Kind::Dispatch)
        run_dispatch(task);
      else
        run_compute(task);
    } catch (const std::exception& e) {
      diagnose(task.kind == Task::Kind::Dispatch ? task.origin : task.target,
               task.trace_id, "InternalError", e.what());
    }
    trace_done(task.trace_id);
    {
      std::lock_guard lock(idle_mutex_);
      if (--outstanding_ == 0) idle_cv_.notify_all();
    }
  }
}

void Runtime::run_dispatch(Task& task) {
  int64_t now = steady_now_ns();
  stats_.dispatches++;
  if (task.holds_ingest_slot) ingest_slots_used_.fetch_sub(1);
  if (task.tracker->row.queue_ns < 0)
    task.tracker->row.queue_ns = now - task.enqueue_ns;

  static const std::vector<Subscription> kNoSubscribers;
  const std::vector<Subscription>& subs =
      task.subscribers ? *task.subscribers : kNoSubscribers;

  std::vector<Task> children;
  children.reserve(subs.size());
  std::vector<const Subscription*> externals;
  int64_t child_enqueue_ns = steady_now_ns();
  for (const Subscription& sub : subs) {
    if (sub.kind == SubscriptionKind::Internal) {
      Task child;
      child.kind = Task::Kind::Compute;
      child.origin = task.origin;
      child.target = sub.internal.target;
      child.origin_alias = sub.internal.alias;
      child.update = task.update;
      child.trace_id = task.trace_id;
      child.enqueue_ns = child_enqueue_ns;
      child.tracker = task.tracker;
      children.push_back(std::move(child));
    } else {
      externals.push_back(&sub);
    }
  }
  if (!children.empty()) {
    task.tracker->add_children(static_cast<int>(children.size()));
    trace_child(task.trace_id, static_cast<int64_t>(children.size()));
    enqueue_batch(std::move(children));
  }
  for (const Subscription* sub : externals) {
    if (deliver_external(*sub, *task.update))
      stats_.external_delivered++;
    else
      stats_.external_failed++;
  }
  // Self token; covers the external deliveries just completed.
  task.tracker->child_received(steady_now_ns());
}

void Runtime::run_compute(Task& task) {
  int64_t dequeue_ns = steady_now_ns();
  task.tracker->child_received(dequeue_ns);  // the subscriber has the update
  int64_t queue_ns = dequeue_ns - task.enqueue_ns;
  stats_.computations++;

  ComputationRecord rec;
  rec.trace_id = task.trace_id;
  rec.target = task.target;

  auto discard = [&](ComputeOutcome outcome) {
    rec.outcome = outcome;
    switch (outcome) {
      case ComputeOutcome::Stale: stats_.discard_stale++; break;
      case ComputeOutcome::InsufficientData:
        stats_.discard_insufficient++;
        break;
      case ComputeOutcome::PreFiltered: stats_.discard_prefiltered++; break;
      case ComputeOutcome::PostFiltered: stats_.discard_postfiltered++; break;
      case ComputeOutcome::LostRace: stats_.discard_lost_race++; break;
      case ComputeOutcome::CodeError: stats_.discard_code_error++; break;
      case ComputeOutcome::Unresolved: stats_.discard_unresolved++; break;
      case ComputeOutcome::Emitted: break;
    }
    record(rec);
  };

  // (a) Input stage: previous value plus every non-origin source.
  auto so = store_.try_get_so(task.target.so_id);
  const CompositeStreamSpec* spec =
      so ? so->composite(task.target.stream_id) : nullptr;
  if (!spec) {
    diagnose(task.target, task.trace_id, "UnknownSource",
             "composite " + task.target.str() + " no longer resolvable");
    discard(ComputeOutcome::Unresolved);
    return;
  }
  auto origin_binding = spec->sources.find(task.origin_alias);
  if (origin_binding == spec->sources.end() ||
      !(origin_binding->second == task.origin)) {
    diagnose(task.target, task.trace_id, "UnknownSource",
             "alias " + task.origin_alias + " of " + task.target.str() +
                 " no longer maps to " + task.origin.str());
    discard(ComputeOutcome::Unresolved);
    return;
  }

  expr::BindingSet bindings;
  std::vector<std::shared_ptr<const SensorUpdate>> fetched;
  std::shared_ptr<const SensorUpdate> previous;
  int fetches = 0;
  try {
    previous = store_.last_update(task.target);
    ++fetches;
    for (const auto& [alias, ref] : spec->sources) {
      if (alias == task.origin_alias) {
        bindings[alias] = task.update.get();
        continue;
      }
      auto u = store_.last_update(ref);
      ++fetches;
      if (u) {
        bindings[alias] = u.get();
        fetched.push_back(std::move(u));
      }
    }
  } catch (const Error& e) {
    diagnose(task.target, task.trace_id, "UnknownSource", e.what());
    discard(ComputeOutcome::Unresolved);
    return;
  }
  if (previous) bindings["previous"] = previous.get();
  rec.input_fetches = fetches;
  int64_t input_ns = steady_now_ns() - dequeue_ns;

  int64_t max_ts = task.update->last_update;
  if (previous) max_ts = std::max(max_ts, previous->last_update);
  for (const auto& u : fetched) max_ts = std::max(max_ts, u->last_update);
  rec.inputs_max_ts = max_ts;

  // (b) Consistency gate: only strictly newer data may trigger output.
  if (previous && task.update->last_update <= previous->last_update) {
    discard(ComputeOutcome::Stale);
    return;
  }

  // (c) Every alias the expressions read must have data.
  for (const std::string& alias : spec->referenced_aliases) {
    if (!bindings.count(alias)) {
      diagnose(task.target, task.trace_id, "InsufficientData",
               "alias " + alias + " of " + task.target.str() +
                   " has no stored update yet");
      discard(ComputeOutcome::InsufficientData);
      return;
    }
  }

  int64_t compute_start = steady_now_ns();

  // (d) Pre-filter.
  if (!spec->pre_filter.empty()) {
    try {
      if (!expr::evaluate_filter(spec->pre_filter, bindings)) {
        discard(ComputeOutcome::PreFiltered);
        return;
      }
    } catch (const expr::FilterError& e) {
      diagnose(task.target, task.trace_id, "FilterError", e.what());
      discard(ComputeOutcome::PreFiltered);
      return;
    }
  }

  // (e) Transform; the candidate carries the highest consumed timestamp.
  SensorUpdate candidate;
  candidate.stream_name = task.target.stream_id;
  candidate.last_update = max_ts;
  for (const CompositeChannelSpec& ch : spec->channels) {
    try {
      Value v = expr::evaluate(ch.value_expr, bindings);
      ValueType vt = v.type();
      candidate.channels.push_back(
          {ch.name, std::move(v), vt, std::nullopt});
    } catch (const expr::EvalError& e) {
      diagnose(task.target, task.trace_id, "CodeError",
               "channel " + ch.name + ": " + e.what());
      discard(ComputeOutcome::CodeError);
      return;
    }
  }
  rec.emitted_ts = candidate.last_update;

  // (f) Per-channel post-filters see the candidate as `result`.
  auto candidate_ptr = std::make_shared<const SensorUpdate>(std::move(candidate));
  bindings["result"] = candidate_ptr.get();
  for (const CompositeChannelSpec& ch : spec->channels) {
    if (ch.post_filter.empty()) continue;
    try {
      if (!expr::evaluate_filter(ch.post_filter, bindings)) {
        discard(ComputeOutcome::PostFiltered);
        return;
      }
    } catch (const expr::FilterError& e) {
      diagnose(task.target, task.trace_id, "FilterError",
               "post-filter of " + ch.name + ": " + e.what());
      discard(ComputeOutcome::PostFiltered);
      return;
    }
  }
  int64_t compute_ns = steady_now_ns() - compute_start;

  // (g) Store through the atomic gate, trigger actions, emit.
  AppendResult gate;
  try {
    gate = store_.append_update(task.target, *candidate_ptr);
  } catch (const Error& e) {
    diagnose(task.target, task.trace_id, "UnknownSource", e.what());
    discard(ComputeOutcome::Unresolved);
    return;
  }
  if (gate.outcome == AppendOutcome::StaleDiscard) {
    discard(ComputeOutcome::LostRace);
    return;
  }
  stats_.emissions++;
  for (const std::string& action : so->actions) {
    stats_.actions_triggered++;
    std::lock_guard lock(records_mutex_);
    if (actions_.size() >= 4096) actions_.pop_front();
    actions_.push_back({so->id, action, task.trace_id, wall_now_ms()});
  }
  rec.outcome = ComputeOutcome::Emitted;
  record(rec);

  emit(task.target, candidate_ptr, task.trace_id, false, queue_ns, input_ns,
       compute_ns);
}

bool Runtime::deliver_external(const Subscription& sub,
                               const SensorUpdate& su) {
  std::string base, path;
  const std::string& url = sub.http.callback_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    diagnose(sub.source, 0, "DeliveryFailed",
             "subscription " + sub.id + ": bad callback url " + url);
    return false;
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    base = url;
    path = "/";
  } else {
    base = url.substr(0, path_start);
    path = url.substr(path_start);
  }

  httplib::Client client(base);
  int ms = options_.callback_timeout_ms;
  client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);

  std::string body = sensor_update_to_json(su).dump();
  httplib::Result res = sub.http.method == "PUT"
                            ? client.Put(path, body, "application/json")
                            : client.Post(path, body, "application/json");
  if (res && res->status >= 200 && res->status < 300) return true;
  diagnose(sub.source, 0, "DeliveryFailed",
           "subscription " + sub.id + ": " +
               (res ? "status " + std::to_string(res->status)
                    : httplib::to_string(res.error())));
  return false;
}

void Runtime::diagnose(const StreamRef& at, uint64_t trace_id,
                       const std::string& code, const std::string& message) {
  std::lock_guard lock(records_mutex_);
  if (diagnostics_.size() >= 4096) diagnostics_.pop_front();
  diagnostics_.push_back({at.so_id, at.stream_id, trace_id, code, message});
}

void Runtime::record(const ComputationRecord& rec) {
  if (!options_.record_computations) return;
  std::lock_guard lock(records_mutex_);
  if (records_.size() >= options_.record_capacity) records_.pop_front();
  records_.push_back(rec);
}

void Runtime::trace_register(uint64_t trace_id) {
  std::lock_guard lock(traces_mutex_);
  traces_[trace_id] = TraceEntry{0, steady_now_ns(), -1};
}

void Runtime::trace_child(uint64_t trace_id, int64_t count) {
  std::lock_guard lock(traces_mutex_);
  auto it = traces_.find(trace_id);
  if (it != traces_.end()) it->second.outstanding += count;
}

void Runtime::trace_done(uint64_t trace_id) {
  std::lock_guard lock(traces_mutex_);
  auto it = traces_.find(trace_id);
  if (it == traces_.end()) return;
  if (--it->second.outstanding == 0) {
    it->second.end_ns = steady_now_ns();
    traces_cv_.notify_all();
  }
}

void Runtime::trace_close_if_idle(uint64_t trace_id) {
  std::lock_guard lock(traces_mutex_);
  auto it = traces_.find(trace_id);
  if (it == traces_.end()) return;
  if (it->second.outstanding == 0 && it->second.end_ns < 0) {
    it->second.end_ns = steady_now_ns();
    traces_cv_.notify_all();
  }
}

bool Runtime::wait_quiescent(int64_t timeout_ms) const {
  std::unique_lock lock(idle_mutex_);
  auto idle = [&] { return outstanding_ == 0; };
  if (timeout_ms < 0) {
    idle_cv_.wait(lock, idle);
    return true;
  }
  return idle_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), idle);
}

bool Runtime::wait_trace(uint64_t trace_id, int64_t timeout_ms) const {
  std::unique_lock lock(traces_mutex_);
  auto done = [&] {
    auto it = traces_.find(trace_id);
    return it != traces_.end() && it->second.end_ns >= 0;
  };
  if (timeout_ms < 0) {
    traces_cv_.wait(lock, done);
    return true;
  }
  return traces_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                             done);
}

int64_t Runtime::trace_end_to_end_ns(uint64_t trace_id) const {
  std::lock_guard lock(traces_mutex_);
  auto it = traces_.find(trace_id);
  if (it == traces_.end() || it->second.end_ns < 0) return -1;
  return it->second.end_ns - it->second.start_ns;
}

RuntimeCounters Runtime::counters() const {
  RuntimeCounters c;
  c.ingest_accepted = stats_.ingest_accepted.get();
  c.ingest_stale = stats_.ingest_stale.get();
  c.ingest_queue_full = stats_.ingest_queue_full.get();
  c.dispatches = stats_.dispatches.get();
  c.computations = stats_.computations.get();
  c.emissions = stats_.emissions.get();
  c.discard_stale = stats_.discard_stale.get();
  c.discard_insufficient = stats_.discard_insufficient.get();
  c.discard_prefiltered = stats_.discard_prefiltered.get();
  c.discard_postfiltered = stats_.discard_postfiltered.get();
  c.discard_lost_race = stats_.discard_lost_race.get();
  c.discard_code_error = stats_.discard_code_error.get();
  c.discard_unresolved = stats_.discard_unresolved.get();
  c.external_delivered = stats_.external_delivered.get();
  c.external_failed = stats_.external_failed.get();
  c.actions_triggered = stats_.actions_triggered.get();
  return c;
}

std::vector<ComputationRecord> Runtime::computation_records() const {
  std::lock_guard lock(records_mutex_);
  return {records_.begin(), records_.end()};
}

std::vector<DiagnosticRecord> Runtime::diagnostics() const {
  std::lock_guard lock(records_mutex_);
  return {diagnostics_.begin(), diagnostics_.end()};
}

std::vector<ActionRecord> Runtime::actions() const {
  std::lock_guard lock(records_mutex_);
  return {actions_.begin(), actions_.end()};
}

void Runtime::clear_records() {
  std::lock_guard lock(records_mutex_);
  records_.clear();
  diagnostics_.clear();
  actions_.clear();
}

}  // namespace loom
