#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <loom/model.hpp>

namespace loom {

enum class AppendOutcome { Accepted, StaleDiscard };

struct AppendResult {
  AppendOutcome outcome;
  // Position of this call in the stream's linearization order (1-based,
  // counting every gate evaluation, accepted or not).
  uint64_t seq;
};

// Registry of service objects, per-stream update logs, and the subscription
// table.  All operations are safe to call from any thread.  Appends to one
// stream are linearized by a per-stream gate: an update is accepted iff its
// lastUpdate is strictly greater than the last accepted one.
class Store {
 public:
  virtual ~Store() = default;

  virtual void create_so(ServiceObjectDescriptor d) = 0;
  virtual void update_so(ServiceObjectDescriptor d) = 0;
  // Removes the SO, its stream logs, and every subscription that points at
  // it from either side.
  virtual void delete_so(const std::string& so_id) = 0;
  virtual std::shared_ptr<const ServiceObjectDescriptor> get_so(
      const std::string& so_id) const = 0;
  // nullptr instead of an error for unknown ids.
  virtual std::shared_ptr<const ServiceObjectDescriptor> try_get_so(
      const std::string& so_id) const = 0;
  virtual std::vector<std::string> list_so_ids() const = 0;

  virtual AppendResult append_update(const StreamRef& ref,
                                     SensorUpdate su) = 0;
  // nullptr when the stream has no data yet; NotFound when the stream does
  // not exist.
  virtual std::shared_ptr<const SensorUpdate> last_update(
      const StreamRef& ref) const = 0;
  virtual std::vector<SensorUpdate> query_updates(
      const StreamRef& ref, std::optional<int64_t> from,
      std::optional<int64_t> to) const = 0;

  virtual void add_subscription(Subscription s) = 0;
  virtual void remove_subscription(const std::string& id) = 0;
  virtual std::optional<Subscription> get_subscription(
      const std::string& id) const = 0;
  // Subscriptions hanging off one source stream, in insertion order.
  virtual std::vector<Subscription> subscriptions_of(
      const StreamRef& ref) const = 0;
  virtual std::vector<Subscription> list_subscriptions() const = 0;
};

struct StoreOptions {
  // Per-stream log bound; oldest entries are dropped past it.  0 = unbounded.
  size_t max_entries_per_stream = 0;
};

class MemoryStore : public Store {
 public:
  explicit MemoryStore(StoreOptions options = {});
  ~MemoryStore() override = default;

  void create_so(ServiceObjectDescriptor d) override;
  void update_so(ServiceObjectDescriptor d) override;
  void delete_so(const std::string& so_id) override;
  std::shared_ptr<const ServiceObjectDescriptor> get_so(
      const std::string& so_id) const override;
  std::shared_ptr<const ServiceObjectDescriptor> try_get_so(
      const std::string& so_id) const override;
  std::vector<std::string> list_so_ids() const override;

  AppendResult append_update(const StreamRef& ref, SensorUpdate su) override;
  std::shared_ptr<const SensorUpdate> last_update(
      const StreamRef& ref) const override;
  std::vector<SensorUpdate> query_updates(const StreamRef& ref,
                                          std::optional<int64_t> from,
                                          std::optional<int64_t> to)
      const override;

  void add_subscription(Subscription s) override;
  void remove_subscription(const std::string& id) override;
  std::optional<Subscription> get_subscription(
      const std::string& id) const override;
  std::vector<Subscription> subscriptions_of(
      const StreamRef& ref) const override;
  std::vector<Subscription> list_subscriptions() const override;

 protected:
  struct StreamLog {
    mutable std::mutex mutex;
    std::deque<std::shared_ptr<const SensorUpdate>> entries;
    int64_t last_ts = -1;
    uint64_t seq = 0;
  };

  // Journal hooks, called while the covering lock is held so file order
  // matches the in-memory linearization.  No-ops here.
  virtual void journal_so(const ServiceObjectDescriptor& d);
  virtual void journal_so_delete(const std::string& so_id);
  virtual void journal_subscription(const Subscription& s);
  virtual void journal_subscription_delete(const std::string& id);
  virtual void journal_append(const StreamRef& ref, const SensorUpdate& su);
  virtual void journal_stream_drop(const StreamRef& ref);

  // Registry snapshot loading for the file backend.
  void load_so(ServiceObjectDescriptor d);
  void load_subscription(Subscription s);
  void load_update(const StreamRef& ref, SensorUpdate su);
  void drop_so(const std::string& so_id);
  void drop_subscription(const std::string& id);

  StoreOptions options_;

 private:
  // Requires registry lock held (shared is enough).
  void require_stream(const std::string& so_id,
                      const std::string& stream_id) const;
  StreamLog& log_for(const StreamRef& ref) const;
  void erase_subscription_locked(const std::string& id);
  void apply_so_removal(const std::string& so_id);

  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<const ServiceObjectDescriptor>>
      registry_;

  mutable std::mutex logs_mutex_;
  mutable std::map<std::pair<std::string, std::string>,
                   std::unique_ptr<StreamLog>>
      logs_;

  mutable std::mutex subs_mutex_;
  std::map<std::string, Subscription> subs_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>>
      subs_by_source_;
};

// MemoryStore plus an append-only journal under `root`:
//   <root>/registry.jsonl               SO and subscription events
//   <root>/streams/<soId>.<streamId>.jsonl   one update per line
// Reload replays the journal; a partial trailing line (torn write) is
// discarded.
class FileStore final : public MemoryStore {
 public:
  explicit FileStore(std::string root, StoreOptions options = {});
  ~FileStore() override;

 protected:
  void journal_so(const ServiceObjectDescriptor& d) override;
  void journal_so_delete(const std::string& so_id) override;
  void journal_subscription(const Subscription& s) override;
  void journal_subscription_delete(const std::string& id) override;
  void journal_append(const StreamRef& ref, const SensorUpdate& su) override;
  void journal_stream_drop(const StreamRef& ref) override;

 private:
  void load();
  std::string stream_path(const StreamRef& ref) const;
  std::ofstream& stream_file(const StreamRef& ref);

  std::string root_;
  std::mutex registry_file_mutex_;
  std::ofstream registry_file_;
  std::mutex stream_files_mutex_;
  std::map<std::pair<std::string, std::string>, std::unique_ptr<std::ofstream>>
      stream_files_;
};

}  // namespace loom
