#include <loom/store.hpp>

#include <algorithm>
#include <filesystem>

namespace loom {

namespace fs = std::filesystem;

MemoryStore::MemoryStore(StoreOptions options) : options_(options) {}

void MemoryStore::journal_so(const ServiceObjectDescriptor&) {}
void MemoryStore::journal_so_delete(const std::string&) {}
void MemoryStore::journal_subscription(const Subscription&) {}
void MemoryStore::journal_subscription_delete(const std::string&) {}
void MemoryStore::journal_append(const StreamRef&, const SensorUpdate&) {}
void MemoryStore::journal_stream_drop(const StreamRef&) {}

void MemoryStore::create_so(ServiceObjectDescriptor d) {
  std::unique_lock lock(registry_mutex_);
  if (registry_.count(d.id))
    throw Error(ErrorCode::Conflict, "service object exists: " + d.id);
  auto ptr = std::make_shared<const ServiceObjectDescriptor>(std::move(d));
  registry_[ptr->id] = ptr;
  journal_so(*ptr);
}

void MemoryStore::update_so(ServiceObjectDescriptor d) {
  std::unique_lock lock(registry_mutex_);
  auto it = registry_.find(d.id);
  if (it == registry_.end())
    throw Error(ErrorCode::NotFound, "no such service object: " + d.id);
  auto old = it->second;
  auto ptr = std::make_shared<const ServiceObjectDescriptor>(std::move(d));
  it->second = ptr;
  {
    std::lock_guard logs_lock(logs_mutex_);
    for (const auto& [name, spec] : old->streams) {
      (void)spec;
      if (!ptr->streams.count(name)) {
        StreamRef ref{ptr->id, name};
        logs_.erase({ref.so_id, ref.stream_id});
        journal_stream_drop(ref);
      }
    }
  }
  journal_so(*ptr);
}

void MemoryStore::apply_so_removal(const std::string& so_id) {
  {
    std::lock_guard logs_lock(logs_mutex_);
    for (auto it = logs_.begin(); it != logs_.end();) {
      if (it->first.first == so_id) {
        journal_stream_drop(StreamRef{it->first.first, it->first.second});
        it = logs_.erase(it);
      } else {
        ++it;
      }
    }
  }
  std::lock_guard subs_lock(subs_mutex_);
  std::vector<std::string> doomed;
  for (const auto& [id, sub] : subs_) {
    bool from = sub.source.so_id == so_id;
    bool into = sub.kind == SubscriptionKind::Internal &&
                sub.internal.target.so_id == so_id;
    if (from || into) doomed.push_back(id);
  }
  for (const std::string& id : doomed) {
    erase_subscription_locked(id);
    journal_subscription_delete(id);
  }
}

void MemoryStore::delete_so(const std::string& so_id) {
  std::unique_lock lock(registry_mutex_);
  auto it = registry_.find(so_id);
  if (it == registry_.end())
    throw Error(ErrorCode::NotFound, "no such service object: " + so_id);
  registry_.erase(it);
  journal_so_delete(so_id);
  apply_so_removal(so_id);
}

std::shared_ptr<const ServiceObjectDescriptor> MemoryStore::get_so(
    const std::string& so_id) const {
  auto ptr = try_get_so(so_id);
  if (!ptr)
    throw Error(ErrorCode::NotFound, "no such service object: " + so_id);
  return ptr;
}

std::shared_ptr<const ServiceObjectDescriptor> MemoryStore::try_get_so(
    const std::string& so_id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = registry_.find(so_id);
  return it == registry_.end() ? nullptr : it->second;
}

std::vector<std::string> MemoryStore::list_so_ids() const {
  std::shared_lock lock(registry_mutex_);
  std::vector<std::string> out;
  out.reserve(registry_.size());
  for (const auto& [id, d] : registry_) {
    (void)d;
    out.push_back(id);
  }
  return out;
}

void MemoryStore::require_stream(const std::string& so_id,
                                 const std::string& stream_id) const {
  auto it = registry_.find(so_id);
  if (it == registry_.end())
    throw Error(ErrorCode::NotFound, "no such service object: " + so_id);
  if (!it->second->stream(stream_id))
    throw Error(ErrorCode::NotFound,
                "service object " + so_id + " has no stream " + stream_id);
}

MemoryStore::StreamLog& MemoryStore::log_for(const StreamRef& ref) const {
  std::lock_guard lock(logs_mutex_);
  auto& slot = logs_[{ref.so_id, ref.stream_id}];
  if (!slot) slot = std::make_unique<StreamLog>();
  return *slot;
}

AppendResult MemoryStore::append_update(const StreamRef& ref,
                                        SensorUpdate su) {
  std::shared_lock lock(registry_mutex_);
  require_stream(ref.so_id, ref.stream_id);
  StreamLog& log = log_for(ref);
  std::lock_guard log_lock(log.mutex);
  uint64_t seq = ++log.seq;
  if (su.last_update <= log.last_ts)
    return {AppendOutcome::StaleDiscard, seq};
  log.last_ts = su.last_update;
  auto ptr = std::make_shared<const SensorUpdate>(std::move(su));
  log.entries.push_back(ptr);
  if (options_.max_entries_per_stream > 0)
    while (log.entries.size() > options_.max_entries_per_stream)
      log.entries.pop_front();
  journal_append(ref, *ptr);
  return {AppendOutcome::Accepted, seq};
}

std::shared_ptr<const SensorUpdate> MemoryStore::last_update(
    const StreamRef& ref) const {
  std::shared_lock lock(registry_mutex_);
  require_stream(ref.so_id, ref.stream_id);
  StreamLog& log = log_for(ref);
  std::lock_guard log_lock(log.mutex);
  return log.entries.empty() ? nullptr : log.entries.back();
}

std::vector<SensorUpdate> MemoryStore::query_updates(
    const StreamRef& ref, std::optional<int64_t> from,
    std::optional<int64_t> to) const {
  if (from && to && *from > *to)
    throw Error(ErrorCode::BadRange, "from is after to");
  std::shared_lock lock(registry_mutex_);
  require_stream(ref.so_id, ref.stream_id);
  StreamLog& log = log_for(ref);
  std::lock_guard log_lock(log.mutex);
  std::vector<SensorUpdate> out;
  for (const auto& e : log.entries) {
    if (from && e->last_update < *from) continue;
    if (to && e->last_update > *to) continue;
    out.push_back(*e);
  }
  return out;
}

void MemoryStore::add_subscription(Subscription s) {
  std::shared_lock lock(registry_mutex_);
  require_stream(s.source.so_id, s.source.stream_id);
  std::lock_guard subs_lock(subs_mutex_);
  if (subs_.count(s.id))
    throw Error(ErrorCode::Conflict, "subscription exists: " + s.id);
  subs_by_source_[{s.source.so_id, s.source.stream_id}].push_back(s.id);
  journal_subscription(s);
  subs_[s.id] = std::move(s);
}

void MemoryStore::erase_subscription_locked(const std::string& id) {
  auto it = subs_.find(id);
  if (it == subs_.end()) return;
  auto key = std::make_pair(it->second.source.so_id,
                            it->second.source.stream_id);
  auto& list = subs_by_source_[key];
  list.erase(std::remove(list.begin(), list.end(), id), list.end());
  if (list.empty()) subs_by_source_.erase(key);
  subs_.erase(it);
}

void MemoryStore::remove_subscription(const std::string& id) {
  std::lock_guard subs_lock(subs_mutex_);
  if (!subs_.count(id))
    throw Error(ErrorCode::NotFound, "no such subscription: " + id);
  erase_subscription_locked(id);
  journal_subscription_delete(id);
}

std::optional<Subscription> MemoryStore::get_subscription(
    const std::string& id) const {
  std::lock_guard subs_lock(subs_mutex_);
  auto it = subs_.find(id);
  if (it == subs_.end()) return std::nullopt;
  return it->second;
}

std::vector<Subscription> MemoryStore::subscriptions_of(
    const StreamRef& ref) const {
  std::lock_guard subs_lock(subs_mutex_);
  std::vector<Subscription> out;
  auto it = subs_by_source_.find({ref.so_id, ref.stream_id});
  if (it == subs_by_source_.end()) return out;
  for (const std::string& id : it->second) {
    auto sit = subs_.find(id);
    if (sit != subs_.end()) out.push_back(sit->second);
  }
  return out;
}

std::vector<Subscription> MemoryStore::list_subscriptions() const {
  std::lock_guard subs_lock(subs_mutex_);
  std::vector<Subscription> out;
  out.reserve(subs_.size());
  for (const auto& [id, s] : subs_) {
    (void)id;
    out.push_back(s);
  }
  return out;
}

void MemoryStore::load_so(ServiceObjectDescriptor d) {
  std::unique_lock lock(registry_mutex_);
  auto ptr = std::make_shared<const ServiceObjectDescriptor>(std::move(d));
  registry_[ptr->id] = ptr;
}

void MemoryStore::load_subscription(Subscription s) {
  std::lock_guard subs_lock(subs_mutex_);
  if (subs_.count(s.id)) return;
  subs_by_source_[{s.source.so_id, s.source.stream_id}].push_back(s.id);
  subs_[s.id] = std::move(s);
}

void MemoryStore::load_update(const StreamRef& ref, SensorUpdate su) {
  StreamLog& log = log_for(ref);
  std::lock_guard log_lock(log.mutex);
  if (su.last_update <= log.last_ts) return;
  log.last_ts = su.last_update;
  log.entries.push_back(std::make_shared<const SensorUpdate>(std::move(su)));
  if (options_.max_entries_per_stream > 0)
    while (log.entries.size() > options_.max_entries_per_stream)
      log.entries.pop_front();
}

void MemoryStore::drop_so(const std::string& so_id) {
  std::unique_lock lock(registry_mutex_);
  registry_.erase(so_id);
  std::lock_guard logs_lock(logs_mutex_);
  for (auto it = logs_.begin(); it != logs_.end();) {
    if (it->first.first == so_id)
      it = logs_.erase(it);
    else
      ++it;
  }
  std::lock_guard subs_lock(subs_mutex_);
  std::vector<std::string> doomed;
  for (const auto& [id, sub] : subs_) {
    if (sub.source.so_id == so_id ||
        (sub.kind == SubscriptionKind::Internal &&
         sub.internal.target.so_id == so_id))
      doomed.push_back(id);
  }
  for (const std::string& id : doomed) erase_subscription_locked(id);
}

void MemoryStore::drop_subscription(const std::string& id) {
  std::lock_guard subs_lock(subs_mutex_);
  erase_subscription_locked(id);
}

FileStore::FileStore(std::string root, StoreOptions options)
    : MemoryStore(options), root_(std::move(root)) {
  fs::create_directories(fs::path(root_) / "streams");
  load();
  registry_file_.open(fs::path(root_) / "registry.jsonl",
                      std::ios::app | std::ios::binary);
  if (!registry_file_)
    throw Error(ErrorCode::IoError, "cannot open registry journal");
}

FileStore::~FileStore() = default;

namespace {

// Complete lines only; a torn trailing write is invisible after reload.
std::vector<std::string> complete_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::string> out;
  if (!in) return out;
  std::string all((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  size_t start = 0;
  while (true) {
    size_t nl = all.find('\n', start);
    if (nl == std::string::npos) break;
    if (nl > start) out.push_back(all.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

}  // namespace

void FileStore::load() {
  fs::path reg = fs::path(root_) / "registry.jsonl";
  for (const std::string& line : complete_lines(reg)) {
    json event;
    try {
      event = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::IoError,
                  std::string("corrupt registry journal: ") + e.what());
    }
    std::string op = event.value("op", "");
    if (op == "so")
      load_so(descriptor_from_json(event.at("doc")));
    else if (op == "so.delete")
      drop_so(event.at("id").get<std::string>());
    else if (op == "sub")
      load_subscription(subscription_from_json(event.at("doc")));
    else if (op == "sub.delete")
      drop_subscription(event.at("id").get<std::string>());
    else
      throw Error(ErrorCode::IoError, "corrupt registry journal: op " + op);
  }
  fs::path dir = fs::path(root_) / "streams";
  if (!fs::exists(dir)) return;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() < 7 || name.substr(name.size() - 6) != ".jsonl") continue;
    std::string stem = name.substr(0, name.size() - 6);
    size_t dot = stem.find('.');
    if (dot == std::string::npos) continue;
    StreamRef ref{stem.substr(0, dot), stem.substr(dot + 1)};
    auto so = try_get_so(ref.so_id);
    if (!so || !so->stream(ref.stream_id)) continue;
    for (const std::string& line : complete_lines(entry.path())) {
      json doc;
      try {
        doc = json::parse(line);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError,
                    "corrupt stream log " + name + ": " + e.what());
      }
      load_update(ref, sensor_update_from_json(doc));
    }
  }
}

std::string FileStore::stream_path(const StreamRef& ref) const {
  return (fs::path(root_) / "streams" /
          (ref.so_id + "." + ref.stream_id + ".jsonl"))
      .string();
}

std::ofstream& FileStore::stream_file(const StreamRef& ref) {
  std::lock_guard lock(stream_files_mutex_);
  auto& slot = stream_files_[{ref.so_id, ref.stream_id}];
  if (!slot) {
    slot = std::make_unique<std::ofstream>(stream_path(ref),
                                           std::ios::app | std::ios::binary);
    if (!*slot)
      throw Error(ErrorCode::IoError,
                  "cannot open stream log for " + ref.str());
  }
  return *slot;
}

void FileStore::journal_so(const ServiceObjectDescriptor& d) {
  json event{{"op", "so"}, {"doc", descriptor_to_json(d)}};
  std::lock_guard lock(registry_file_mutex_);
  registry_file_ << event.dump() << '\n';
  registry_file_.flush();
}

void FileStore::journal_so_delete(const std::string& so_id) {
  json event{{"op", "so.delete"}, {"id", so_id}};
  std::lock_guard lock(registry_file_mutex_);
  registry_file_ << event.dump() << '\n';
  registry_file_.flush();
}

void FileStore::journal_subscription(const Subscription& s) {
  json event{{"op", "sub"}, {"doc", subscription_to_json(s)}};
  std::lock_guard lock(registry_file_mutex_);
  registry_file_ << event.dump() << '\n';
  registry_file_.flush();
}

void FileStore::journal_subscription_delete(const std::string& id) {
  json event{{"op", "sub.delete"}, {"id", id}};
  std::lock_guard lock(registry_file_mutex_);
  registry_file_ << event.dump() << '\n';
  registry_file_.flush();
}

void FileStore::journal_append(const StreamRef& ref, const SensorUpdate& su) {
  std::ofstream& out = stream_file(ref);
  out << sensor_update_to_json(su).dump() << '\n';
  out.flush();
}

void FileStore::journal_stream_drop(const StreamRef& ref) {
  {
    std::lock_guard lock(stream_files_mutex_);
    stream_files_.erase({ref.so_id, ref.stream_id});
  }
  std::error_code ec;
  fs::remove(stream_path(ref), ec);
}

}  // namespace loom
