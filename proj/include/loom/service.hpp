#pragma once

#include <optional>
#include <string>

#include <loom/runtime.hpp>
#include <loom/store.hpp>

namespace loom {

// Registry operations plus the data path, one level below HTTP: document in,
// document out, failures as Error.  Creating or replacing a service object
// wires the internal subscriptions its composite streams need; deleting (or
// replacing away) streams unwires them.
class Service {
 public:
  Service(Store& store, Runtime& runtime);

  // Returns the description document ({id, name, createdAt, ...,
  // streams: [names], actions}).
  json create_so(const json& body);
  json get_so_description(const std::string& so_id) const;
  json update_so(const std::string& so_id, const json& body);
  void delete_so(const std::string& so_id);
  json list_so() const;                          // {"serviceObjects": [ids]}
  json get_streams(const std::string& so_id) const;  // {"streams": [...]}

  IngestResult ingest(const std::string& so_id, const std::string& stream_id,
                      const json& body);
  json query(const std::string& so_id, const std::string& stream_id,
             std::optional<int64_t> from, std::optional<int64_t> to) const;

  // Returns the new subscription id.
  std::string create_subscription(const std::string& so_id,
                                  const std::string& stream_id,
                                  const json& body);
  void delete_subscription(const std::string& id);

  Store& store() { return store_; }
  Runtime& runtime() { return runtime_; }

 private:
  void check_sources(const ServiceObjectDescriptor& d) const;
  void wire_composites(const ServiceObjectDescriptor& d);

  Store& store_;
  Runtime& runtime_;
};

json so_description_json(const ServiceObjectDescriptor& d);
json so_streams_json(const ServiceObjectDescriptor& d);

}  // namespace loom
