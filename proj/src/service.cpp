#include <loom/service.hpp>

#include <algorithm>

namespace loom {

Service::Service(Store& store, Runtime& runtime)
    : store_(store), runtime_(runtime) {}

json so_description_json(const ServiceObjectDescriptor& d) {
  json out;
  out["id"] = d.id;
  if (!d.name.empty()) out["name"] = d.name;
  out["createdAt"] = d.created_at;
  out["updatedAt"] = d.updated_at;
  if (!d.description.empty()) out["description"] = d.description;
  json names = json::array();
  for (const auto& [name, spec] : d.streams) {
    (void)spec;
    names.push_back(name);
  }
  out["streams"] = std::move(names);
  if (!d.actions.empty()) out["actions"] = d.actions;
  return out;
}

json so_streams_json(const ServiceObjectDescriptor& d) {
  json streams = json::array();
  for (const auto& [name, spec] : d.streams) {
    json entry;
    entry["name"] = name;
    json channels = json::array();
    std::string description;
    if (const auto* simple = std::get_if<SimpleStreamSpec>(&spec)) {
      for (const ChannelDecl& ch : simple->channels) channels.push_back(ch.name);
      description = simple->description;
    } else {
      const auto& comp = std::get<CompositeStreamSpec>(spec);
      for (const CompositeChannelSpec& ch : comp.channels)
        channels.push_back(ch.name);
      description = comp.description;
    }
    entry["channels"] = std::move(channels);
    if (!description.empty()) entry["description"] = description;
    streams.push_back(std::move(entry));
  }
  return json{{"streams", std::move(streams)}};
}

void Service::check_sources(const ServiceObjectDescriptor& d) const {
  std::vector<std::shared_ptr<const ServiceObjectDescriptor>> pinned;
  DescriptorLookup lookup = [&](const std::string& so_id)
      -> const ServiceObjectDescriptor* {
    if (so_id == d.id) return &d;  // self-references resolve against the draft
    auto p = store_.try_get_so(so_id);
    if (!p) return nullptr;
    pinned.push_back(std::move(p));
    return pinned.back().get();
  };
  for (const auto& [name, spec] : d.streams) {
    (void)name;
    if (const auto* comp = std::get_if<CompositeStreamSpec>(&spec))
      resolve_bindings(*comp, lookup);
  }
}

void Service::wire_composites(const ServiceObjectDescriptor& d) {
  for (const auto& [name, spec] : d.streams) {
    const auto* comp = std::get_if<CompositeStreamSpec>(&spec);
    if (!comp) continue;
    for (const auto& [alias, source] : comp->sources) {
      Subscription s;
      s.id = generate_id();
      s.source = source;
      s.kind = SubscriptionKind::Internal;
      s.internal = {StreamRef{d.id, name}, alias};
      store_.add_subscription(std::move(s));
    }
  }
}

json Service::create_so(const json& body) {
  ServiceObjectDescriptor d =
      validate_descriptor(body, generate_id(), wall_now_ms());
  check_sources(d);
  store_.create_so(d);
  try {
    wire_composites(d);
  } catch (...) {
    store_.delete_so(d.id);  // cascades the partially wired subscriptions
    throw;
  }
  return so_description_json(d);
}

json Service::get_so_description(const std::string& so_id) const {
  return so_description_json(*store_.get_so(so_id));
}

json Service::update_so(const std::string& so_id, const json& body) {
  auto old = store_.get_so(so_id);
  ServiceObjectDescriptor d = validate_descriptor(body, so_id, wall_now_ms());
  d.created_at = old->created_at;
  d.updated_at =
      std::max(wall_now_ms(), std::max(old->updated_at, old->created_at) + 1);
  check_sources(d);
  store_.update_so(d);
  // Unwire: everything computed into this SO (it is about to be rewired) and
  // everything hanging off a stream the replacement dropped.
  for (const Subscription& sub : store_.list_subscriptions()) {
    bool rewired = sub.kind == SubscriptionKind::Internal &&
                   sub.internal.target.so_id == so_id;
    bool dangling =
        sub.source.so_id == so_id && !d.stream(sub.source.stream_id);
    if (rewired || dangling) store_.remove_subscription(sub.id);
  }
  wire_composites(d);
  return so_description_json(d);
}

void Service::delete_so(const std::string& so_id) { store_.delete_so(so_id); }

json Service::list_so() const {
  return json{{"serviceObjects", store_.list_so_ids()}};
}

json Service::get_streams(const std::string& so_id) const {
  return so_streams_json(*store_.get_so(so_id));
}

IngestResult Service::ingest(const std::string& so_id,
                             const std::string& stream_id, const json& body) {
  auto so = store_.get_so(so_id);
  const StreamSpec* spec = so->stream(stream_id);
  if (!spec)
    throw Error(ErrorCode::NotFound,
                "service object " + so_id + " has no stream " + stream_id);
  if (std::holds_alternative<CompositeStreamSpec>(*spec))
    throw Error(ErrorCode::CompositeStreamWrite,
                "stream " + stream_id +
                    " is composite; its data is produced by the pipeline");
  return runtime_.ingest({so_id, stream_id}, sensor_update_from_json(body));
}

json Service::query(const std::string& so_id, const std::string& stream_id,
                    std::optional<int64_t> from,
                    std::optional<int64_t> to) const {
  json rows = json::array();
  for (const SensorUpdate& su :
       store_.query_updates({so_id, stream_id}, from, to))
    rows.push_back(sensor_update_to_json(su));
  return json{{"data", std::move(rows)}};
}

std::string Service::create_subscription(const std::string& so_id,
                                         const std::string& stream_id,
                                         const json& body) {
  auto so = store_.get_so(so_id);
  if (!so->stream(stream_id))
    throw Error(ErrorCode::NotFound,
                "service object " + so_id + " has no stream " + stream_id);
  if (!body.is_object())
    throw Error(ErrorCode::MalformedSubscription,
                "subscription body must be an object");
  std::string type = body.value("type", "");

  Subscription s;
  s.id = generate_id();
  s.source = {so_id, stream_id};
  if (type == "http.callback") {
    s.kind = SubscriptionKind::HttpCallback;
    if (!body.contains("callbackUrl") || !body.at("callbackUrl").is_string())
      throw Error(ErrorCode::MalformedSubscription,
                  "http.callback requires a callbackUrl string");
    if (!body.contains("method") || !body.at("method").is_string())
      throw Error(ErrorCode::MalformedSubscription,
                  "http.callback requires a method string");
    s.http.callback_url = body.at("callbackUrl").get<std::string>();
    s.http.method = body.at("method").get<std::string>();
    if (s.http.method != "POST" && s.http.method != "PUT")
      throw Error(ErrorCode::MalformedSubscription,
                  "method must be POST or PUT");
  } else if (type == "internal") {
    s.kind = SubscriptionKind::Internal;
    for (const char* field : {"soId", "streamId", "alias"})
      if (!body.contains(field) || !body.at(field).is_string())
        throw Error(ErrorCode::MalformedSubscription,
                    std::string("internal subscription requires a ") + field +
                        " string");
    s.internal.target = {body.at("soId").get<std::string>(),
                         body.at("streamId").get<std::string>()};
    s.internal.alias = body.at("alias").get<std::string>();
    auto target_so = store_.get_so(s.internal.target.so_id);
    const CompositeStreamSpec* comp =
        target_so->composite(s.internal.target.stream_id);
    if (!comp) {
      if (!target_so->stream(s.internal.target.stream_id))
        throw Error(ErrorCode::NotFound, "no such target stream: " +
                                             s.internal.target.str());
      throw Error(ErrorCode::MalformedSubscription,
                  "target stream " + s.internal.target.str() +
                      " is not composite");
    }
    auto bound = comp->sources.find(s.internal.alias);
    if (bound == comp->sources.end())
      throw Error(ErrorCode::MalformedSubscription,
                  "alias '" + s.internal.alias + "' is not a source of " +
                      s.internal.target.str());
    if (!(bound->second == s.source))
      throw Error(ErrorCode::MalformedSubscription,
                  "alias '" + s.internal.alias + "' of " +
                      s.internal.target.str() + " is bound to " +
                      bound->second.str() + ", not " + s.source.str());
  } else {
    throw Error(ErrorCode::MalformedSubscription,
                type.empty() ? "subscription type is required"
                             : "unknown subscription type: " + type);
  }
  std::string id = s.id;
  store_.add_subscription(std::move(s));
  return id;
}

void Service::delete_subscription(const std::string& id) {
  store_.remove_subscription(id);
}

}  // namespace loom
