#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <loom/errors.hpp>
#include <loom/expr.hpp>
#include <loom/value.hpp>

namespace loom {

// (service object id, stream id) pair addressing one stream.
struct StreamRef {
  std::string so_id;
  std::string stream_id;

  auto operator<=>(const StreamRef&) const = default;
  std::string str() const { return so_id + "/" + stream_id; }
};

// One named channel inside a sensor update.
struct ChannelValue {
  std::string name;
  Value current_value;
  ValueType value_type = ValueType::Numeric;
  std::optional<std::string> unit;
};

// The unit of data flowing through streams.  `last_update` is the acceptance
// gate every stream log applies: an incoming update must carry a strictly
// larger value than the last stored one.
struct SensorUpdate {
  std::string stream_name;  // wire field "name"; may be empty
  std::vector<ChannelValue> channels;
  int64_t last_update = 0;  // milliseconds
  std::map<std::string, Value> custom_fields;

  const ChannelValue* channel(const std::string& name) const;
};

json sensor_update_to_json(const SensorUpdate& su);
SensorUpdate sensor_update_from_json(const json& doc);

// Declared (not yet populated) channel of a simple stream.
struct ChannelDecl {
  std::string name;
  std::optional<std::string> type;
  std::optional<std::string> unit;
};

// A stream fed externally through the API.
struct SimpleStreamSpec {
  std::vector<ChannelDecl> channels;
  std::string description;
};

// One output channel of a composite stream: an expression producing the
// value, plus an optional per-channel emission filter where `result` is bound
// to the candidate update.
struct CompositeChannelSpec {
  std::string name;
  std::optional<std::string> declared_type;
  std::string value_expr_text;
  expr::Expression value_expr;
  std::optional<std::string> post_filter_text;
  expr::Expression post_filter;  // empty when absent
};

// A stream computed from other streams.  `sources` binds each alias used by
// the expressions to a concrete stream.  `previous` and `result` are reserved
// aliases and never appear in `sources`.
struct CompositeStreamSpec {
  std::vector<CompositeChannelSpec> channels;
  std::optional<std::string> pre_filter_text;
  expr::Expression pre_filter;  // empty when absent
  std::map<std::string, StreamRef> sources;
  std::string description;
  // Aliases any of the expressions read; absence of data for these aborts a
  // computation.
  std::set<std::string> referenced_aliases;
};

using StreamSpec = std::variant<SimpleStreamSpec, CompositeStreamSpec>;

struct ServiceObjectDescriptor {
  std::string id;
  std::string name;
  std::string description;
  int64_t created_at = 0;
  int64_t updated_at = 0;
  std::map<std::string, StreamSpec> streams;
  std::vector<std::string> actions;

  const StreamSpec* stream(const std::string& stream_id) const;
  const CompositeStreamSpec* composite(const std::string& stream_id) const;
};

json descriptor_to_json(const ServiceObjectDescriptor& d);
ServiceObjectDescriptor descriptor_from_json(const json& doc);

enum class SubscriptionKind { HttpCallback, Internal };

struct HttpCallbackSub {
  std::string callback_url;
  std::string method;  // POST or PUT
};

struct InternalSub {
  StreamRef target;   // composite stream to trigger
  std::string alias;  // which operand of the target this source feeds
};

struct Subscription {
  std::string id;
  StreamRef source;
  SubscriptionKind kind = SubscriptionKind::HttpCallback;
  HttpCallbackSub http;
  InternalSub internal;
};

json subscription_to_json(const Subscription& s);
Subscription subscription_from_json(const json& doc);

// 40 hex chars from the system entropy source.
std::string generate_id();

// Parses and checks a creation/replacement document, compiles every
// expression, and stamps identity.  Pure given (doc, id, now_ms).  Throws
// Error with MalformedDescriptor, ExpressionSyntax, DanglingAlias.
ServiceObjectDescriptor validate_descriptor(const json& doc, std::string id,
                                            int64_t now_ms);

// Resolves every source alias of a composite spec against the registry,
// in alias order.  `lookup` returns nullptr for unknown SOs.  Throws Error
// with UnknownSource when a binding points at a missing SO or stream.
using DescriptorLookup =
    std::function<const ServiceObjectDescriptor*(const std::string& so_id)>;
std::vector<std::pair<std::string, StreamRef>> resolve_bindings(
    const CompositeStreamSpec& spec, const DescriptorLookup& lookup);

}  // namespace loom
