#include <loom/model.hpp>

#include <algorithm>
#include <random>

#if defined(__linux__)
#include <sys/random.h>
#endif

namespace loom {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDescriptor: return "MalformedDescriptor";
    case ErrorCode::MalformedUpdate: return "MalformedUpdate";
    case ErrorCode::MalformedSubscription: return "MalformedSubscription";
    case ErrorCode::ExpressionSyntax: return "ExpressionSyntax";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::DanglingAlias: return "DanglingAlias";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::CompositeStreamWrite: return "CompositeStreamWrite";
    case ErrorCode::QueueFull: return "QueueFull";
    case ErrorCode::InfeasibleKnobs: return "InfeasibleKnobs";
    case ErrorCode::RuntimeUnhealthy: return "RuntimeUnhealthy";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

const char* value_type_name(ValueType t) {
  switch (t) {
    case ValueType::Numeric: return "numeric";
    case ValueType::Boolean: return "boolean";
    case ValueType::String: return "string";
    case ValueType::Array: return "array";
  }
  return "unknown";
}

ValueType Value::type() const {
  if (is_number()) return ValueType::Numeric;
  if (is_bool()) return ValueType::Boolean;
  if (is_string()) return ValueType::String;
  if (is_array()) return ValueType::Array;
  throw std::logic_error("type() on null value");
}

const char* Value::type_name() const {
  if (is_null()) return "null";
  return value_type_name(type());
}

json value_to_json(const Value& v) {
  if (v.is_number()) {
    double d = v.as_number();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15)
      return json(static_cast<int64_t>(d));
    return json(d);
  }
  if (v.is_bool()) return json(v.as_bool());
  if (v.is_string()) return json(v.as_string());
  if (v.is_array()) {
    json arr = json::array();
    for (const Value& e : v.as_array()) arr.push_back(value_to_json(e));
    return arr;
  }
  return json();
}

Value value_from_json(const json& j) {
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array()) {
    Value::Array out;
    out.reserve(j.size());
    for (const json& e : j) out.push_back(value_from_json(e));
    return Value(std::move(out));
  }
  throw Error(ErrorCode::MalformedUpdate,
              "value must be a number, boolean, string, or array");
}

std::string value_type_to_string(ValueType t) { return value_type_name(t); }

bool value_type_from_string(const std::string& s, ValueType* out) {
  if (s == "numeric" || s == "number") *out = ValueType::Numeric;
  else if (s == "boolean") *out = ValueType::Boolean;
  else if (s == "string") *out = ValueType::String;
  else if (s == "array") *out = ValueType::Array;
  else return false;
  return true;
}

namespace {

bool homogeneous_array(const Value::Array& a) {
  if (a.empty()) return true;
  if (a[0].is_null()) return false;
  ValueType t = a[0].type();
  for (const Value& v : a) {
    if (v.is_null() || v.type() != t) return false;
    if (v.is_array() && !homogeneous_array(v.as_array())) return false;
  }
  return true;
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

[[noreturn]] void bad_descriptor(const std::string& msg) {
  throw Error(ErrorCode::MalformedDescriptor, msg);
}

[[noreturn]] void bad_update(const std::string& msg) {
  throw Error(ErrorCode::MalformedUpdate, msg);
}

// Collections of named things appear on the wire either as an array of
// objects carrying a "name" field or as an object keyed by name.  Returns
// name -> body pairs in a deterministic (sorted) order.
std::vector<std::pair<std::string, json>> named_collection(
    const json& j, const std::string& what) {
  std::vector<std::pair<std::string, json>> out;
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      json body = it.value();
      if (!body.is_object()) bad_descriptor(what + " entry must be an object");
      out.emplace_back(it.key(), std::move(body));
    }
    return out;
  }
  if (j.is_array()) {
    for (const json& e : j) {
      if (!e.is_object() || !e.contains("name") || !e["name"].is_string())
        bad_descriptor(what + " entry must be an object with a name");
      json body = e;
      std::string name = body["name"].get<std::string>();
      body.erase("name");
      out.emplace_back(std::move(name), std::move(body));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 1; i < out.size(); i++)
      if (out[i].first == out[i - 1].first)
        bad_descriptor("duplicate " + what + " name: " + out[i].first);
    return out;
  }
  bad_descriptor(what + " must be an array or an object");
}

int64_t int_field(const json& j, const std::string& key, bool required,
                  int64_t fallback, void (*fail)(const std::string&)) {
  if (!j.contains(key)) {
    if (required) fail("missing field: " + key);
    return fallback;
  }
  const json& v = j.at(key);
  if (v.is_number_integer() || v.is_number_unsigned())
    return v.get<int64_t>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == std::floor(d)) return static_cast<int64_t>(d);
  }
  fail(key + " must be an integer");
  return 0;
}

std::string string_field(const json& j, const std::string& key, bool required,
                         void (*fail)(const std::string&)) {
  if (!j.contains(key)) {
    if (required) fail("missing field: " + key);
    return "";
  }
  if (!j.at(key).is_string()) fail(key + " must be a string");
  return j.at(key).get<std::string>();
}

}  // namespace

const ChannelValue* SensorUpdate::channel(const std::string& name) const {
  for (const ChannelValue& c : channels)
    if (c.name == name) return &c;
  return nullptr;
}

json sensor_update_to_json(const SensorUpdate& su) {
  json doc = json::object();
  if (!su.stream_name.empty()) doc["name"] = su.stream_name;
  json channels = json::array();
  for (const ChannelValue& c : su.channels) {
    json ch = json::object();
    ch["name"] = c.name;
    ch["current-value"] = value_to_json(c.current_value);
    ch["type"] = value_type_to_string(c.value_type);
    if (c.unit) ch["unit"] = *c.unit;
    channels.push_back(std::move(ch));
  }
  doc["channels"] = std::move(channels);
  doc["lastUpdate"] = su.last_update;
  if (!su.custom_fields.empty()) {
    json cf = json::object();
    for (const auto& [k, v] : su.custom_fields) cf[k] = value_to_json(v);
    doc["customFields"] = std::move(cf);
  }
  return doc;
}

SensorUpdate sensor_update_from_json(const json& doc) {
  if (!doc.is_object()) bad_update("update must be a JSON object");
  if (!doc.contains("channels")) bad_update("missing field: channels");
  SensorUpdate out;
  out.stream_name = string_field(doc, "name", false, bad_update);
  auto entries = named_collection(doc.at("channels"), "channel");
  if (entries.empty()) bad_update("channels must not be empty");
  for (auto& [name, body] : entries) {
    ChannelValue c;
    c.name = name;
    if (!body.contains("current-value"))
      bad_update("channel " + name + ": missing current-value");
    c.current_value = value_from_json(body.at("current-value"));
    if (c.current_value.is_array() &&
        !homogeneous_array(c.current_value.as_array()))
      bad_update("channel " + name + ": array values must be homogeneous");
    c.value_type = c.current_value.type();
    if (body.contains("type")) {
      ValueType declared;
      if (!body.at("type").is_string() ||
          !value_type_from_string(body.at("type").get<std::string>(),
                                  &declared))
        bad_update("channel " + name + ": bad type tag");
      if (declared != c.value_type)
        bad_update("channel " + name + ": type tag does not match value");
    }
    if (body.contains("unit")) {
      if (!body.at("unit").is_string())
        bad_update("channel " + name + ": unit must be a string");
      c.unit = body.at("unit").get<std::string>();
    }
    out.channels.push_back(std::move(c));
  }
  out.last_update = int_field(doc, "lastUpdate", true, 0, bad_update);
  if (out.last_update < 0) bad_update("lastUpdate must be >= 0");
  if (doc.contains("customFields")) {
    const json& cf = doc.at("customFields");
    if (!cf.is_object()) bad_update("customFields must be an object");
    for (auto it = cf.begin(); it != cf.end(); ++it) {
      const json& v = it.value();
      if (!(v.is_number() || v.is_boolean() || v.is_string()))
        bad_update("customFields." + it.key() + " must be a scalar");
      out.custom_fields[it.key()] = value_from_json(v);
    }
  }
  return out;
}

const StreamSpec* ServiceObjectDescriptor::stream(
    const std::string& stream_id) const {
  auto it = streams.find(stream_id);
  return it == streams.end() ? nullptr : &it->second;
}

const CompositeStreamSpec* ServiceObjectDescriptor::composite(
    const std::string& stream_id) const {
  const StreamSpec* s = stream(stream_id);
  if (!s) return nullptr;
  return std::get_if<CompositeStreamSpec>(s);
}

namespace {

StreamRef stream_ref_from_json(const json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("soId") || !j.contains("streamId") ||
      !j.at("soId").is_string() || !j.at("streamId").is_string())
    bad_descriptor(what + " must carry soId and streamId strings");
  return StreamRef{j.at("soId").get<std::string>(),
                   j.at("streamId").get<std::string>()};
}

json stream_ref_to_json(const StreamRef& ref) {
  return json{{"soId", ref.so_id}, {"streamId", ref.stream_id}};
}

expr::Expression compile(const std::string& text, const std::string& stream,
                         const std::string& where) {
  try {
    return expr::parse(text);
  } catch (const expr::SyntaxError& e) {
    throw Error(e.kind() == expr::SyntaxErrorKind::UnknownFunction
                    ? ErrorCode::UnknownFunction
                    : ErrorCode::ExpressionSyntax,
                "stream " + stream + ", " + where + ": " + e.what() +
                    " (offset " + std::to_string(e.offset()) + ")");
  }
}

void check_aliases(const expr::Expression& e,
                   const std::map<std::string, StreamRef>& sources,
                   bool allow_result, const std::string& stream,
                   const std::string& where,
                   std::set<std::string>* referenced) {
  for (const std::string& alias : e.referenced_aliases()) {
    if (alias == "result") {
      if (allow_result) continue;
      throw Error(ErrorCode::DanglingAlias,
                  "stream " + stream + ", " + where +
                      ": 'result' is only available in post-filters");
    }
    if (alias == "previous") {
      referenced->insert(alias);
      continue;
    }
    if (!sources.count(alias))
      throw Error(ErrorCode::DanglingAlias,
                  "stream " + stream + ", " + where + ": alias '" + alias +
                      "' is not bound by sources");
    referenced->insert(alias);
  }
}

bool looks_composite(const json& body) {
  if (body.contains("sources") || body.contains("pre-filter")) return true;
  if (!body.contains("channels")) return false;
  const json& chans = body.at("channels");
  if (chans.is_object()) {
    for (const auto& e : chans)
      if (e.is_object() && e.contains("current-value")) return true;
  } else if (chans.is_array()) {
    for (const json& e : chans)
      if (e.is_object() && e.contains("current-value")) return true;
  }
  return false;
}

CompositeStreamSpec parse_composite(const std::string& name,
                                    const json& body) {
  CompositeStreamSpec spec;
  spec.description = string_field(body, "description", false, bad_descriptor);
  if (!body.contains("sources") || !body.at("sources").is_object() ||
      body.at("sources").empty())
    bad_descriptor("composite stream " + name +
                   " needs a non-empty sources object");
  for (auto it = body.at("sources").begin(); it != body.at("sources").end();
       ++it) {
    const std::string& alias = it.key();
    if (alias == "previous" || alias == "result")
      bad_descriptor("stream " + name + ": alias '" + alias +
                     "' is reserved");
    if (!valid_name(alias))
      bad_descriptor("stream " + name + ": bad alias '" + alias + "'");
    spec.sources[alias] =
        stream_ref_from_json(it.value(), "sources." + alias);
  }
  if (!body.contains("channels"))
    bad_descriptor("composite stream " + name + " needs channels");
  auto entries = named_collection(body.at("channels"), "channel");
  if (entries.empty())
    bad_descriptor("composite stream " + name + " needs channels");
  for (auto& [cname, cbody] : entries) {
    if (!valid_name(cname))
      bad_descriptor("stream " + name + ": bad channel name '" + cname + "'");
    CompositeChannelSpec ch;
    ch.name = cname;
    if (cbody.contains("type")) {
      if (!cbody.at("type").is_string())
        bad_descriptor("stream " + name + " channel " + cname +
                       ": type must be a string");
      ch.declared_type = cbody.at("type").get<std::string>();
    }
    if (!cbody.contains("current-value") ||
        !cbody.at("current-value").is_string())
      bad_descriptor("stream " + name + " channel " + cname +
                     ": current-value expression required");
    ch.value_expr_text = cbody.at("current-value").get<std::string>();
    ch.value_expr = compile(ch.value_expr_text, name, "channel " + cname);
    check_aliases(ch.value_expr, spec.sources, false, name,
                  "channel " + cname, &spec.referenced_aliases);
    if (cbody.contains("post-filter")) {
      if (!cbody.at("post-filter").is_string())
        bad_descriptor("stream " + name + " channel " + cname +
                       ": post-filter must be a string");
      ch.post_filter_text = cbody.at("post-filter").get<std::string>();
      ch.post_filter =
          compile(*ch.post_filter_text, name, "post-filter of " + cname);
      check_aliases(ch.post_filter, spec.sources, true, name,
                    "post-filter of " + cname, &spec.referenced_aliases);
    }
    spec.channels.push_back(std::move(ch));
  }
  if (body.contains("pre-filter")) {
    if (!body.at("pre-filter").is_string())
      bad_descriptor("stream " + name + ": pre-filter must be a string");
    spec.pre_filter_text = body.at("pre-filter").get<std::string>();
    spec.pre_filter = compile(*spec.pre_filter_text, name, "pre-filter");
    check_aliases(spec.pre_filter, spec.sources, false, name, "pre-filter",
                  &spec.referenced_aliases);
  }
  return spec;
}

SimpleStreamSpec parse_simple(const std::string& name, const json& body) {
  SimpleStreamSpec spec;
  spec.description = string_field(body, "description", false, bad_descriptor);
  if (body.contains("channels")) {
    for (auto& [cname, cbody] : named_collection(body.at("channels"),
                                                 "channel")) {
      if (!valid_name(cname))
        bad_descriptor("stream " + name + ": bad channel name '" + cname +
                       "'");
      ChannelDecl decl;
      decl.name = cname;
      if (cbody.contains("type")) {
        if (!cbody.at("type").is_string())
          bad_descriptor("stream " + name + " channel " + cname +
                         ": type must be a string");
        decl.type = cbody.at("type").get<std::string>();
      }
      if (cbody.contains("unit")) {
        if (!cbody.at("unit").is_string())
          bad_descriptor("stream " + name + " channel " + cname +
                         ": unit must be a string");
        decl.unit = cbody.at("unit").get<std::string>();
      }
      spec.channels.push_back(std::move(decl));
    }
  }
  return spec;
}

ServiceObjectDescriptor parse_descriptor(const json& doc) {
  if (!doc.is_object()) bad_descriptor("descriptor must be a JSON object");
  ServiceObjectDescriptor d;
  d.id = string_field(doc, "id", false, bad_descriptor);
  d.name = string_field(doc, "name", false, bad_descriptor);
  d.description = string_field(doc, "description", false, bad_descriptor);
  d.created_at = int_field(doc, "createdAt", false, 0, bad_descriptor);
  d.updated_at = int_field(doc, "updatedAt", false, 0, bad_descriptor);
  if (doc.contains("streams")) {
    for (auto& [sname, sbody] : named_collection(doc.at("streams"),
                                                 "stream")) {
      if (!valid_name(sname))
        bad_descriptor("bad stream name '" + sname + "'");
      if (looks_composite(sbody))
        d.streams.emplace(sname, parse_composite(sname, sbody));
      else
        d.streams.emplace(sname, parse_simple(sname, sbody));
    }
  }
  if (doc.contains("actions")) {
    if (!doc.at("actions").is_array())
      bad_descriptor("actions must be an array");
    for (const json& a : doc.at("actions")) {
      if (!a.is_string() || a.get<std::string>().empty())
        bad_descriptor("actions must be non-empty strings");
      d.actions.push_back(a.get<std::string>());
    }
  }
  return d;
}

}  // namespace

json descriptor_to_json(const ServiceObjectDescriptor& d) {
  json doc = json::object();
  doc["id"] = d.id;
  doc["name"] = d.name;
  if (!d.description.empty()) doc["description"] = d.description;
  doc["createdAt"] = d.created_at;
  doc["updatedAt"] = d.updated_at;
  json streams = json::object();
  for (const auto& [sname, spec] : d.streams) {
    json body = json::object();
    if (const auto* simple = std::get_if<SimpleStreamSpec>(&spec)) {
      json chans = json::array();
      for (const ChannelDecl& c : simple->channels) {
        json ch = json::object();
        ch["name"] = c.name;
        if (c.type) ch["type"] = *c.type;
        if (c.unit) ch["unit"] = *c.unit;
        chans.push_back(std::move(ch));
      }
      body["channels"] = std::move(chans);
      if (!simple->description.empty())
        body["description"] = simple->description;
    } else {
      const auto& comp = std::get<CompositeStreamSpec>(spec);
      json chans = json::object();
      for (const CompositeChannelSpec& c : comp.channels) {
        json ch = json::object();
        if (c.declared_type) ch["type"] = *c.declared_type;
        ch["current-value"] = c.value_expr_text;
        if (c.post_filter_text) ch["post-filter"] = *c.post_filter_text;
        chans[c.name] = std::move(ch);
      }
      body["channels"] = std::move(chans);
      if (comp.pre_filter_text) body["pre-filter"] = *comp.pre_filter_text;
      json sources = json::object();
      for (const auto& [alias, ref] : comp.sources)
        sources[alias] = stream_ref_to_json(ref);
      body["sources"] = std::move(sources);
      if (!comp.description.empty()) body["description"] = comp.description;
    }
    streams[sname] = std::move(body);
  }
  doc["streams"] = std::move(streams);
  json actions = json::array();
  for (const std::string& a : d.actions) actions.push_back(a);
  doc["actions"] = std::move(actions);
  return doc;
}

ServiceObjectDescriptor descriptor_from_json(const json& doc) {
  return parse_descriptor(doc);
}

json subscription_to_json(const Subscription& s) {
  json doc = json::object();
  doc["id"] = s.id;
  doc["source"] = stream_ref_to_json(s.source);
  if (s.kind == SubscriptionKind::HttpCallback) {
    doc["type"] = "http.callback";
    doc["callbackUrl"] = s.http.callback_url;
    doc["method"] = s.http.method;
  } else {
    doc["type"] = "internal";
    doc["target"] = stream_ref_to_json(s.internal.target);
    doc["alias"] = s.internal.alias;
  }
  return doc;
}

Subscription subscription_from_json(const json& doc) {
  auto fail = [](const std::string& msg) -> void {
    throw Error(ErrorCode::MalformedSubscription, msg);
  };
  if (!doc.is_object()) fail("subscription must be a JSON object");
  Subscription s;
  if (!doc.contains("id") || !doc.at("id").is_string())
    fail("missing subscription id");
  s.id = doc.at("id").get<std::string>();
  if (!doc.contains("source")) fail("missing subscription source");
  const json& src = doc.at("source");
  if (!src.is_object() || !src.contains("soId") || !src.contains("streamId"))
    fail("bad subscription source");
  s.source = StreamRef{src.at("soId").get<std::string>(),
                       src.at("streamId").get<std::string>()};
  std::string type = string_field(doc, "type", true, [](const std::string& m) {
    throw Error(ErrorCode::MalformedSubscription, m);
  });
  if (type == "http.callback") {
    s.kind = SubscriptionKind::HttpCallback;
    if (!doc.contains("callbackUrl") || !doc.at("callbackUrl").is_string())
      fail("http.callback subscription needs callbackUrl");
    s.http.callback_url = doc.at("callbackUrl").get<std::string>();
    if (!doc.contains("method") || !doc.at("method").is_string())
      fail("http.callback subscription needs method");
    s.http.method = doc.at("method").get<std::string>();
  } else if (type == "internal") {
    s.kind = SubscriptionKind::Internal;
    if (!doc.contains("target") || !doc.at("target").is_object())
      fail("internal subscription needs target");
    const json& t = doc.at("target");
    if (!t.contains("soId") || !t.contains("streamId"))
      fail("internal subscription target needs soId and streamId");
    s.internal.target = StreamRef{t.at("soId").get<std::string>(),
                                  t.at("streamId").get<std::string>()};
    if (!doc.contains("alias") || !doc.at("alias").is_string())
      fail("internal subscription needs alias");
    s.internal.alias = doc.at("alias").get<std::string>();
  } else {
    fail("unknown subscription type: " + type);
  }
  return s;
}

std::string generate_id() {
  unsigned char buf[20];
  bool ok = false;
#if defined(__linux__)
  ok = getentropy(buf, sizeof(buf)) == 0;
#endif
  if (!ok) {
    std::random_device rd;
    for (size_t i = 0; i < sizeof(buf); i += 4) {
      unsigned int r = rd();
      for (size_t j = 0; j < 4 && i + j < sizeof(buf); j++)
        buf[i + j] = static_cast<unsigned char>(r >> (8 * j));
    }
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(40);
  for (unsigned char b : buf) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

ServiceObjectDescriptor validate_descriptor(const json& doc, std::string id,
                                            int64_t now_ms) {
  ServiceObjectDescriptor d = parse_descriptor(doc);
  d.id = std::move(id);
  d.created_at = now_ms;
  d.updated_at = now_ms;
  return d;
}

std::vector<std::pair<std::string, StreamRef>> resolve_bindings(
    const CompositeStreamSpec& spec, const DescriptorLookup& lookup) {
  std::vector<std::pair<std::string, StreamRef>> out;
  for (const auto& [alias, ref] : spec.sources) {
    const ServiceObjectDescriptor* so = lookup(ref.so_id);
    if (!so)
      throw Error(ErrorCode::UnknownSource,
                  "alias '" + alias + "': unknown service object " +
                      ref.so_id);
    if (!so->stream(ref.stream_id))
      throw Error(ErrorCode::UnknownSource,
                  "alias '" + alias + "': service object " + ref.so_id +
                      " has no stream " + ref.stream_id);
    out.emplace_back(alias, ref);
  }
  return out;
}

}  // namespace loom
