#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace loom {

using json = nlohmann::json;

enum class ValueType { Numeric, Boolean, String, Array };

const char* value_type_name(ValueType t);

// Channel payload: a 64-bit float, a boolean, a string, or an array thereof.
// Null marks an absent path during expression evaluation; it is not a
// storable channel value.
class Value {
 public:
  using Array = std::vector<Value>;

  Value() : v_(std::monostate{}) {}
  Value(double n) : v_(n) {}
  Value(int n) : v_(static_cast<double>(n)) {}
  Value(int64_t n) : v_(static_cast<double>(n)) {}
  Value(bool b) : v_(b) {}
  Value(const char* s) : v_(std::string(s)) {}
  Value(std::string s) : v_(std::move(s)) {}
  Value(Array a) : v_(std::move(a)) {}

  bool is_null() const { return std::holds_alternative<std::monostate>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_array() const { return std::holds_alternative<Array>(v_); }

  double as_number() const { return std::get<double>(v_); }
  bool as_bool() const { return std::get<bool>(v_); }
  const std::string& as_string() const { return std::get<std::string>(v_); }
  const Array& as_array() const { return std::get<Array>(v_); }

  // Tag of a non-null value.  Callers must check is_null() first.
  ValueType type() const;
  const char* type_name() const;

  // Deep equality; values of different tags are unequal, Null equals Null.
  bool operator==(const Value& other) const { return v_ == other.v_; }

 private:
  std::variant<std::monostate, double, bool, std::string, Array> v_;
};

// JSON scalar/array <-> Value.  Integral doubles are serialized as JSON
// integers so that stored documents keep the shape they were posted with.
json value_to_json(const Value& v);
Value value_from_json(const json& j);

// "numeric" | "boolean" | "string" | "array"; parsing accepts "number" as a
// synonym for "numeric".
std::string value_type_to_string(ValueType t);
bool value_type_from_string(const std::string& s, ValueType* out);

}  // namespace loom
