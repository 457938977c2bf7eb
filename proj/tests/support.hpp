#pragma once

// Helpers shared by the unit suites and the acceptance binary.

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <loom/expr.hpp>
#include <loom/model.hpp>

namespace testsupport {

using loom::json;

inline std::string data_path(const std::string& name) {
  return std::string(LOOM_TEST_DATA_DIR) + "/" + name;
}

inline json load_json_file(const std::string& name) {
  std::ifstream in(data_path(name));
  if (!in) throw std::runtime_error("cannot open test fixture: " + name);
  return json::parse(in);
}

inline constexpr double kRelTol = 1e-12;

inline bool numbers_close(double a, double b) {
  if (a == b) return true;
  double scale = std::max(std::fabs(a), std::fabs(b));
  return std::fabs(a - b) <= kRelTol * scale;
}

// Compares an engine value against a JSON expected-value document; numbers
// use the pinned relative tolerance, everything else is exact.
inline bool value_close(const json& expected, const loom::Value& got) {
  if (expected.is_null()) return got.is_null();
  if (expected.is_boolean())
    return got.is_bool() && got.as_bool() == expected.get<bool>();
  if (expected.is_number())
    return got.is_number() && numbers_close(got.as_number(),
                                            expected.get<double>());
  if (expected.is_string())
    return got.is_string() && got.as_string() == expected.get<std::string>();
  if (expected.is_array()) {
    if (!got.is_array()) return false;
    const auto& arr = got.as_array();
    if (arr.size() != expected.size()) return false;
    for (size_t i = 0; i < arr.size(); i++)
      if (!value_close(expected[i], arr[i])) return false;
    return true;
  }
  return false;
}

inline std::string describe_value(const loom::Value& v) {
  return loom::value_to_json(v).dump();
}

struct CorpusResult {
  int total = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

inline const char* eval_error_kind_name(loom::expr::EvalErrorKind k) {
  using K = loom::expr::EvalErrorKind;
  switch (k) {
    case K::TypeMismatch: return "TypeMismatch";
    case K::DivByZero: return "DivByZero";
    case K::NullOperand: return "NullOperand";
    case K::Domain: return "Domain";
    case K::UnboundAlias: return "UnboundAlias";
    case K::BadArgument: return "BadArgument";
  }
  return "?";
}

// Replays one corpus case; returns an empty string on success, else a
// description of the mismatch.
inline std::string run_corpus_case(const json& c) {
  namespace expr = loom::expr;
  const std::string kind = c.at("kind").get<std::string>();

  std::map<std::string, loom::SensorUpdate> docs;
  expr::BindingSet bindings;
  for (const auto& [alias, doc] : c.at("bindings").items())
    docs.emplace(alias, loom::sensor_update_from_json(doc));
  for (const auto& [alias, su] : docs) bindings[alias] = &su;

  const std::string text = c.at("expr").get<std::string>();

  if (kind == "error") {
    const std::string want = c.at("error").get<std::string>();
    if (want == "syntax" || want == "unknown-function") {
      try {
        expr::parse(text);
        return "expected a parse error (" + want + "), parse succeeded";
      } catch (const expr::SyntaxError& e) {
        bool unknown = e.kind() == expr::SyntaxErrorKind::UnknownFunction;
        if (unknown != (want == "unknown-function"))
          return std::string("wrong parse error class: ") + e.what();
        return "";
      }
    }
    expr::Expression program;
    try {
      program = expr::parse(text);
    } catch (const expr::SyntaxError& e) {
      return std::string("unexpected parse failure: ") + e.what();
    }
    try {
      loom::Value v = expr::evaluate(program, bindings);
      return "expected " + want + ", evaluated to " + describe_value(v);
    } catch (const expr::EvalError& e) {
      if (eval_error_kind_name(e.kind()) != want)
        return "expected " + want + ", got " +
               eval_error_kind_name(e.kind()) + " (" + e.what() + ")";
      return "";
    }
  }

  if (kind == "filter" || kind == "filter-error") {
    expr::Expression program;
    try {
      program = expr::parse(text);
    } catch (const expr::SyntaxError& e) {
      return std::string("unexpected parse failure: ") + e.what();
    }
    try {
      bool got = expr::evaluate_filter(program, bindings);
      if (kind == "filter-error")
        return "expected a filter error, got " + std::string(got ? "true" : "false");
      bool want = c.at("value").get<bool>();
      if (got != want)
        return std::string("filter produced ") + (got ? "true" : "false");
      return "";
    } catch (const expr::FilterError& e) {
      if (kind == "filter-error") return "";
      return std::string("unexpected filter error: ") + e.what();
    }
  }

  // kind == "value"
  expr::Expression program;
  try {
    program = expr::parse(text);
  } catch (const expr::SyntaxError& e) {
    return std::string("unexpected parse failure: ") + e.what();
  }
  try {
    loom::Value v = expr::evaluate(program, bindings);
    if (!value_close(c.at("value"), v))
      return "expected " + c.at("value").dump() + ", got " + describe_value(v);
    return "";
  } catch (const expr::EvalError& e) {
    return std::string("unexpected evaluation error: ") + e.what();
  }
}

inline CorpusResult run_expr_corpus(const std::string& fixture_name) {
  CorpusResult out;
  json doc = load_json_file(fixture_name);
  for (const json& c : doc.at("cases")) {
    out.total++;
    std::string name = c.at("name").get<std::string>();
    std::string err;
    try {
      err = run_corpus_case(c);
    } catch (const std::exception& e) {
      err = std::string("unexpected exception: ") + e.what();
    }
    if (!err.empty()) out.failures.push_back(name + ": " + err);
  }
  return out;
}

// Recursive structural comparison for the wire-format replays: key sets and
// nesting must match exactly; values must match except for fields whose
// names appear in `volatile_keys` (identifiers and clock-derived stamps),
// which only need the same JSON type.
inline bool same_shape(const json& expected, const json& got,
                       const std::vector<std::string>& volatile_keys,
                       std::string path, std::string* diff) {
  auto is_volatile = [&](const std::string& key) {
    for (const auto& k : volatile_keys)
      if (k == key) return true;
    return false;
  };
  if (expected.is_object()) {
    if (!got.is_object()) {
      *diff = path + ": expected object, got " + got.type_name();
      return false;
    }
    for (const auto& [key, val] : expected.items()) {
      if (!got.contains(key)) {
        *diff = path + ": missing key '" + key + "'";
        return false;
      }
      if (is_volatile(key)) {
        if (val.type() != got.at(key).type() &&
            !(val.is_number() && got.at(key).is_number())) {
          *diff = path + "." + key + ": type mismatch on volatile field";
          return false;
        }
        continue;
      }
      if (!same_shape(val, got.at(key), volatile_keys, path + "." + key,
                      diff))
        return false;
    }
    for (const auto& [key, val] : got.items()) {
      (void)val;
      if (!expected.contains(key)) {
        *diff = path + ": unexpected key '" + key + "'";
        return false;
      }
    }
    return true;
  }
  if (expected.is_array()) {
    if (!got.is_array()) {
      *diff = path + ": expected array, got " + got.type_name();
      return false;
    }
    if (expected.size() != got.size()) {
      *diff = path + ": expected " + std::to_string(expected.size()) +
              " elements, got " + std::to_string(got.size());
      return false;
    }
    for (size_t i = 0; i < expected.size(); i++)
      if (!same_shape(expected[i], got[i], volatile_keys,
                      path + "[" + std::to_string(i) + "]", diff))
        return false;
    return true;
  }
  if (expected != got) {
    *diff = path + ": expected " + expected.dump() + ", got " + got.dump();
    return false;
  }
  return true;
}

}  // namespace testsupport
