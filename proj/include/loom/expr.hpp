#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <loom/value.hpp>

namespace loom {

struct SensorUpdate;

namespace expr {

// Stream transformations and filters are plain expressions over the bound
// input documents.  There is deliberately no state, no loops, no user-defined
// functions and no host access; a program is one expression.
//
// Grammar, loosest to tightest binding:
//
//   ternary     := or ('?' ternary ':' ternary)?
//   or          := and ('||' and)*
//   and         := equality ('&&' equality)*
//   equality    := relational (('==' | '!=') relational)*
//   relational  := additive (('<' | '<=' | '>' | '>=') additive)*
//   additive    := multiplicative (('+' | '-') multiplicative)*
//   multiplicative := unary (('*' | '/' | '%') unary)*
//   unary       := ('!' | '-') unary | postfix
//   postfix     := NAMESPACE '.' NAME '(' args ')' | primary
//   primary     := NUMBER | STRING | 'true' | 'false'
//                | '[' (ternary (',' ternary)*)? ']'
//                | '(' ternary ')'
//                | pathref
//   pathref     := '{' '$' alias ('.' segment)* '}'
//
// Only whitelisted builtins parse; anything else is rejected up front.

enum class SyntaxErrorKind { Generic, UnknownFunction };

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::string message, size_t offset,
              SyntaxErrorKind kind = SyntaxErrorKind::Generic)
      : std::runtime_error(std::move(message)), offset_(offset), kind_(kind) {}

  // Byte offset into the source text where the offending token starts.
  size_t offset() const { return offset_; }
  SyntaxErrorKind kind() const { return kind_; }

 private:
  size_t offset_;
  SyntaxErrorKind kind_;
};

enum class EvalErrorKind {
  TypeMismatch,
  DivByZero,
  NullOperand,
  Domain,
  UnboundAlias,
  BadArgument,
};

class EvalError : public std::runtime_error {
 public:
  EvalError(EvalErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  EvalErrorKind kind() const { return kind_; }

 private:
  EvalErrorKind kind_;
};

// A filter expression that failed to evaluate or did not produce a boolean.
class FilterError : public std::runtime_error {
 public:
  explicit FilterError(std::string message)
      : std::runtime_error(std::move(message)) {}
};

enum class Builtin {
  MathAbs, MathMin, MathMax, MathFloor, MathCeil, MathRound, MathSqrt, MathPow,
  StrLength, StrUpper, StrLower, StrSubstring, StrIndexOf, StrConcat,
  ArrLength, ArrConcat, ArrSlice, ArrIndexOf, ArrSum, ArrAvg,
};

enum class BinaryOp { Or, And, Eq, Ne, Lt, Le, Gt, Ge, Add, Sub, Mul, Div, Mod };
enum class UnaryOp { Not, Neg };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct NumberLit { double value; };
struct StringLit { std::string value; };
struct BoolLit { bool value; };
struct ArrayLit { std::vector<NodePtr> elements; };
struct PathRef {
  std::string alias;
  std::vector<std::string> segments;
};
struct Unary {
  UnaryOp op;
  NodePtr operand;
};
struct Binary {
  BinaryOp op;
  NodePtr lhs;
  NodePtr rhs;
};
struct Ternary {
  NodePtr cond;
  NodePtr then_branch;
  NodePtr else_branch;
};
struct Call {
  Builtin fn;
  std::vector<NodePtr> args;
};

struct Node {
  std::variant<NumberLit, StringLit, BoolLit, ArrayLit, PathRef, Unary, Binary,
               Ternary, Call>
      v;
  size_t offset = 0;
};

// Parsed program.  Immutable and cheap to copy; safe to share across threads.
class Expression {
 public:
  Expression() = default;

  bool empty() const { return root_ == nullptr; }
  const std::string& source() const { return source_; }
  const NodePtr& root() const { return root_; }

  // Aliases referenced by path refs anywhere in the tree, sorted, deduped.
  std::vector<std::string> referenced_aliases() const;

 private:
  friend Expression parse(const std::string& text);
  std::string source_;
  NodePtr root_;
};

// Throws SyntaxError; never crashes on arbitrary input.
Expression parse(const std::string& text);

// Alias -> bound update document.  Pointers are borrowed for the duration of
// an evaluate call.
using BindingSet = std::map<std::string, const SensorUpdate*>;

// Navigates an update document.  Supported shapes:
//   channels.<name>.(current-value | name | type | unit)
//   lastUpdate, name, customFields.<key>
// Anything absent or non-scalar yields Null.
Value resolve_path(const SensorUpdate& update,
                   const std::vector<std::string>& segments);

// Throws EvalError.  Null flows out only when the whole expression reduces to
// an absent path; any operator or builtin consuming Null throws.
Value evaluate(const Expression& expr, const BindingSet& bindings);

// Result must be a boolean; evaluation failures and non-boolean results are
// reported uniformly as FilterError.
bool evaluate_filter(const Expression& expr, const BindingSet& bindings);

}  // namespace expr
}  // namespace loom
