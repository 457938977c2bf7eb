#include <loom/expr.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>
#include <unordered_map>

#include <loom/model.hpp>

namespace loom::expr {

namespace {

constexpr int kMaxDepth = 256;

enum class Tok {
  Number, String, Ident, Path,
  OrOr, AndAnd, EqEq, NotEq, Lt, Le, Gt, Ge,
  Plus, Minus, Star, Slash, Percent,
  Not, Question, Colon, LParen, RParen, LBracket, RBracket, Comma, Dot,
  End,
};

struct Token {
  Tok kind = Tok::End;
  size_t offset = 0;
  std::string text;                   // idents
  double number = 0;                  // numbers
  std::string str;                    // string literals
  std::string alias;                  // path refs
  std::vector<std::string> segments;  // path refs
};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}
bool is_segment_char(char c) { return is_ident_char(c) || c == '-'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      Token t = next();
      bool done = t.kind == Tok::End;
      out.push_back(std::move(t));
      if (done) break;
    }
    return out;
  }

 private:
  [[noreturn]] void fail(size_t at, const std::string& msg) {
    throw SyntaxError(msg, at);
  }

  void skip_space() {
    while (pos_ < src_.size() && is_space(src_[pos_])) pos_++;
  }

  Token next() {
    skip_space();
    Token t;
    t.offset = pos_;
    if (pos_ >= src_.size()) return t;
    char c = src_[pos_];
    if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() &&
                        is_digit(src_[pos_ + 1]))) {
      return number();
    }
    if (c == '\'' || c == '"') return string_lit(c);
    if (is_ident_start(c)) {
      size_t start = pos_;
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) pos_++;
      t.kind = Tok::Ident;
      t.text = src_.substr(start, pos_ - start);
      return t;
    }
    if (c == '{') return path_ref();
    pos_++;
    switch (c) {
      case '(': t.kind = Tok::LParen; return t;
      case ')': t.kind = Tok::RParen; return t;
      case '[': t.kind = Tok::LBracket; return t;
      case ']': t.kind = Tok::RBracket; return t;
      case ',': t.kind = Tok::Comma; return t;
      case '.': t.kind = Tok::Dot; return t;
      case '?': t.kind = Tok::Question; return t;
      case ':': t.kind = Tok::Colon; return t;
      case '+': t.kind = Tok::Plus; return t;
      case '-': t.kind = Tok::Minus; return t;
      case '*': t.kind = Tok::Star; return t;
      case '/': t.kind = Tok::Slash; return t;
      case '%': t.kind = Tok::Percent; return t;
      case '|':
        if (pos_ < src_.size() && src_[pos_] == '|') {
          pos_++;
          t.kind = Tok::OrOr;
          return t;
        }
        fail(t.offset, "expected '||'");
      case '&':
        if (pos_ < src_.size() && src_[pos_] == '&') {
          pos_++;
          t.kind = Tok::AndAnd;
          return t;
        }
        fail(t.offset, "expected '&&'");
      case '=':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          pos_++;
          t.kind = Tok::EqEq;
          return t;
        }
        fail(t.offset, "expected '=='");
      case '!':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          pos_++;
          t.kind = Tok::NotEq;
          return t;
        }
        t.kind = Tok::Not;
        return t;
      case '<':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          pos_++;
          t.kind = Tok::Le;
          return t;
        }
        t.kind = Tok::Lt;
        return t;
      case '>':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          pos_++;
          t.kind = Tok::Ge;
          return t;
        }
        t.kind = Tok::Gt;
        return t;
      default:
        fail(t.offset, "unexpected character");
    }
  }

  Token number() {
    Token t;
    t.offset = pos_;
    size_t start = pos_;
    while (pos_ < src_.size() && is_digit(src_[pos_])) pos_++;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      pos_++;
      if (pos_ >= src_.size() || !is_digit(src_[pos_]))
        fail(start, "malformed number");
      while (pos_ < src_.size() && is_digit(src_[pos_])) pos_++;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-'))
        pos_++;
      if (pos_ >= src_.size() || !is_digit(src_[pos_]))
        fail(start, "malformed number");
      while (pos_ < src_.size() && is_digit(src_[pos_])) pos_++;
    }
    double value = 0;
    auto res =
        std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
      fail(start, "malformed number");
    t.kind = Tok::Number;
    t.number = value;
    return t;
  }

  Token string_lit(char quote) {
    Token t;
    t.offset = pos_;
    pos_++;  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) fail(t.offset, "unterminated string");
      char c = src_[pos_++];
      if (c == quote) break;
      if (c == '\\') {
        if (pos_ >= src_.size()) fail(t.offset, "unterminated string");
        char e = src_[pos_++];
        switch (e) {
          case '\\': out.push_back('\\'); break;
          case '\'': out.push_back('\''); break;
          case '"': out.push_back('"'); break;
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case 'r': out.push_back('\r'); break;
          default: fail(pos_ - 2, "unknown escape");
        }
      } else {
        out.push_back(c);
      }
    }
    t.kind = Tok::String;
    t.str = std::move(out);
    return t;
  }

  // { $alias.seg.seg }  Whitespace is tolerated between parts; descriptor
  // documents often wrap long refs across lines.
  Token path_ref() {
    Token t;
    t.offset = pos_;
    pos_++;  // '{'
    skip_space();
    if (pos_ >= src_.size() || src_[pos_] != '$')
      fail(t.offset, "expected '$' after '{'");
    pos_++;
    skip_space();
    size_t astart = pos_;
    if (pos_ >= src_.size() || !is_ident_start(src_[pos_]))
      fail(t.offset, "malformed path alias");
    while (pos_ < src_.size() && is_segment_char(src_[pos_])) pos_++;
    t.alias = src_.substr(astart, pos_ - astart);
    while (true) {
      skip_space();
      if (pos_ >= src_.size()) fail(t.offset, "unterminated path reference");
      char c = src_[pos_];
      if (c == '}') {
        pos_++;
        break;
      }
      if (c != '.') fail(t.offset, "malformed path reference");
      pos_++;
      skip_space();
      size_t sstart = pos_;
      while (pos_ < src_.size() && is_segment_char(src_[pos_])) pos_++;
      if (pos_ == sstart) fail(t.offset, "empty path segment");
      t.segments.push_back(src_.substr(sstart, pos_ - sstart));
    }
    t.kind = Tok::Path;
    return t;
  }

  const std::string& src_;
  size_t pos_ = 0;
};

struct BuiltinInfo {
  Builtin fn;
  int min_args;
  int max_args;  // -1: unbounded
};

const std::unordered_map<std::string, BuiltinInfo>& builtin_table() {
  static const std::unordered_map<std::string, BuiltinInfo> table = {
      {"math.abs", {Builtin::MathAbs, 1, 1}},
      {"math.min", {Builtin::MathMin, 2, -1}},
      {"math.max", {Builtin::MathMax, 2, -1}},
      {"math.floor", {Builtin::MathFloor, 1, 1}},
      {"math.ceil", {Builtin::MathCeil, 1, 1}},
      {"math.round", {Builtin::MathRound, 1, 1}},
      {"math.sqrt", {Builtin::MathSqrt, 1, 1}},
      {"math.pow", {Builtin::MathPow, 2, 2}},
      {"str.length", {Builtin::StrLength, 1, 1}},
      {"str.upper", {Builtin::StrUpper, 1, 1}},
      {"str.lower", {Builtin::StrLower, 1, 1}},
      {"str.substring", {Builtin::StrSubstring, 2, 3}},
      {"str.indexOf", {Builtin::StrIndexOf, 2, 2}},
      {"str.concat", {Builtin::StrConcat, 2, -1}},
      {"arr.length", {Builtin::ArrLength, 1, 1}},
      {"arr.concat", {Builtin::ArrConcat, 2, -1}},
      {"arr.slice", {Builtin::ArrSlice, 2, 3}},
      {"arr.indexOf", {Builtin::ArrIndexOf, 2, 2}},
      {"arr.sum", {Builtin::ArrSum, 1, 1}},
      {"arr.avg", {Builtin::ArrAvg, 1, 1}},
  };
  return table;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  NodePtr run() {
    NodePtr root = ternary();
    expect(Tok::End, "trailing input after expression");
    return root;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& advance() { return toks_[pos_++]; }
  bool accept(Tok k) {
    if (peek().kind == k) {
      pos_++;
      return true;
    }
    return false;
  }
  void expect(Tok k, const char* msg) {
    if (!accept(k)) throw SyntaxError(msg, peek().offset);
  }

  template <typename T>
  NodePtr make(T node, size_t offset) {
    auto n = std::make_shared<Node>();
    n->v = std::move(node);
    n->offset = offset;
    return n;
  }

  struct DepthGuard {
    explicit DepthGuard(Parser& p) : p_(p) {
      if (++p_.depth_ > kMaxDepth)
        throw SyntaxError("expression too deeply nested",
                          p_.peek().offset);
    }
    ~DepthGuard() { --p_.depth_; }
    Parser& p_;
  };

  NodePtr ternary() {
    DepthGuard guard(*this);
    NodePtr cond = logical_or();
    if (!accept(Tok::Question)) return cond;
    size_t off = cond->offset;
    NodePtr then_branch = ternary();
    expect(Tok::Colon, "expected ':' in conditional");
    NodePtr else_branch = ternary();
    return make(Ternary{std::move(cond), std::move(then_branch),
                        std::move(else_branch)},
                off);
  }

  NodePtr logical_or() {
    NodePtr lhs = logical_and();
    while (peek().kind == Tok::OrOr) {
      advance();
      NodePtr rhs = logical_and();
      size_t off = lhs->offset;
      lhs = make(Binary{BinaryOp::Or, std::move(lhs), std::move(rhs)}, off);
    }
    return lhs;
  }

  NodePtr logical_and() {
    NodePtr lhs = equality();
    while (peek().kind == Tok::AndAnd) {
      advance();
      NodePtr rhs = equality();
      size_t off = lhs->offset;
      lhs = make(Binary{BinaryOp::And, std::move(lhs), std::move(rhs)}, off);
    }
    return lhs;
  }

  NodePtr equality() {
    NodePtr lhs = relational();
    while (peek().kind == Tok::EqEq || peek().kind == Tok::NotEq) {
      BinaryOp op = advance().kind == Tok::EqEq ? BinaryOp::Eq : BinaryOp::Ne;
      NodePtr rhs = relational();
      size_t off = lhs->offset;
      lhs = make(Binary{op, std::move(lhs), std::move(rhs)}, off);
    }
    return lhs;
  }

  NodePtr relational() {
    NodePtr lhs = additive();
    while (true) {
      BinaryOp op;
      switch (peek().kind) {
        case Tok::Lt: op = BinaryOp::Lt; break;
        case Tok::Le: op = BinaryOp::Le; break;
        case Tok::Gt: op = BinaryOp::Gt; break;
        case Tok::Ge: op = BinaryOp::Ge; break;
        default: return lhs;
      }
      advance();
      NodePtr rhs = additive();
      size_t off = lhs->offset;
      lhs = make(Binary{op, std::move(lhs), std::move(rhs)}, off);
    }
  }

  NodePtr additive() {
    NodePtr lhs = multiplicative();
    while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
      BinaryOp op = advance().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      NodePtr rhs = multiplicative();
      size_t off = lhs->offset;
      lhs = make(Binary{op, std::move(lhs), std::move(rhs)}, off);
    }
    return lhs;
  }

  NodePtr multiplicative() {
    NodePtr lhs = unary();
    while (true) {
      BinaryOp op;
      switch (peek().kind) {
        case Tok::Star: op = BinaryOp::Mul; break;
        case Tok::Slash: op = BinaryOp::Div; break;
        case Tok::Percent: op = BinaryOp::Mod; break;
        default: return lhs;
      }
      advance();
      NodePtr rhs = unary();
      size_t off = lhs->offset;
      lhs = make(Binary{op, std::move(lhs), std::move(rhs)}, off);
    }
  }

  NodePtr unary() {
    DepthGuard guard(*this);
    if (peek().kind == Tok::Not) {
      size_t off = advance().offset;
      return make(Unary{UnaryOp::Not, unary()}, off);
    }
    if (peek().kind == Tok::Minus) {
      size_t off = advance().offset;
      return make(Unary{UnaryOp::Neg, unary()}, off);
    }
    return postfix();
  }

  NodePtr postfix() {
    if (peek().kind == Tok::Ident && peek().text != "true" &&
        peek().text != "false") {
      return call();
    }
    return primary();
  }

  NodePtr call() {
    const Token& ns = advance();
    expect(Tok::Dot, "expected '.' after function namespace");
    if (peek().kind != Tok::Ident)
      throw SyntaxError("expected function name", peek().offset);
    const Token& name = advance();
    std::string full = ns.text + "." + name.text;
    auto it = builtin_table().find(full);
    if (it == builtin_table().end())
      throw SyntaxError("unknown function: " + full, ns.offset,
                        SyntaxErrorKind::UnknownFunction);
    expect(Tok::LParen, "expected '(' after function name");
    std::vector<NodePtr> args;
    if (peek().kind != Tok::RParen) {
      args.push_back(ternary());
      while (accept(Tok::Comma)) args.push_back(ternary());
    }
    expect(Tok::RParen, "expected ')' after arguments");
    const BuiltinInfo& info = it->second;
    int n = static_cast<int>(args.size());
    if (n < info.min_args || (info.max_args >= 0 && n > info.max_args))
      throw SyntaxError("wrong number of arguments to " + full, ns.offset);
    return make(Call{info.fn, std::move(args)}, ns.offset);
  }

  NodePtr primary() {
    DepthGuard guard(*this);
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Number: {
        advance();
        return make(NumberLit{t.number}, t.offset);
      }
      case Tok::String: {
        advance();
        return make(StringLit{t.str}, t.offset);
      }
      case Tok::Ident: {
        if (t.text == "true" || t.text == "false") {
          advance();
          return make(BoolLit{t.text == "true"}, t.offset);
        }
        throw SyntaxError("unexpected identifier: " + t.text, t.offset);
      }
      case Tok::Path: {
        advance();
        return make(PathRef{t.alias, t.segments}, t.offset);
      }
      case Tok::LParen: {
        advance();
        NodePtr inner = ternary();
        expect(Tok::RParen, "expected ')'");
        return inner;
      }
      case Tok::LBracket: {
        size_t off = advance().offset;
        std::vector<NodePtr> elems;
        if (peek().kind != Tok::RBracket) {
          elems.push_back(ternary());
          while (accept(Tok::Comma)) elems.push_back(ternary());
        }
        expect(Tok::RBracket, "expected ']'");
        return make(ArrayLit{std::move(elems)}, off);
      }
      default:
        throw SyntaxError("expected expression", t.offset);
    }
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
  int depth_ = 0;
};

void collect_aliases(const NodePtr& node, std::vector<std::string>* out) {
  if (!node) return;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, PathRef>) {
          out->push_back(n.alias);
        } else if constexpr (std::is_same_v<T, ArrayLit>) {
          for (const auto& e : n.elements) collect_aliases(e, out);
        } else if constexpr (std::is_same_v<T, Unary>) {
          collect_aliases(n.operand, out);
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect_aliases(n.lhs, out);
          collect_aliases(n.rhs, out);
        } else if constexpr (std::is_same_v<T, Ternary>) {
          collect_aliases(n.cond, out);
          collect_aliases(n.then_branch, out);
          collect_aliases(n.else_branch, out);
        } else if constexpr (std::is_same_v<T, Call>) {
          for (const auto& a : n.args) collect_aliases(a, out);
        }
      },
      node->v);
}

[[noreturn]] void type_error(const char* what, const Value& v) {
  if (v.is_null())
    throw EvalError(EvalErrorKind::NullOperand,
                    std::string(what) + ": null operand");
  throw EvalError(EvalErrorKind::TypeMismatch,
                  std::string(what) + ": got " + v.type_name());
}

double want_number(const Value& v, const char* what) {
  if (!v.is_number()) type_error(what, v);
  return v.as_number();
}

bool want_bool(const Value& v, const char* what) {
  if (!v.is_bool()) type_error(what, v);
  return v.as_bool();
}

const std::string& want_string(const Value& v, const char* what) {
  if (!v.is_string()) type_error(what, v);
  return v.as_string();
}

const Value::Array& want_array(const Value& v, const char* what) {
  if (!v.is_array()) type_error(what, v);
  return v.as_array();
}

double checked(double x, const char* what) {
  if (std::isnan(x))
    throw EvalError(EvalErrorKind::Domain,
                    std::string(what) + ": result is not a number");
  return x;
}

// Fractional indices truncate toward zero, as in the scripting runtimes this
// replaces.
long to_index(double d) {
  if (std::isnan(d)) return 0;
  return static_cast<long>(std::trunc(d));
}

class Evaluator {
 public:
  explicit Evaluator(const BindingSet& bindings) : bindings_(bindings) {}

  Value eval(const NodePtr& node) {
    return std::visit([&](const auto& n) { return eval_node(n); }, node->v);
  }

 private:
  Value eval_node(const NumberLit& n) { return Value(n.value); }
  Value eval_node(const StringLit& n) { return Value(n.value); }
  Value eval_node(const BoolLit& n) { return Value(n.value); }

  Value eval_node(const ArrayLit& n) {
    Value::Array out;
    out.reserve(n.elements.size());
    for (const auto& e : n.elements) {
      Value v = eval(e);
      if (v.is_null())
        throw EvalError(EvalErrorKind::NullOperand,
                        "array element: null operand");
      out.push_back(std::move(v));
    }
    return Value(std::move(out));
  }

  Value eval_node(const PathRef& n) {
    auto it = bindings_.find(n.alias);
    if (it == bindings_.end())
      throw EvalError(EvalErrorKind::UnboundAlias,
                      "unbound alias: " + n.alias);
    return resolve_path(*it->second, n.segments);
  }

  Value eval_node(const Unary& n) {
    Value v = eval(n.operand);
    if (n.op == UnaryOp::Not) return Value(!want_bool(v, "operator !"));
    return Value(-want_number(v, "unary -"));
  }

  Value eval_node(const Ternary& n) {
    bool c = want_bool(eval(n.cond), "conditional");
    return c ? eval(n.then_branch) : eval(n.else_branch);
  }

  Value eval_node(const Binary& n) {
    switch (n.op) {
      case BinaryOp::Or: {
        if (want_bool(eval(n.lhs), "operator ||")) return Value(true);
        return Value(want_bool(eval(n.rhs), "operator ||"));
      }
      case BinaryOp::And: {
        if (!want_bool(eval(n.lhs), "operator &&")) return Value(false);
        return Value(want_bool(eval(n.rhs), "operator &&"));
      }
      default: break;
    }
    Value a = eval(n.lhs);
    Value b = eval(n.rhs);
    switch (n.op) {
      case BinaryOp::Eq:
      case BinaryOp::Ne: {
        if (a.is_null()) type_error("operator ==", a);
        if (b.is_null()) type_error("operator ==", b);
        bool eq = a == b;
        return Value(n.op == BinaryOp::Eq ? eq : !eq);
      }
      case BinaryOp::Lt:
      case BinaryOp::Le:
      case BinaryOp::Gt:
      case BinaryOp::Ge:
        return compare(n.op, a, b);
      case BinaryOp::Add: {
        if (a.is_string() && b.is_string())
          return Value(a.as_string() + b.as_string());
        double x = want_number(a, "operator +");
        double y = want_number(b, "operator +");
        return Value(checked(x + y, "operator +"));
      }
      case BinaryOp::Sub:
        return Value(checked(want_number(a, "operator -") -
                                 want_number(b, "operator -"),
                             "operator -"));
      case BinaryOp::Mul:
        return Value(checked(want_number(a, "operator *") *
                                 want_number(b, "operator *"),
                             "operator *"));
      case BinaryOp::Div: {
        double x = want_number(a, "operator /");
        double y = want_number(b, "operator /");
        if (y == 0)
          throw EvalError(EvalErrorKind::DivByZero, "division by zero");
        return Value(checked(x / y, "operator /"));
      }
      case BinaryOp::Mod: {
        double x = want_number(a, "operator %");
        double y = want_number(b, "operator %");
        if (y == 0)
          throw EvalError(EvalErrorKind::DivByZero, "modulo by zero");
        return Value(checked(std::fmod(x, y), "operator %"));
      }
      default:
        throw EvalError(EvalErrorKind::TypeMismatch, "bad operator");
    }
  }

  Value compare(BinaryOp op, const Value& a, const Value& b) {
    if (a.is_null()) type_error("comparison", a);
    if (b.is_null()) type_error("comparison", b);
    int c;
    if (a.is_number() && b.is_number()) {
      double x = a.as_number(), y = b.as_number();
      c = x < y ? -1 : (x > y ? 1 : 0);
    } else if (a.is_string() && b.is_string()) {
      c = a.as_string().compare(b.as_string());
    } else {
      throw EvalError(EvalErrorKind::TypeMismatch,
                      std::string("comparison: ") + a.type_name() + " vs " +
                          b.type_name());
    }
    switch (op) {
      case BinaryOp::Lt: return Value(c < 0);
      case BinaryOp::Le: return Value(c <= 0);
      case BinaryOp::Gt: return Value(c > 0);
      default: return Value(c >= 0);
    }
  }

  Value eval_node(const Call& n) {
    std::vector<Value> args;
    args.reserve(n.args.size());
    for (const auto& a : n.args) {
      Value v = eval(a);
      if (v.is_null())
        throw EvalError(EvalErrorKind::NullOperand,
                        "function argument: null operand");
      args.push_back(std::move(v));
    }
    return apply(n.fn, args);
  }

  Value apply(Builtin fn, const std::vector<Value>& args) {
    switch (fn) {
      case Builtin::MathAbs:
        return Value(std::fabs(want_number(args[0], "math.abs")));
      case Builtin::MathMin:
      case Builtin::MathMax: {
        const char* what = fn == Builtin::MathMin ? "math.min" : "math.max";
        double best = want_number(args[0], what);
        for (size_t i = 1; i < args.size(); i++) {
          double x = want_number(args[i], what);
          best = fn == Builtin::MathMin ? std::min(best, x)
                                        : std::max(best, x);
        }
        return Value(best);
      }
      case Builtin::MathFloor:
        return Value(std::floor(want_number(args[0], "math.floor")));
      case Builtin::MathCeil:
        return Value(std::ceil(want_number(args[0], "math.ceil")));
      case Builtin::MathRound:
        // Half-up rounding, not banker's.
        return Value(std::floor(want_number(args[0], "math.round") + 0.5));
      case Builtin::MathSqrt: {
        double x = want_number(args[0], "math.sqrt");
        if (x < 0)
          throw EvalError(EvalErrorKind::Domain,
                          "math.sqrt: negative argument");
        return Value(std::sqrt(x));
      }
      case Builtin::MathPow:
        return Value(checked(std::pow(want_number(args[0], "math.pow"),
                                      want_number(args[1], "math.pow")),
                             "math.pow"));
      case Builtin::StrLength:
        return Value(static_cast<double>(
            want_string(args[0], "str.length").size()));
      case Builtin::StrUpper:
      case Builtin::StrLower: {
        std::string s = want_string(
            args[0], fn == Builtin::StrUpper ? "str.upper" : "str.lower");
        for (char& c : s) {
          c = fn == Builtin::StrUpper
                  ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                  : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        return Value(std::move(s));
      }
      case Builtin::StrSubstring: {
        const std::string& s = want_string(args[0], "str.substring");
        long len = static_cast<long>(s.size());
        long start = to_index(want_number(args[1], "str.substring"));
        long end = args.size() > 2
                       ? to_index(want_number(args[2], "str.substring"))
                       : len;
        start = std::clamp(start, 0L, len);
        end = std::clamp(end, 0L, len);
        if (start > end) std::swap(start, end);
        return Value(s.substr(static_cast<size_t>(start),
                              static_cast<size_t>(end - start)));
      }
      case Builtin::StrIndexOf: {
        const std::string& s = want_string(args[0], "str.indexOf");
        const std::string& needle = want_string(args[1], "str.indexOf");
        size_t at = s.find(needle);
        return Value(at == std::string::npos ? -1.0
                                             : static_cast<double>(at));
      }
      case Builtin::StrConcat: {
        std::string out;
        for (const Value& v : args) out += want_string(v, "str.concat");
        return Value(std::move(out));
      }
      case Builtin::ArrLength:
        return Value(static_cast<double>(
            want_array(args[0], "arr.length").size()));
      case Builtin::ArrConcat: {
        Value::Array out;
        for (const Value& v : args) {
          const Value::Array& a = want_array(v, "arr.concat");
          out.insert(out.end(), a.begin(), a.end());
        }
        return Value(std::move(out));
      }
      case Builtin::ArrSlice: {
        const Value::Array& a = want_array(args[0], "arr.slice");
        long len = static_cast<long>(a.size());
        long start = to_index(want_number(args[1], "arr.slice"));
        long end = args.size() > 2
                       ? to_index(want_number(args[2], "arr.slice"))
                       : len;
        if (start < 0) start = std::max(0L, len + start);
        if (end < 0) end = std::max(0L, len + end);
        start = std::min(start, len);
        end = std::min(end, len);
        Value::Array out;
        for (long i = start; i < end; i++)
          out.push_back(a[static_cast<size_t>(i)]);
        return Value(std::move(out));
      }
      case Builtin::ArrIndexOf: {
        const Value::Array& a = want_array(args[0], "arr.indexOf");
        for (size_t i = 0; i < a.size(); i++)
          if (a[i] == args[1]) return Value(static_cast<double>(i));
        return Value(-1.0);
      }
      case Builtin::ArrSum:
      case Builtin::ArrAvg: {
        const char* what = fn == Builtin::ArrSum ? "arr.sum" : "arr.avg";
        const Value::Array& a = want_array(args[0], what);
        if (fn == Builtin::ArrAvg && a.empty())
          throw EvalError(EvalErrorKind::Domain, "arr.avg: empty array");
        double sum = 0;
        for (const Value& v : a) sum += want_number(v, what);
        return Value(checked(fn == Builtin::ArrSum ? sum : sum / a.size(),
                             what));
      }
    }
    throw EvalError(EvalErrorKind::TypeMismatch, "bad builtin");
  }

  const BindingSet& bindings_;
};

}  // namespace

std::vector<std::string> Expression::referenced_aliases() const {
  std::vector<std::string> out;
  collect_aliases(root_, &out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Expression parse(const std::string& text) {
  Expression e;
  e.source_ = text;
  e.root_ = Parser(Lexer(text).run()).run();
  return e;
}

Value resolve_path(const SensorUpdate& update,
                   const std::vector<std::string>& segments) {
  if (segments.empty()) return Value();
  const std::string& head = segments[0];
  if (head == "channels") {
    if (segments.size() != 3) return Value();
    const ChannelValue* ch = update.channel(segments[1]);
    if (!ch) return Value();
    const std::string& field = segments[2];
    if (field == "current-value") return ch->current_value;
    if (field == "name") return Value(ch->name);
    if (field == "type") return Value(value_type_to_string(ch->value_type));
    if (field == "unit")
      return ch->unit ? Value(*ch->unit) : Value();
    return Value();
  }
  if (head == "lastUpdate") {
    if (segments.size() != 1) return Value();
    return Value(static_cast<double>(update.last_update));
  }
  if (head == "name") {
    if (segments.size() != 1) return Value();
    return Value(update.stream_name);
  }
  if (head == "customFields") {
    if (segments.size() != 2) return Value();
    auto it = update.custom_fields.find(segments[1]);
    if (it == update.custom_fields.end()) return Value();
    return it->second;
  }
  return Value();
}

Value evaluate(const Expression& expr, const BindingSet& bindings) {
  if (expr.empty()) throw std::logic_error("evaluate: empty expression");
  return Evaluator(bindings).eval(expr.root());
}

bool evaluate_filter(const Expression& expr, const BindingSet& bindings) {
  Value v;
  try {
    v = evaluate(expr, bindings);
  } catch (const EvalError& e) {
    throw FilterError(std::string("filter failed: ") + e.what());
  }
  if (!v.is_bool())
    throw FilterError(std::string("filter produced ") +
                      (v.is_null() ? "null" : v.type_name()) +
                      ", expected boolean");
  return v.as_bool();
}

}  // namespace loom::expr
