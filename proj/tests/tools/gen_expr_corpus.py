#!/usr/bin/env python3
"""Generate the expression-engine conformance corpus.

A small reference evaluator written here in Python, against the engine's
documented contract, produces expected results for a mix of curated and
randomly generated expressions.  The frozen output (tests/data/
expr_corpus.json) is what the C++ test suite replays; regenerating it must
be byte-stable for a given seed.

Reference semantics implemented here, independent of the C++ code:
  - values are 64-bit floats, booleans, strings, arrays; Null marks an
    absent document path and is not a first-class value
  - ==/!= are deep, type-tagged (1 != true, 1 != "1"); </<=/>/>= work on
    number pairs or string pairs only
  - + concatenates when BOTH sides are strings, otherwise adds numbers
  - / and % reject a zero divisor; % is C fmod
  - any NaN produced by arithmetic is a domain error
  - null reaching any operator or function argument -> NullOperand;
    a wrongly typed non-null value -> TypeMismatch
  - math.round is half-up (floor(x + 0.5)); math.sqrt rejects negatives
  - str.substring clamps both indices to [0, len] and swaps if reversed
  - arr.slice follows JS semantics (negative indices count from the end,
    no swapping); fractional indices truncate toward zero
  - arr.avg of an empty array is a domain error
  - &&, || and ?: evaluate lazily
"""

import json
import math
import random
import sys
from pathlib import Path

SEED = 20260814
OUT = Path(__file__).resolve().parent.parent / "data" / "expr_corpus.json"


class EvalErr(Exception):
    def __init__(self, kind):
        super().__init__(kind)
        self.kind = kind


NULL, NUM, BOOL, STR, ARR = "null", "number", "boolean", "string", "array"


def tag(v):
    if v is None:
        return NULL
    if type(v) is bool:
        return BOOL
    if type(v) is float:
        return NUM
    if type(v) is str:
        return STR
    if type(v) is list:
        return ARR
    raise AssertionError(f"bad mirror value {v!r}")


def want(v, t):
    if v is None:
        raise EvalErr("NullOperand")
    if tag(v) != t:
        raise EvalErr("TypeMismatch")
    return v


def checked(x):
    if math.isnan(x):
        raise EvalErr("Domain")
    return x


def deep_eq(a, b):
    ta, tb = tag(a), tag(b)
    if ta != tb:
        return False
    if ta == ARR:
        return len(a) == len(b) and all(deep_eq(x, y) for x, y in zip(a, b))
    return a == b


def to_index(d):
    if math.isnan(d):
        return 0
    return int(d)  # truncates toward zero


def decode(j):
    """JSON channel value -> mirror value (integers become floats)."""
    if type(j) is bool:
        return j
    if isinstance(j, (int, float)):
        return float(j)
    if isinstance(j, str):
        return j
    if isinstance(j, list):
        return [decode(e) for e in j]
    raise AssertionError(f"bad channel value {j!r}")


def type_string(v):
    return {NUM: "numeric", BOOL: "boolean", STR: "string", ARR: "array"}[tag(v)]


def resolve_path(su, segments):
    if not segments:
        return None
    head = segments[0]
    if head == "channels":
        if len(segments) != 3:
            return None
        ch = next((c for c in su["channels"] if c["name"] == segments[1]), None)
        if ch is None:
            return None
        field = segments[2]
        if field == "current-value":
            return decode(ch["current-value"])
        if field == "name":
            return ch["name"]
        if field == "type":
            return type_string(decode(ch["current-value"]))
        if field == "unit":
            return ch.get("unit")
        return None
    if head == "lastUpdate":
        return float(su["lastUpdate"]) if len(segments) == 1 else None
    if head == "name":
        return su.get("name", "") if len(segments) == 1 else None
    if head == "customFields":
        if len(segments) != 2:
            return None
        cf = su.get("customFields", {})
        return decode(cf[segments[1]]) if segments[1] in cf else None
    return None


# ---------------------------------------------------------------------------
# AST: ('num', f) ('str', s) ('bool', b) ('arr', [n]) ('path', alias, segs)
#      ('un', op, n) ('bin', op, l, r) ('tern', c, t, e) ('call', name, [n])


def ev(node, bindings):
    k = node[0]
    if k == "num":
        return node[1]
    if k == "str":
        return node[1]
    if k == "bool":
        return node[1]
    if k == "arr":
        out = []
        for e in node[1]:
            v = ev(e, bindings)
            if v is None:
                raise EvalErr("NullOperand")
            out.append(v)
        return out
    if k == "path":
        if node[1] not in bindings:
            raise EvalErr("UnboundAlias")
        return resolve_path(bindings[node[1]], node[2])
    if k == "un":
        v = ev(node[2], bindings)
        if node[1] == "!":
            return not want(v, BOOL)
        return -want(v, NUM)
    if k == "tern":
        c = want(ev(node[1], bindings), BOOL)
        return ev(node[2] if c else node[3], bindings)
    if k == "bin":
        return ev_bin(node, bindings)
    if k == "call":
        args = []
        for a in node[2]:
            v = ev(a, bindings)
            if v is None:
                raise EvalErr("NullOperand")
            args.append(v)
        return apply_call(node[1], args)
    raise AssertionError(k)


def ev_bin(node, bindings):
    op = node[1]
    if op == "||":
        if want(ev(node[2], bindings), BOOL):
            return True
        return want(ev(node[3], bindings), BOOL)
    if op == "&&":
        if not want(ev(node[2], bindings), BOOL):
            return False
        return want(ev(node[3], bindings), BOOL)
    a = ev(node[2], bindings)
    b = ev(node[3], bindings)
    if op in ("==", "!="):
        for v in (a, b):
            if v is None:
                raise EvalErr("NullOperand")
        eq = deep_eq(a, b)
        return eq if op == "==" else not eq
    if op in ("<", "<=", ">", ">="):
        for v in (a, b):
            if v is None:
                raise EvalErr("NullOperand")
        if tag(a) == NUM and tag(b) == NUM or tag(a) == STR and tag(b) == STR:
            c = -1 if a < b else (1 if a > b else 0)
        else:
            raise EvalErr("TypeMismatch")
        return {"<": c < 0, "<=": c <= 0, ">": c > 0, ">=": c >= 0}[op]
    if op == "+":
        if tag(a) == STR and tag(b) == STR:
            return a + b
        return checked(want(a, NUM) + want(b, NUM))
    if op == "-":
        return checked(want(a, NUM) - want(b, NUM))
    if op == "*":
        return checked(want(a, NUM) * want(b, NUM))
    if op == "/":
        x, y = want(a, NUM), want(b, NUM)
        if y == 0:
            raise EvalErr("DivByZero")
        return checked(x / y)
    if op == "%":
        x, y = want(a, NUM), want(b, NUM)
        if y == 0:
            raise EvalErr("DivByZero")
        return checked(math.fmod(x, y))
    raise AssertionError(op)


def apply_call(name, args):
    if name == "math.abs":
        return math.fabs(want(args[0], NUM))
    if name in ("math.min", "math.max"):
        nums = [want(a, NUM) for a in args]
        return min(nums) if name == "math.min" else max(nums)
    if name == "math.floor":
        return float(math.floor(want(args[0], NUM)))
    if name == "math.ceil":
        return float(math.ceil(want(args[0], NUM)))
    if name == "math.round":
        return float(math.floor(want(args[0], NUM) + 0.5))
    if name == "math.sqrt":
        x = want(args[0], NUM)
        if x < 0:
            raise EvalErr("Domain")
        return math.sqrt(x)
    if name == "math.pow":
        x, y = want(args[0], NUM), want(args[1], NUM)
        try:
            return checked(math.pow(x, y))
        except ValueError:
            raise EvalErr("Domain")
        except OverflowError:
            return math.inf  # sign irrelevant: non-finite results are skipped
    if name == "str.length":
        return float(len(want(args[0], STR)))
    if name == "str.upper":
        return want(args[0], STR).upper()
    if name == "str.lower":
        return want(args[0], STR).lower()
    if name == "str.substring":
        s = want(args[0], STR)
        n = len(s)
        start = to_index(want(args[1], NUM))
        end = to_index(want(args[2], NUM)) if len(args) > 2 else n
        start = min(max(start, 0), n)
        end = min(max(end, 0), n)
        if start > end:
            start, end = end, start
        return s[start:end]
    if name == "str.indexOf":
        at = want(args[0], STR).find(want(args[1], STR))
        return float(at)
    if name == "str.concat":
        return "".join(want(a, STR) for a in args)
    if name == "arr.length":
        return float(len(want(args[0], ARR)))
    if name == "arr.concat":
        out = []
        for a in args:
            out.extend(want(a, ARR))
        return out
    if name == "arr.slice":
        a = want(args[0], ARR)
        n = len(a)
        start = to_index(want(args[1], NUM))
        end = to_index(want(args[2], NUM)) if len(args) > 2 else n
        if start < 0:
            start = max(0, n + start)
        if end < 0:
            end = max(0, n + end)
        start = min(start, n)
        end = min(end, n)
        return [a[i] for i in range(start, end)]
    if name == "arr.indexOf":
        a = want(args[0], ARR)
        for i, v in enumerate(a):
            if deep_eq(v, args[1]):
                return float(i)
        return -1.0
    if name in ("arr.sum", "arr.avg"):
        a = want(args[0], ARR)
        if name == "arr.avg" and not a:
            raise EvalErr("Domain")
        total = 0.0
        for v in a:
            total += want(v, NUM)
        return checked(total if name == "arr.sum" else total / len(a))
    raise AssertionError(name)


# ---------------------------------------------------------------------------
# Rendering with minimal parentheses, so the corpus also exercises the
# parser's precedence and associativity rules.

PREC = {
    "||": 1, "&&": 2, "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}


def render_num(f):
    r = repr(f)
    assert not r.startswith("-") and "inf" not in r and "nan" not in r
    return r


def render_str(s):
    body = s.replace("\\", "\\\\").replace("'", "\\'")
    return "'" + body + "'"


def render(node):
    """Returns (text, precedence-level of the produced form)."""
    k = node[0]
    if k == "num":
        return render_num(node[1]), 8
    if k == "str":
        return render_str(node[1]), 8
    if k == "bool":
        return ("true" if node[1] else "false"), 8
    if k == "arr":
        return "[" + ", ".join(wrap(e, 0) for e in node[1]) + "]", 8
    if k == "path":
        return "{$" + ".".join([node[1]] + node[2]) + "}", 8
    if k == "un":
        return node[1] + wrap(node[2], 7), 7
    if k == "bin":
        p = PREC[node[1]]
        return f"{wrap(node[2], p)} {node[1]} {wrap(node[3], p + 1)}", p
    if k == "tern":
        return f"{wrap(node[1], 1)} ? {wrap(node[2], 0)} : {wrap(node[3], 0)}", 0
    if k == "call":
        return node[1] + "(" + ", ".join(wrap(a, 0) for a in node[2]) + ")", 8
    raise AssertionError(k)


def wrap(node, minp):
    text, p = render(node)
    return f"({text})" if p < minp else text


# ---------------------------------------------------------------------------
# Random generation

ALPHABET = "abcxyz XYZ012_-"
DECIMALS = [0.0, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 0.5, 2.5, 1.25, 0.1, 42.0, 100.0, 3.75]


class Gen:
    def __init__(self, rng):
        self.rng = rng
        self.bindings = self.make_bindings()

    def make_bindings(self):
        r = self.rng

        def dec():
            v = r.choice(DECIMALS)
            return -v if r.random() < 0.25 and v != 0 else v

        def word(lo=1, hi=8):
            return "".join(r.choice(ALPHABET) for _ in range(r.randint(lo, hi)))

        def chan(name, value, **extra):
            c = {"name": name, "current-value": value}
            c.update(extra)
            return c

        return {
            "input": {
                "name": "gen-input",
                "lastUpdate": r.randint(1_000_000, 2_000_000),
                "channels": [
                    chan("num", dec(), type="numeric", unit="u" + word(1, 3).strip() or "ux"),
                    chan("s", word(0, 8)),
                    chan("arr", [dec() for _ in range(r.randint(2, 5))]),
                    chan("flag", r.random() < 0.5),
                ],
                "customFields": {"level": dec(), "tag": word()},
            },
            "previous": {
                "name": "gen-previous",
                "lastUpdate": r.randint(100, 999),
                "channels": [
                    chan("num", dec()),
                    chan("s", word(0, 6)),
                ],
            },
        }

    NUM_PATHS = [
        ("input", ["channels", "num", "current-value"]),
        ("input", ["lastUpdate"]),
        ("input", ["customFields", "level"]),
        ("previous", ["channels", "num", "current-value"]),
    ]
    STR_PATHS = [
        ("input", ["channels", "s", "current-value"]),
        ("input", ["name"]),
        ("input", ["channels", "num", "type"]),
        ("input", ["channels", "num", "name"]),
        ("input", ["customFields", "tag"]),
        ("previous", ["channels", "s", "current-value"]),
    ]
    BOOL_PATHS = [("input", ["channels", "flag", "current-value"])]
    ARR_PATHS = [("input", ["channels", "arr", "current-value"])]
    GHOST_PATHS = [
        ("input", ["channels", "ghost", "current-value"]),
        ("input", ["customFields", "missing"]),
        ("previous", ["channels", "num", "unit"]),
    ]

    def path(self, pool):
        alias, segs = self.rng.choice(pool)
        return ("path", alias, list(segs))

    def leaf(self, t):
        r = self.rng
        # A small poison chance swaps in a wrong-typed or absent-path leaf so
        # the corpus holds organically mistyped programs too.
        if r.random() < 0.05:
            return self.path(self.GHOST_PATHS)
        if r.random() < 0.06:
            wrong = r.choice([x for x in (NUM, STR, BOOL, ARR) if x != t])
            return self.leaf_of(wrong)
        return self.leaf_of(t)

    def leaf_of(self, t):
        r = self.rng
        if t == NUM:
            if r.random() < 0.5:
                return ("num", r.choice(DECIMALS))
            return self.path(self.NUM_PATHS)
        if t == STR:
            if r.random() < 0.5:
                s = "".join(r.choice(ALPHABET) for _ in range(r.randint(0, 7)))
                return ("str", s)
            return self.path(self.STR_PATHS)
        if t == BOOL:
            if r.random() < 0.5:
                return ("bool", r.random() < 0.5)
            return self.path(self.BOOL_PATHS)
        if t == ARR:
            if r.random() < 0.6:
                return ("arr", [self.leaf_of(NUM) for _ in range(r.randint(0, 4))])
            return self.path(self.ARR_PATHS)
        raise AssertionError(t)

    def small_index(self):
        k = self.rng.randint(-3, 6)
        return ("un", "-", ("num", float(-k))) if k < 0 else ("num", float(k))

    def num(self, d):
        r = self.rng
        if d <= 0:
            return self.leaf(NUM)
        pick = r.randint(0, 9)
        if pick == 0:
            return self.leaf(NUM)
        if pick == 1:
            return ("un", "-", self.num(d - 1))
        if pick <= 4:
            op = r.choice(["+", "-", "*", "/", "%"])
            return ("bin", op, self.num(d - 1), self.num(d - 1))
        if pick == 5:
            f = r.choice(["math.abs", "math.floor", "math.ceil", "math.round", "math.sqrt"])
            return ("call", f, [self.num(d - 1)])
        if pick == 6:
            f = r.choice(["math.min", "math.max"])
            return ("call", f, [self.num(d - 1) for _ in range(r.randint(2, 3))])
        if pick == 7:
            f = r.choice(["str.length", "str.indexOf"])
            if f == "str.length":
                return ("call", f, [self.str_(d - 1)])
            return ("call", f, [self.str_(d - 1), self.str_(0)])
        if pick == 8:
            f = r.choice(["arr.length", "arr.sum", "arr.avg", "arr.indexOf"])
            if f == "arr.indexOf":
                return ("call", f, [self.arr(d - 1), self.num(0)])
            return ("call", f, [self.arr(d - 1)])
        return ("tern", self.bool_(d - 1), self.num(d - 1), self.num(d - 1))

    def str_(self, d):
        r = self.rng
        if d <= 0:
            return self.leaf(STR)
        pick = r.randint(0, 5)
        if pick == 0:
            return self.leaf(STR)
        if pick == 1:
            return ("bin", "+", self.str_(d - 1), self.str_(d - 1))
        if pick == 2:
            return ("call", "str.concat", [self.str_(d - 1) for _ in range(r.randint(2, 3))])
        if pick == 3:
            return ("call", r.choice(["str.upper", "str.lower"]), [self.str_(d - 1)])
        if pick == 4:
            args = [self.str_(d - 1), self.small_index()]
            if r.random() < 0.5:
                args.append(self.small_index())
            return ("call", "str.substring", args)
        return ("tern", self.bool_(d - 1), self.str_(d - 1), self.str_(d - 1))

    def bool_(self, d):
        r = self.rng
        if d <= 0:
            return self.leaf(BOOL)
        pick = r.randint(0, 5)
        if pick == 0:
            return self.leaf(BOOL)
        if pick == 1:
            return ("un", "!", self.bool_(d - 1))
        if pick == 2:
            op = r.choice(["<", "<=", ">", ">="])
            if r.random() < 0.7:
                return ("bin", op, self.num(d - 1), self.num(d - 1))
            return ("bin", op, self.str_(d - 1), self.str_(d - 1))
        if pick == 3:
            op = r.choice(["==", "!="])
            t = r.choice([NUM, STR, BOOL, ARR])
            side = {NUM: self.num, STR: self.str_, BOOL: self.bool_, ARR: self.arr}[t]
            return ("bin", op, side(d - 1), side(0))
        if pick == 4:
            return ("bin", r.choice(["&&", "||"]), self.bool_(d - 1), self.bool_(d - 1))
        return ("tern", self.bool_(d - 1), self.bool_(d - 1), self.bool_(d - 1))

    def arr(self, d):
        r = self.rng
        if d <= 0:
            return self.leaf(ARR)
        pick = r.randint(0, 3)
        if pick == 0:
            return self.leaf(ARR)
        if pick == 1:
            return ("call", "arr.concat", [self.arr(d - 1), self.arr(d - 1)])
        if pick == 2:
            args = [self.arr(d - 1), self.small_index()]
            if r.random() < 0.5:
                args.append(self.small_index())
            return ("call", "arr.slice", args)
        return ("tern", self.bool_(d - 1), self.arr(d - 1), self.arr(d - 1))


def finite(v):
    t = tag(v)
    if t == NUM:
        return math.isfinite(v)
    if t == ARR:
        return all(finite(e) for e in v)
    return True


def encode(v):
    """Mirror value -> JSON expected-value document."""
    if v is None:
        return None
    t = tag(v)
    if t == ARR:
        return [encode(e) for e in v]
    return v


# ---------------------------------------------------------------------------

CURATED_BINDINGS = {
    "input": {
        "name": "temperature",
        "lastUpdate": 194896800,
        "channels": [
            {"name": "num", "current-value": 22.58, "type": "numeric", "unit": "m/s2"},
            {"name": "s", "current-value": "hello"},
            {"name": "arr", "current-value": [1, 2, 3, 4]},
            {"name": "flag", "current-value": True},
        ],
        "customFields": {"risk": "low", "averageLastDay": 42},
    },
}


def curated_cases():
    b = CURATED_BINDINGS
    cases = []

    def val(name, expr, value, bindings=None):
        cases.append({"name": name, "expr": expr, "bindings": bindings or {},
                      "kind": "value", "value": value})

    def err(name, expr, error, bindings=None):
        cases.append({"name": name, "expr": expr, "bindings": bindings or {},
                      "kind": "error", "error": error})

    def flt(name, expr, value, bindings=None):
        cases.append({"name": name, "expr": expr, "bindings": bindings or {},
                      "kind": "filter", "value": value})

    def flterr(name, expr, bindings=None):
        cases.append({"name": name, "expr": expr, "bindings": bindings or {},
                      "kind": "filter-error"})

    # Precedence and associativity.
    val("prec-mul-over-add", "1 + 2 * 3", 7.0)
    val("prec-parens", "(1 + 2) * 3", 9.0)
    val("prec-mod", "2 + 3 % 2", 3.0)
    val("assoc-sub-left", "10 - 4 - 3", 3.0)
    val("assoc-div-left", "100 / 10 / 5", 2.0)
    val("prec-unary-minus", "-2 * 3", -6.0)
    val("prec-not-and-or", "!true || true && false", False)
    val("prec-rel-over-eq", "1 < 2 == true", True)
    val("ternary-right-assoc", "true ? 1 : false ? 2 : 3", 1.0)
    val("ternary-else-chain", "false ? 1 : true ? 2 : 3", 2.0)
    val("ternary-nested-then", "true ? false ? 1 : 2 : 3", 2.0)
    val("unary-double-neg", "--5", 5.0)
    val("unary-double-not", "!!false", False)
    val("ternary-lazy-skips-error", "true ? 1 : 1 / 0", 1.0)
    val("or-short-circuit", "true || 1 / 0 > 0", True)
    val("and-short-circuit", "false && 1 / 0 > 0", False)

    # Equality is deep and type-tagged.
    val("eq-deep-array", "[1, 2] == [1, 2]", True)
    val("eq-nested-array", "[1, [2, 3]] == [1, [2, 3]]", True)
    val("eq-num-vs-string", "1 == '1'", False)
    val("eq-num-vs-bool", "true == 1", False)
    val("ne-strings", "'a' != 'b'", True)
    val("eq-empty-arrays", "[] == []", True)

    # String handling.
    val("str-concat-plus", "'a' + 'b'", "ab")
    val("str-escapes", "'it\\'s' + \"\\t\"", "it's\t")
    val("str-compare", "'apple' < 'banana'", True)
    err("str-plus-number", "'a' + 1", "TypeMismatch")
    err("minus-string", "-'a'", "TypeMismatch")

    # Number formatting edge: exponents parse.
    val("exponent-literal", "1e3 + 2E-2", 1e3 + 2e-2)
    val("leading-dot-literal", ".5 * 4", 2.0)

    # Builtins.
    val("abs", "math.abs(0 - 3.5)", 3.5)
    val("min-varargs", "math.min(3, 1, 2)", 1.0)
    val("max-varargs", "math.max(3, 1, 2)", 3.0)
    val("round-half-up", "math.round(2.5)", 3.0)
    val("round-negative-half", "math.round(-2.5)", -2.0)
    val("round-down", "math.round(2.4)", 2.0)
    val("floor-negative", "math.floor(-2.5)", -3.0)
    val("ceil-negative", "math.ceil(-2.5)", -2.0)
    val("sqrt", "math.sqrt(9)", 3.0)
    err("sqrt-negative", "math.sqrt(-1)", "Domain")
    val("pow", "math.pow(2, 10)", 1024.0)
    val("pow-negative-base-int-exp", "math.pow(-2, 3)", -8.0)
    val("pow-zero-zero", "math.pow(0, 0)", 1.0)
    err("pow-negative-base-frac-exp", "math.pow(-8, 0.5)", "Domain")
    val("str-length", "str.length('hello')", 5.0)
    val("str-upper", "str.upper('MiXed-123')", "MIXED-123")
    val("str-lower", "str.lower('MiXed-123')", "mixed-123")
    val("substring-basic", "str.substring('hello', 1, 3)", "el")
    val("substring-swapped", "str.substring('hello', 3, 1)", "el")
    val("substring-clamped", "str.substring('hello', -2, 99)", "hello")
    val("substring-open-end", "str.substring('hello', 2)", "llo")
    val("substring-fractional", "str.substring('hello', 1.9)", "ello")
    val("indexof-found", "str.indexOf('hello', 'll')", 2.0)
    val("indexof-missing", "str.indexOf('hello', 'x')", -1.0)
    val("indexof-empty-needle", "str.indexOf('hello', '')", 0.0)
    val("str-concat-varargs", "str.concat('a', 'b', 'c')", "abc")
    val("arr-length", "arr.length([1, 2, 3])", 3.0)
    val("arr-concat", "arr.concat([1], [2, 3])", [1.0, 2.0, 3.0])
    val("arr-slice-basic", "arr.slice([1, 2, 3, 4], 1, 3)", [2.0, 3.0])
    val("arr-slice-negative-start", "arr.slice([1, 2, 3, 4], -2)", [3.0, 4.0])
    val("arr-slice-negative-both", "arr.slice([1, 2, 3, 4], -10, -2)", [1.0, 2.0])
    val("arr-slice-no-swap", "arr.slice([1, 2, 3, 4], 3, 1)", [])
    val("arr-indexof-found", "arr.indexOf([1, 2, 3], 2)", 1.0)
    val("arr-indexof-type-tagged", "arr.indexOf([1, 2, 3], true)", -1.0)
    val("arr-indexof-deep", "arr.indexOf([[1], [2]], [2])", 1.0)
    val("arr-sum", "arr.sum([1, 2, 3])", 6.0)
    val("arr-sum-empty", "arr.sum([])", 0.0)
    val("arr-avg", "arr.avg([2, 4])", 3.0)
    err("arr-avg-empty", "arr.avg([])", "Domain")
    err("arr-sum-strings", "arr.sum(['a'])", "TypeMismatch")

    # Division and modulo.
    err("div-zero", "1 / 0", "DivByZero")
    err("mod-zero", "1 % 0", "DivByZero")
    err("zero-div-zero", "0 / 0", "DivByZero")
    val("fmod-sign", "-7 % 3", -1.0)

    # Comparisons across types.
    err("rel-bool-number", "1 < 2 < 3", "TypeMismatch")
    err("rel-string-number", "'a' < 1", "TypeMismatch")
    err("cond-not-bool", "1 ? 2 : 3", "TypeMismatch")
    err("not-on-number", "!5", "TypeMismatch")

    # Syntax errors and parse-time rejection.
    err("syn-trailing", "1 +", "syntax")
    err("syn-unbalanced", "(1 + 2", "syntax")
    err("syn-bad-path", "{$x", "syntax")
    err("syn-empty", "", "syntax")
    err("syn-lone-and", "1 & 2", "syntax")
    err("syn-min-arity", "math.min(2)", "syntax")
    err("syn-substring-arity", "str.substring('a', 1, 2, 3)", "syntax")
    err("syn-abs-arity", "math.abs()", "syntax")
    err("unknown-namespace", "foo.bar(1)", "unknown-function")
    err("unknown-math-fn", "math.nope(1)", "unknown-function")
    err("syn-depth-limit", "(" * 300 + "1" + ")" * 300, "syntax")
    err("syn-bad-escape", "'a\\q'", "syntax")
    err("syn-bare-ident", "hello", "syntax")

    # Path references.
    val("path-channel-value", "{$input.channels.num.current-value}", 22.58, b)
    val("path-last-update", "{$input.lastUpdate}", 194896800.0, b)
    val("path-stream-name", "{$input.name}", "temperature", b)
    val("path-custom-field", "{$input.customFields.risk}", "low", b)
    val("path-channel-type", "{$input.channels.num.type}", "numeric", b)
    val("path-channel-unit", "{$input.channels.num.unit}", "m/s2", b)
    val("path-channel-name", "{$input.channels.num.name}", "num", b)
    val("path-whitespace", "{ $input.channels.num.current-value }", 22.58, b)
    val("path-wrapped-lines", "{$input.\n  channels.num.\n  current-value}", 22.58, b)
    val("path-array-channel", "{$input.channels.arr.current-value}", [1.0, 2.0, 3.0, 4.0], b)
    val("path-absent-channel", "{$input.channels.ghost.current-value}", None, b)
    val("path-absent-custom-field", "{$input.customFields.absent}", None, b)
    val("path-short-channels", "{$input.channels.num}", None, b)
    val("path-unit-absent", "{$input.channels.s.unit}", None, b)
    err("unbound-alias", "{$nosuch.lastUpdate}", "UnboundAlias", b)
    err("null-plus-number", "{$input.channels.ghost.current-value} + 1", "NullOperand", b)
    err("null-in-array-literal", "[1, {$input.channels.ghost.current-value}]", "NullOperand", b)
    err("null-function-arg", "math.abs({$input.channels.ghost.current-value})", "NullOperand", b)
    err("null-equality", "{$input.channels.ghost.current-value} == 1", "NullOperand", b)
    val("path-arith", "({$input.channels.num.current-value} - 32) / 1.8", (22.58 - 32) / 1.8, b)

    # Filters.
    flt("filter-true", "{$input.channels.num.current-value} > 10", True, b)
    flt("filter-false", "({$input.channels.num.current-value} < 0)", False, b)
    flt("filter-direct-bool", "{$input.channels.flag.current-value}", True, b)
    flt("filter-compound", "{$input.lastUpdate} > 0 && str.length({$input.channels.s.current-value}) == 5", True, b)
    flterr("filter-not-boolean", "1 + 1")
    flterr("filter-null-result", "{$input.channels.ghost.current-value}", b)
    flterr("filter-eval-error", "{$input.channels.ghost.current-value} > 1", b)

    return cases


def generated_cases(rng, want_values=70, want_filters=10, err_quota=None):
    if err_quota is None:
        err_quota = {"TypeMismatch": 8, "NullOperand": 8, "DivByZero": 6, "Domain": 5}
    cases = []
    err_counts = dict.fromkeys(err_quota, 0)
    n_values = n_filters = 0
    attempts = 0
    while (n_values < want_values or n_filters < want_filters
           or any(err_counts[k] < err_quota[k] for k in err_quota)):
        attempts += 1
        if attempts > 20000:
            raise RuntimeError("generator did not converge; loosen quotas")
        g = Gen(rng)
        as_filter = rng.random() < 0.2
        depth = rng.randint(1, 4)
        if as_filter:
            node = g.bool_(depth)
        else:
            t = rng.choice([NUM, NUM, NUM, STR, BOOL, ARR])
            node = {NUM: g.num, STR: g.str_, BOOL: g.bool_, ARR: g.arr}[t](depth)
        text, _ = render(node)
        if len(text) > 600:
            continue
        try:
            result = ev(node, g.bindings)
        except EvalErr as e:
            if e.kind not in err_counts or err_counts[e.kind] >= err_quota[e.kind]:
                continue
            err_counts[e.kind] += 1
            cases.append({"name": f"gen-err-{e.kind.lower()}-{err_counts[e.kind]}",
                          "expr": text, "bindings": g.bindings,
                          "kind": "error", "error": e.kind})
            continue
        if not finite(result if result is not None else 0.0):
            continue
        if as_filter and tag(result) == BOOL:
            if n_filters >= want_filters:
                continue
            n_filters += 1
            cases.append({"name": f"gen-filter-{n_filters}", "expr": text,
                          "bindings": g.bindings, "kind": "filter",
                          "value": result})
        else:
            if n_values >= want_values:
                continue
            n_values += 1
            cases.append({"name": f"gen-value-{n_values}", "expr": text,
                          "bindings": g.bindings, "kind": "value",
                          "value": encode(result)})
    return cases


def main():
    rng = random.Random(SEED)
    cases = curated_cases() + generated_cases(rng)
    names = [c["name"] for c in cases]
    assert len(names) == len(set(names)), "duplicate case names"
    assert len(cases) >= 100, f"only {len(cases)} cases"
    doc = {"seed": SEED, "count": len(cases), "cases": cases}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as f:
        json.dump(doc, f, indent=1, sort_keys=True, allow_nan=False)
        f.write("\n")
    print(f"wrote {len(cases)} cases to {OUT}", file=sys.stderr)


if __name__ == "__main__":
    main()
