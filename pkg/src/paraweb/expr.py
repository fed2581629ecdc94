"""Immutable symbolic expression kernel with exact rational arithmetic.

Expressions are trees over jet coordinates, exact rationals, a small set
of elementary functions and "opaque" derivative symbols of undetermined
functions (a right-hand side F, a web function w, ...).  Every node is
hash-consed: building the same canonical expression twice yields the same
Python object, so equality is identity and large expression DAGs share
structure.  Canonical form flattens and sorts sums and products, folds
rational constants, collects like terms and merges integer powers.  It
never expands products over sums; deciding whether a non-obvious
expression vanishes is the job of randomized identity testing (see
``paraweb.zerotest``).

All values are immutable and all operations are pure, so expressions can
be shared and evaluated from multiple threads; the intern table is only
mutated through atomic ``dict.setdefault`` calls.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Mapping, Union

__all__ = [
    "Expr",
    "ExprError",
    "EvaluationError",
    "UnassignedSymbolError",
    "EvalDomainError",
    "SubstitutionError",
    "ELEMENTARY_FUNCTIONS",
    "rational",
    "integer",
    "sym",
    "opaque",
    "fun",
    "add",
    "mul",
    "pow_int",
    "neg",
    "sub",
    "div",
    "ZERO",
    "ONE",
    "differentiate",
    "eval_numeric",
    "magnitude_estimate",
    "expand",
    "free_symbols",
    "substitute",
    "symbol_name",
    "to_string",
]

Number = Union[int, Fraction, float]

# Node kinds; the integer doubles as the major rank of the canonical order.
RAT, SYM, OPAQUE, FUN, POW, MUL, ADD = range(7)

ELEMENTARY_FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class ExprError(Exception):
    pass


class EvaluationError(ExprError):
    pass


class UnassignedSymbolError(EvaluationError):
    pass


class EvalDomainError(EvaluationError):
    """Evaluation hit a pole or left the domain of an elementary function."""


class SubstitutionError(ExprError):
    pass


class Expr:
    """A canonical, interned expression node.  Use the module-level
    constructors; never instantiate directly."""

    __slots__ = ("kind", "payload", "children", "key", "shash", "has_fun", "uid")

    kind: int
    children: tuple["Expr", ...]

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Expr({to_string(self)})"

    def __str__(self) -> str:
        return to_string(self)

    # Identity semantics: interning guarantees canonical-equal expressions
    # are the same object.
    __hash__ = object.__hash__

    def __eq__(self, other: object) -> bool:
        return self is other

    # Small operator sugar, handy in tests and notebooks.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, n: int):
        return pow_int(self, n)

    def __neg__(self):
        return neg(self)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return rational(x)
    raise TypeError(f"cannot coerce {x!r} to Expr")


# ---------------------------------------------------------------------------
# Interning

_INTERN: dict = {}
_RAT_INTERN: dict = {}
_UID = itertools.count()

_MASK = (1 << 64) - 1
_FNV_PRIME = 0x100000001B3
_STR_HASH_CACHE: dict[str, int] = {}


def _mix(h: int, v: int) -> int:
    return ((h ^ (v & _MASK)) * _FNV_PRIME) & _MASK


def _str_hash(s: str) -> int:
    # Stable across processes, unlike the interpreter's salted str hash.
    got = _STR_HASH_CACHE.get(s)
    if got is None:
        got = 0xCBF29CE484222325
        for b in s.encode():
            got = _mix(got, b)
        _STR_HASH_CACHE[s] = got
    return got


def _structural_hash(kind: int, payload, children: tuple[Expr, ...]) -> int:
    h = _mix(0xCBF29CE484222325, kind)
    if kind == RAT:
        h = _mix(h, payload.numerator)
        h = _mix(h, payload.denominator)
    elif kind in (SYM, FUN):
        h = _mix(h, _str_hash(payload))
    elif kind == OPAQUE:
        name, deps, orders = payload
        h = _mix(h, _str_hash(name))
        for d in deps:
            h = _mix(h, _str_hash(d))
        for o in orders:
            h = _mix(h, o)
    elif kind == POW:
        h = _mix(h, payload)
    for c in children:
        h = _mix(h, c.shash)
    return h


def _sort_key(kind: int, payload, children: tuple[Expr, ...]):
    if kind == RAT:
        return (RAT, payload)
    if kind == SYM:
        return (SYM, payload)
    if kind == OPAQUE:
        name, deps, orders = payload
        return (OPAQUE, name, orders, deps)
    if kind == FUN:
        return (FUN, payload, children[0].key)
    if kind == POW:
        return (POW, children[0].key, payload)
    return (kind, tuple(c.key for c in children))


def _make(kind: int, payload, children: tuple[Expr, ...]) -> Expr:
    ident = (kind, payload, tuple(id(c) for c in children))
    node = _INTERN.get(ident)
    if node is not None:
        return node
    node = object.__new__(Expr)
    node.kind = kind
    node.payload = payload
    node.children = children
    node.key = _sort_key(kind, payload, children)
    node.shash = _structural_hash(kind, payload, children)
    node.has_fun = kind == FUN or any(c.has_fun for c in children)
    node.uid = next(_UID)
    return _INTERN.setdefault(ident, node)


# ---------------------------------------------------------------------------
# Constructors

def rational(p: Union[int, Fraction], q: int = 1) -> Expr:
    """Exact rational constant p/q."""
    if q == 1:
        frac = p if isinstance(p, Fraction) else Fraction(p)
    else:
        frac = Fraction(p, q)
    ident = (frac.numerator, frac.denominator)
    node = _RAT_INTERN.get(ident)
    if node is not None:
        return node
    node = _make(RAT, frac, ())
    return _RAT_INTERN.setdefault(ident, node)


def integer(n: int) -> Expr:
    return rational(n)


ZERO = rational(0)
ONE = rational(1)
MINUS_ONE = rational(-1)


def sym(name: str) -> Expr:
    """A coordinate symbol."""
    return _make(SYM, name, ())


def opaque(name: str, deps: tuple[str, ...], orders: tuple[int, ...] | None = None) -> Expr:
    """Derivative symbol of an undetermined function.

    ``deps`` lists the coordinates the function depends on, in a fixed
    order; ``orders`` gives the number of partial derivatives taken in
    each of them.  The all-zero multi-index is the bare function symbol.
    Two symbols are equal iff name and multi-index agree; mixed partials
    commute by construction because only the counts are stored.
    """
    if orders is None:
        orders = (0,) * len(deps)
    if len(orders) != len(deps):
        raise ValueError("orders must align with deps")
    if any(o < 0 for o in orders):
        raise ValueError("derivative orders must be non-negative")
    return _make(OPAQUE, (name, tuple(deps), tuple(orders)), ())


def fun(name: str, arg: Expr) -> Expr:
    """Elementary function application exp/log/sin/cos/sqrt."""
    if name not in ELEMENTARY_FUNCTIONS:
        raise ValueError(f"unknown elementary function {name!r}")
    if arg.kind == RAT:
        v = arg.payload
        if name == "exp" and v == 0:
            return ONE
        if name == "log" and v == 1:
            return ZERO
        if name == "sin" and v == 0:
            return ZERO
        if name == "cos" and v == 0:
            return ONE
        if name == "sqrt":
            if v < 0:
                raise ValueError("sqrt of a negative rational")
            rn, rd = _isqrt_exact(v.numerator), _isqrt_exact(v.denominator)
            if rn is not None and rd is not None:
                return rational(Fraction(rn, rd))
    return _make(FUN, name, (arg,))


def _isqrt_exact(n: int) -> int | None:
    r = math.isqrt(n)
    return r if r * r == n else None


_ONE_FRACTION = Fraction(1)


def _coeff_mono(t: Expr) -> tuple[Fraction, Expr]:
    """Split a non-rational canonical term into (rational coefficient, monomial)."""
    if t.kind == MUL and t.children[0].kind == RAT:
        rest = t.children[1:]
        monomial = rest[0] if len(rest) == 1 else _make(MUL, None, rest)
        return t.children[0].payload, monomial
    return _ONE_FRACTION, t


def _scale_mono(c: Fraction, m: Expr) -> Expr:
    """Attach a nonzero, non-unit rational coefficient to a coefficient-free monomial."""
    coeff = rational(c)
    if m.kind == MUL:
        return _make(MUL, None, (coeff,) + m.children)
    return _make(MUL, None, (coeff, m))


def add(*terms: Expr) -> Expr:
    return add_iter(terms)


def add_iter(terms: Iterable[Expr]) -> Expr:
    const = Fraction(0)
    by_mono: dict[Expr, Fraction] = {}
    stack = list(terms)
    stack.reverse()
    while stack:
        t = stack.pop()
        if t.kind == ADD:
            stack.extend(reversed(t.children))
            continue
        if t.kind == RAT:
            const += t.payload
            continue
        c, m = _coeff_mono(t)
        if m.kind == ADD:
            # scalar multiple of a sum: distribute and re-collect
            stack.extend(mul(rational(c), ch) for ch in m.children)
            continue
        acc = by_mono.get(m)
        by_mono[m] = c if acc is None else acc + c
    out: list[Expr] = []
    for m, c in by_mono.items():
        if c == 0:
            continue
        out.append(m if c == 1 else _scale_mono(c, m))
    if const != 0:
        out.append(rational(const))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    out.sort(key=lambda e: e.key)
    return _make(ADD, None, tuple(out))


def mul(*factors: Expr) -> Expr:
    return mul_iter(factors)


def mul_iter(factors: Iterable[Expr]) -> Expr:
    coeff = Fraction(1)
    by_base: dict[Expr, int] = {}
    stack = list(factors)
    stack.reverse()
    while stack:
        f = stack.pop()
        if f.kind == MUL:
            stack.extend(reversed(f.children))
        elif f.kind == RAT:
            coeff *= f.payload
        elif f.kind == POW:
            base, n = f.children[0], f.payload
            by_base[base] = by_base.get(base, 0) + n
        else:
            by_base[f] = by_base.get(f, 0) + 1
    if coeff == 0:
        return ZERO
    out: list[Expr] = []
    for base, n in by_base.items():
        if n == 0:
            continue
        p = pow_int(base, n)
        if p.kind == RAT:
            coeff *= p.payload
        else:
            out.append(p)
    if not out:
        return rational(coeff)
    if coeff != 1:
        out.insert(0, rational(coeff))
    if len(out) == 1:
        return out[0]
    out.sort(key=lambda e: e.key)
    return _make(MUL, None, tuple(out))


def pow_int(base: Expr, n: int) -> Expr:
    """Integer power.  Negative exponents are how quotients are stored."""
    if not isinstance(n, int):
        raise TypeError("exponent must be an integer")
    if n == 0:
        return ONE
    if n == 1:
        return base
    if base.kind == RAT:
        if base.payload == 0 and n < 0:
            raise ZeroDivisionError("0 raised to a negative power")
        return rational(base.payload ** n)
    if base.kind == MUL:
        return mul_iter(pow_int(c, n) for c in base.children)
    if base.kind == POW:
        return pow_int(base.children[0], base.payload * n)
    return _make(POW, n, (base,))


def neg(e: Expr) -> Expr:
    return mul(MINUS_ONE, e)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def div(a: Expr, b: Expr) -> Expr:
    return mul(a, pow_int(b, -1))


# ---------------------------------------------------------------------------
# Differentiation

_DIFF_CACHE: dict[tuple[int, str], Expr] = {}


def differentiate(e: Expr, v: str) -> Expr:
    """Partial derivative with respect to the coordinate named ``v``.

    Linear, satisfies the Leibniz rule, and on an opaque symbol either
    increments the matching multi-index entry or returns zero when the
    underlying function does not depend on ``v``.
    """
    cached = _DIFF_CACHE.get((e.uid, v))
    if cached is not None:
        return cached
    k = e.kind
    if k == RAT:
        out = ZERO
    elif k == SYM:
        out = ONE if e.payload == v else ZERO
    elif k == OPAQUE:
        name, deps, orders = e.payload
        if v in deps:
            i = deps.index(v)
            bumped = orders[:i] + (orders[i] + 1,) + orders[i + 1:]
            out = opaque(name, deps, bumped)
        else:
            out = ZERO
    elif k == ADD:
        out = add_iter(differentiate(c, v) for c in e.children)
    elif k == MUL:
        terms = []
        cs = e.children
        for i, c in enumerate(cs):
            dc = differentiate(c, v)
            if dc is ZERO:
                continue
            terms.append(mul_iter(cs[:i] + (dc,) + cs[i + 1:]))
        out = add_iter(terms)
    elif k == POW:
        base, n = e.children[0], e.payload
        db = differentiate(base, v)
        out = ZERO if db is ZERO else mul(rational(n), pow_int(base, n - 1), db)
    else:  # FUN
        arg = e.children[0]
        da = differentiate(arg, v)
        if da is ZERO:
            out = ZERO
        else:
            name = e.payload
            if name == "exp":
                outer = e
            elif name == "log":
                outer = pow_int(arg, -1)
            elif name == "sin":
                outer = fun("cos", arg)
            elif name == "cos":
                outer = neg(fun("sin", arg))
            else:  # sqrt
                outer = mul(rational(Fraction(1, 2)), pow_int(e, -1))
            out = mul(outer, da)
    _DIFF_CACHE[(e.uid, v)] = out
    return out


# ---------------------------------------------------------------------------
# Evaluation

def symbol_name(e: Expr) -> str:
    """Printable name of a coordinate or opaque-derivative symbol."""
    if e.kind == SYM:
        return e.payload
    if e.kind == OPAQUE:
        name, deps, orders = e.payload
        tail = "".join("_" + d for d, o in zip(deps, orders) for _ in range(o))
        return name + tail
    raise ValueError("not a symbol node")


def _lookup(e: Expr, env: Mapping) -> Number:
    if e in env:
        return env[e]
    name = symbol_name(e)
    if name in env:
        return env[name]
    raise UnassignedSymbolError(f"no value assigned to symbol {name!r}")


def eval_numeric(e: Expr, env: Mapping, memo: dict | None = None) -> Number:
    """Evaluate at an assignment of symbols to numbers.

    ``env`` maps symbol nodes (or their printed names) to numbers.  The
    result is an exact ``Fraction`` whenever every assigned value is
    rational and no elementary function occurs; otherwise it is a float.
    Division by zero at the assignment raises ``EvalDomainError`` so
    callers can resample.
    """
    if memo is None:
        memo = {}
    return _eval(e, env, memo)


def _eval(e: Expr, env: Mapping, memo: dict) -> Number:
    got = memo.get(e.uid)
    if got is not None:
        return got
    k = e.kind
    if k == RAT:
        val: Number = e.payload
    elif k in (SYM, OPAQUE):
        val = _lookup(e, env)
    elif k == ADD:
        val = sum(_eval(c, env, memo) for c in e.children)
    elif k == MUL:
        val = 1
        for c in e.children:
            val = val * _eval(c, env, memo)
    elif k == POW:
        b = _eval(e.children[0], env, memo)
        n = e.payload
        if b == 0 and n < 0:
            raise EvalDomainError("division by zero at assignment")
        try:
            val = b ** n
        except OverflowError as exc:
            raise EvalDomainError("overflow in power") from exc
    else:  # FUN
        a = _eval(e.children[0], env, memo)
        val = _eval_fun(e.payload, float(a))
    if isinstance(val, float) and (math.isinf(val) or math.isnan(val)):
        raise EvalDomainError("non-finite value")
    memo[e.uid] = val
    return val


def _eval_fun(name: str, x: float) -> float:
    try:
        if name == "exp":
            return math.exp(x)
        if name == "log":
            if x <= 0.0:
                raise EvalDomainError("log of a non-positive value")
            return math.log(x)
        if name == "sin":
            return math.sin(x)
        if name == "cos":
            return math.cos(x)
        if x < 0.0:
            raise EvalDomainError("sqrt of a negative value")
        return math.sqrt(x)
    except OverflowError as exc:
        raise EvalDomainError("overflow in elementary function") from exc


def magnitude_estimate(e: Expr, env: Mapping, memo: dict | None = None) -> float:
    """Upper-bound-flavoured magnitude of ``e`` at an assignment.

    Recursively sums absolute values over sums and multiplies them over
    products, which captures the size of the terms that may cancel in
    ``e`` itself.  Used by the zero test to turn the relative float
    tolerance into an absolute one.
    """
    if memo is None:
        memo = {}
    got = memo.get(e.uid)
    if got is not None:
        return got
    k = e.kind
    if k == RAT:
        val = abs(float(e.payload))
    elif k in (SYM, OPAQUE):
        val = abs(float(_lookup(e, env)))
    elif k == ADD:
        val = sum(magnitude_estimate(c, env, memo) for c in e.children)
    elif k == MUL:
        val = 1.0
        for c in e.children:
            val *= magnitude_estimate(c, env, memo)
    elif k == POW:
        b = magnitude_estimate(e.children[0], env, memo)
        n = e.payload
        if b == 0.0 and n < 0:
            raise EvalDomainError("division by zero at assignment")
        try:
            val = b ** n
        except OverflowError as exc:
            raise EvalDomainError("overflow in power") from exc
    else:
        a = _eval(e.children[0], env, {})
        val = abs(_eval_fun(e.payload, float(a)))
    if math.isinf(val) or math.isnan(val):
        raise EvalDomainError("non-finite magnitude")
    memo[e.uid] = val
    return val


def free_symbols(e: Expr) -> tuple[Expr, ...]:
    """All coordinate and opaque symbols occurring in ``e``, in canonical order."""
    seen: dict[Expr, None] = {}
    stack = [e]
    visited: set[int] = set()
    while stack:
        n = stack.pop()
        if n.uid in visited:
            continue
        visited.add(n.uid)
        if n.kind in (SYM, OPAQUE):
            seen[n] = None
        else:
            stack.extend(n.children)
    return tuple(sorted(seen, key=lambda s: s.key))


def expand(e: Expr) -> Expr:
    """Fully distribute products and positive integer powers over sums.

    Canonical form deliberately leaves products of sums alone; expansion
    is the explicit (potentially exponential) normalisation used when an
    identity is expected to cancel exactly.  Negative powers of sums are
    left as atoms.
    """
    memo: dict[int, Expr] = {}

    def walk(n: Expr) -> Expr:
        got = memo.get(n.uid)
        if got is not None:
            return got
        k = n.kind
        if k in (RAT, SYM, OPAQUE):
            out = n
        elif k == FUN:
            out = fun(n.payload, walk(n.children[0]))
        elif k == ADD:
            out = add_iter(walk(c) for c in n.children)
        elif k == POW:
            base = walk(n.children[0])
            m = n.payload
            if m > 1 and base.kind == ADD:
                out = base
                for _ in range(m - 1):
                    out = _distribute(out, base)
            else:
                out = pow_int(base, m)
        else:  # MUL
            out = ONE
            for c in n.children:
                out = _distribute(out, walk(c))
        memo[n.uid] = out
        return out

    return walk(e)


def _distribute(a: Expr, b: Expr) -> Expr:
    ta = a.children if a.kind == ADD else (a,)
    tb = b.children if b.kind == ADD else (b,)
    if len(ta) == 1 and len(tb) == 1:
        return mul(a, b)
    return add_iter(mul(u, v) for u in ta for v in tb)


def substitute(e: Expr, mapping: Mapping[Expr, Expr]) -> Expr:
    """Replace coordinate/opaque symbol nodes by expressions.

    Refuses to substitute a coordinate on which some opaque symbol in
    ``e`` depends: that would silently change the meaning of the opaque
    function's arguments.
    """
    coord_names = {s.payload for s in mapping if s.kind == SYM}
    for s in mapping:
        if s.kind not in (SYM, OPAQUE):
            raise SubstitutionError("substitution keys must be symbols")
    memo: dict[int, Expr] = {}

    def walk(n: Expr) -> Expr:
        got = memo.get(n.uid)
        if got is not None:
            return got
        if n in mapping:
            out = mapping[n]
        elif n.kind == OPAQUE:
            _, deps, _ = n.payload
            hit = coord_names.intersection(deps)
            if hit:
                raise SubstitutionError(
                    f"cannot substitute coordinate(s) {sorted(hit)} under opaque symbol {symbol_name(n)!r}"
                )
            out = n
        elif n.kind in (RAT, SYM):
            out = n
        elif n.kind == ADD:
            out = add_iter(walk(c) for c in n.children)
        elif n.kind == MUL:
            out = mul_iter(walk(c) for c in n.children)
        elif n.kind == POW:
            out = pow_int(walk(n.children[0]), n.payload)
        else:
            out = fun(n.payload, walk(n.children[0]))
        memo[n.uid] = out
        return out

    return walk(e)


# ---------------------------------------------------------------------------
# Printing.  The output is valid input for paraweb.parser and printing a
# canonical expression then reparsing it is a fixed point.

def to_string(e: Expr) -> str:
    k = e.kind
    if k == RAT:
        v = e.payload
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if k == SYM:
        return e.payload
    if k == OPAQUE:
        return symbol_name(e)
    if k == FUN:
        return f"{e.payload}({to_string(e.children[0])})"
    if k == POW:
        n = e.payload
        base = _atom_string(e.children[0])
        if n > 0:
            return f"{base}^{n}"
        # a bare negative power prints as a quotient
        return f"1/{base}" if n == -1 else f"1/{base}^{-n}"
    if k == MUL:
        s, body = _signed_product_string(e)
        return "-" + body if s < 0 else body
    # ADD
    parts: list[str] = []
    for t in e.children:
        s, body = _signed_term_string(t)
        if not parts:
            parts.append("-" + body if s < 0 else body)
        else:
            parts.append((" - " if s < 0 else " + ") + body)
    return "".join(parts)


def _atom_string(e: Expr) -> str:
    s = to_string(e)
    if e.kind in (ADD, MUL) or (e.kind == RAT and (e.payload < 0 or e.payload.denominator != 1)):
        return "(" + s + ")"
    if e.kind == POW:
        return "(" + s + ")"
    return s


def _signed_term_string(e: Expr) -> tuple[int, str]:
    if e.kind == RAT:
        v = e.payload
        body = str(abs(v.numerator)) if v.denominator == 1 else f"{abs(v.numerator)}/{v.denominator}"
        return (-1 if v < 0 else 1), body
    if e.kind == MUL:
        return _signed_product_string(e)
    return 1, to_string(e)


def _signed_product_string(e: Expr) -> tuple[int, str]:
    coeff = Fraction(1)
    num: list[str] = []
    den: list[str] = []
    den_count = 0
    for c in e.children:
        if c.kind == RAT:
            coeff *= c.payload
        elif c.kind == POW and c.payload < 0:
            n = -c.payload
            b = _atom_string(c.children[0])
            den.append(b if n == 1 else f"{b}^{n}")
            den_count += 1
        else:
            num.append(_atom_string(c) if c.kind == ADD else to_string(c))
    sign = -1 if coeff < 0 else 1
    coeff = abs(coeff)
    if coeff.numerator != 1 or not num:
        num.insert(0, str(coeff.numerator))
    if coeff.denominator != 1:
        den.insert(0, str(coeff.denominator))
        den_count += 1
    body = "*".join(num)
    if den:
        den_body = "*".join(den)
        if den_count > 1:
            den_body = "(" + den_body + ")"
        body = f"{body}/{den_body}"
    return sign, body
