"""Vector fields, differential forms and the total derivative on jet space.

Fields and forms are sparse coefficient maps over a frame of coordinate
directions; all coefficients are canonical expressions.  On the jet space
of an ODE of order k+1 the frame is (t, x0, ..., xk); on the coordinate
space of a web it is (x0, ..., xk).  Everything here is pure and
frame-agnostic: the geometry-specific normalisations live downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .expr import (
    Expr,
    ZERO,
    add_iter,
    differentiate,
    div,
    mul,
    pow_int,
    rational,
    sub,
    sym,
)
from .parser import Context, parse_expr
from .zerotest import DEFAULT_TESTER, Verdict, ZeroTester

__all__ = [
    "FrameError",
    "SingularFrameError",
    "VectorField",
    "OneForm",
    "TwoForm",
    "ThreeForm",
    "OdeProblem",
    "ScalingRule",
    "total_derivative_field",
    "lie_bracket",
    "lie_derivative_oneform",
    "differential",
    "exterior_derivative",
    "wedge3",
    "dual_coframe",
]


class FrameError(ValueError):
    pass


class SingularFrameError(ValueError):
    """No generically invertible pivot could be found while inverting a frame."""


def _clean(comps: dict) -> dict:
    return {k: v for k, v in comps.items() if v is not ZERO}


@dataclass(frozen=True)
class VectorField:
    """Sparse vector field: coordinate name -> coefficient expression."""

    frame: tuple[str, ...]
    comps: dict[str, Expr]

    def __post_init__(self):
        object.__setattr__(self, "comps", _clean(self.comps))
        for c in self.comps:
            if c not in self.frame:
                raise FrameError(f"component {c!r} outside frame")

    def comp(self, c: str) -> Expr:
        return self.comps.get(c, ZERO)

    def apply(self, e: Expr) -> Expr:
        """Directional derivative of a scalar."""
        return add_iter(mul(v, differentiate(e, c)) for c, v in self.comps.items())

    def plus(self, other: "VectorField") -> "VectorField":
        self._check(other)
        keys = set(self.comps) | set(other.comps)
        return VectorField(self.frame, {c: self.comp(c) + other.comp(c) for c in keys})

    def scaled(self, s: Expr) -> "VectorField":
        return VectorField(self.frame, {c: mul(s, v) for c, v in self.comps.items()})

    def is_zero_field(self, zero: ZeroTester = DEFAULT_TESTER) -> bool:
        return all(zero.verdict(v) is Verdict.ZERO for v in self.comps.values())

    def _check(self, other):
        if self.frame != other.frame:
            raise FrameError("vector fields live over different frames")


@dataclass(frozen=True)
class OneForm:
    frame: tuple[str, ...]
    comps: dict[str, Expr]

    def __post_init__(self):
        object.__setattr__(self, "comps", _clean(self.comps))
        for c in self.comps:
            if c not in self.frame:
                raise FrameError(f"component {c!r} outside frame")

    def comp(self, c: str) -> Expr:
        return self.comps.get(c, ZERO)

    def __call__(self, v: VectorField) -> Expr:
        return add_iter(mul(w, v.comp(c)) for c, w in self.comps.items())

    def plus(self, other: "OneForm") -> "OneForm":
        keys = set(self.comps) | set(other.comps)
        return OneForm(self.frame, {c: self.comp(c) + other.comp(c) for c in keys})

    def scaled(self, s: Expr) -> "OneForm":
        return OneForm(self.frame, {c: mul(s, v) for c, v in self.comps.items()})


@dataclass(frozen=True)
class TwoForm:
    """Coefficients stored for ordered index pairs only."""

    frame: tuple[str, ...]
    comps: dict[tuple[str, str], Expr]

    def __post_init__(self):
        object.__setattr__(self, "comps", _clean(self.comps))
        order = {c: i for i, c in enumerate(self.frame)}
        for u, v in self.comps:
            if order[u] >= order[v]:
                raise FrameError("two-form keys must be strictly ordered pairs")

    def comp(self, u: str, v: str) -> Expr:
        if u == v:
            return ZERO
        order = self.frame.index
        if order(u) < order(v):
            return self.comps.get((u, v), ZERO)
        return mul(rational(-1), self.comps.get((v, u), ZERO))

    def __call__(self, a: VectorField, b: VectorField) -> Expr:
        terms = []
        for (u, v), w in self.comps.items():
            terms.append(mul(w, sub(mul(a.comp(u), b.comp(v)), mul(a.comp(v), b.comp(u)))))
        return add_iter(terms)


@dataclass(frozen=True)
class ThreeForm:
    frame: tuple[str, ...]
    comps: dict[tuple[str, str, str], Expr]

    def __post_init__(self):
        object.__setattr__(self, "comps", _clean(self.comps))

    def comp(self, u: str, v: str, w: str) -> Expr:
        return self.comps.get((u, v, w), ZERO)


# ---------------------------------------------------------------------------
# ODE problems on jet space

@dataclass(frozen=True)
class OdeProblem:
    """An ODE x^(k+1) = F(t, x, x', ..., x^(k)) presented on the k-jet space.

    ``rhs`` is a canonical expression; an undetermined right-hand side is
    simply the bare opaque symbol F.
    """

    order: int
    context: Context
    rhs: Expr

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("ODE order must be at least 2")

    @property
    def k(self) -> int:
        return self.order - 1

    @property
    def coords(self) -> tuple[str, ...]:
        return self.context.coords

    @property
    def x_coords(self) -> tuple[str, ...]:
        return self.context.coords[1:]

    @staticmethod
    def jet_context(order: int, extra_functions: dict[str, tuple[str, ...]] | None = None) -> Context:
        if order < 2:
            raise ValueError("ODE order must be at least 2")
        if order > 10:
            raise ValueError("orders beyond 10 exceed the coordinate alphabet x0..x9")
        coords = ("t",) + tuple(f"x{i}" for i in range(order))
        functions = {"F": coords}
        if extra_functions:
            functions.update(extra_functions)
        return Context(coords=coords, functions=functions)

    @classmethod
    def abstract(cls, order: int) -> "OdeProblem":
        ctx = cls.jet_context(order)
        return cls(order, ctx, ctx.opaque_symbol("F"))

    @classmethod
    def from_rhs(cls, order: int, rhs: str | Expr) -> "OdeProblem":
        ctx = cls.jet_context(order)
        if isinstance(rhs, str):
            rhs = ctx.opaque_symbol("F") if rhs.strip() == "abstract" else parse_expr(rhs, ctx)
        return cls(order, ctx, rhs)


def total_derivative_field(ode: OdeProblem) -> VectorField:
    """The total derivative X = d/dt + x1 d/dx0 + ... + F d/dxk."""
    k = ode.k
    comps: dict[str, Expr] = {"t": rational(1)}
    for i in range(k):
        comps[f"x{i}"] = sym(f"x{i + 1}")
    comps[f"x{k}"] = ode.rhs
    return VectorField(ode.coords, comps)


@dataclass(frozen=True)
class ScalingRule:
    """Normalized total derivatives of the section scaling function.

    The function g scaling the vertical direction satisfies
    X(g) = g * dF/dxk / (k+1).  g itself is never constructed: writing
    X^j(g) = G_j * g, the cofactors obey G_0 = 1 and
    G_{j+1} = X(G_j) + G_j * multiplier, and every downstream formula is
    phrased in the G_j alone (results are "up to the factor g").
    """

    ode: OdeProblem

    @property
    def multiplier(self) -> Expr:
        dkF = differentiate(self.ode.rhs, f"x{self.ode.k}")
        return div(dkF, rational(self.ode.k + 1))

    def cofactors(self, count: int) -> list[Expr]:
        """[G_0, ..., G_count]."""
        x = total_derivative_field(self.ode)
        m = self.multiplier
        out = [rational(1)]
        for _ in range(count):
            g = out[-1]
            out.append(x.apply(g) + mul(g, m))
        return out


# ---------------------------------------------------------------------------
# Brackets and derivatives of forms

def lie_bracket(a: VectorField, b: VectorField) -> VectorField:
    """[a, b], coefficient-wise a(b^i) - b(a^i)."""
    a._check(b)
    keys = set(a.comps) | set(b.comps)
    comps = {c: sub(a.apply(b.comp(c)), b.apply(a.comp(c))) for c in keys}
    return VectorField(a.frame, comps)


def lie_derivative_oneform(x: VectorField, w: OneForm) -> OneForm:
    """(L_x w)_c = x(w_c) + sum_d w_d * d(x^d)/dc."""
    if x.frame != w.frame:
        raise FrameError("field and form frames differ")
    comps = {}
    for c in x.frame:
        terms = [x.apply(w.comp(c))]
        for d, xd in x.comps.items():
            wd = w.comp(d)
            if wd is not ZERO:
                terms.append(mul(wd, differentiate(xd, c)))
        comps[c] = add_iter(terms)
    return OneForm(x.frame, comps)


def differential(e: Expr, frame: tuple[str, ...]) -> OneForm:
    return OneForm(frame, {c: differentiate(e, c) for c in frame})


def exterior_derivative(w: OneForm) -> TwoForm:
    frame = w.frame
    comps = {}
    for i, u in enumerate(frame):
        for v in frame[i + 1:]:
            comps[(u, v)] = sub(differentiate(w.comp(v), u), differentiate(w.comp(u), v))
    return TwoForm(frame, comps)


def wedge3(w: OneForm, eta: TwoForm) -> ThreeForm:
    """Totally antisymmetric coefficients of w wedge eta."""
    if w.frame != eta.frame:
        raise FrameError("form frames differ")
    frame = w.frame
    comps = {}
    n = len(frame)
    for i in range(n):
        for j in range(i + 1, n):
            for l in range(j + 1, n):
                u, v, z = frame[i], frame[j], frame[l]
                comps[(u, v, z)] = add_iter(
                    [
                        mul(w.comp(u), eta.comp(v, z)),
                        mul(rational(-1), w.comp(v), eta.comp(u, z)),
                        mul(w.comp(z), eta.comp(u, v)),
                    ]
                )
    return ThreeForm(frame, comps)


# ---------------------------------------------------------------------------
# Dual coframes

def _probably_nonzero(e: Expr, zero: ZeroTester) -> bool:
    if e is ZERO:
        return False
    if e.kind == 0:  # rational constant
        return True
    return ZeroTester(trials=2, tolerance=zero.tolerance, seed=zero.seed).verdict(e) is Verdict.NONZERO


def dual_coframe(
    fields: Sequence[VectorField],
    coords: Sequence[str] | None = None,
    zero: ZeroTester = DEFAULT_TESTER,
) -> list[OneForm]:
    """One-forms theta_i with theta_i(fields[j]) = delta_ij.

    ``coords`` restricts the coframe to a sub-frame (for jet chains the
    span of dx0..dxk: the fields must have no components outside it).
    Pivots are chosen by a cheap randomized nonzero test, preferring exact
    rational entries; if no usable pivot exists the matrix is reported
    singular.
    """
    if not fields:
        raise ValueError("empty frame")
    frame = fields[0].frame
    cols = tuple(coords) if coords is not None else frame
    n = len(fields)
    if len(cols) != n:
        raise FrameError("need exactly as many coordinates as fields")
    for f in fields:
        for c in f.comps:
            if c not in cols:
                raise FrameError(f"field has a component on {c!r} outside the coframe span")
    # Gauss-Jordan on [A | I] where A[j][c] = fields[j]^c.
    a = [[f.comp(c) for c in cols] for f in fields]
    inv = [[rational(1) if i == j else ZERO for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = None
        for row in range(col, n):
            if a[row][col].kind == 0 and a[row][col] is not ZERO:
                piv = row
                break
        if piv is None:
            for row in range(col, n):
                if _probably_nonzero(a[row][col], zero):
                    piv = row
                    break
        if piv is None:
            raise SingularFrameError("component matrix is singular at all sample points")
        a[col], a[piv] = a[piv], a[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        scale = pow_int(a[col][col], -1)
        a[col] = [mul(scale, v) for v in a[col]]
        inv[col] = [mul(scale, v) for v in inv[col]]
        for row in range(n):
            if row == col or a[row][col] is ZERO:
                continue
            factor = a[row][col]
            a[row] = [sub(v, mul(factor, p)) for v, p in zip(a[row], a[col])]
            inv[row] = [sub(v, mul(factor, p)) for v, p in zip(inv[row], inv[col])]
    # Theta_i,c solves sum_c Theta_i,c A_j,c = delta_ij, i.e. Theta = (A^-1)^T read
    # column-wise: Theta_i,c = (A^-1)_{c,i}.
    thetas = []
    for i in range(n):
        comps = {cols[c]: inv[c][i] for c in range(n)}
        thetas.append(OneForm(frame, comps))
    return thetas
