"""Shared fixtures: the seeded web corpus and numeric helpers."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from paraweb.expr import eval_numeric, free_symbols
from paraweb.webs import VeroneseWeb
from paraweb.zerotest import ZeroTester

# Non-flat exact Hirota solutions.  With the default spectral constants
# (0, 1, ..., k+1) the two-exponential ansatz
#     w = exp(x1 + ... + xk) + exp(x0 + m1 x1 + ... + mk xk)
# solves the Hirota system iff a~_i (m_i - 1) is the same for all i,
# where a~_i = t_i / (t_{k+1} - t_i); the exponent vectors below use the
# smallest integer solutions.  They are genuinely non-flat: the second
# exponent is not supported on a single coordinate, so grad(w) is not
# proportional to a vector of single-variable functions.
NONFLAT_W = {
    2: "exp(x1+x2) + exp(x0+5*x1+2*x2)",
    3: "exp(x1+x2+x3) + exp(x0+10*x1+4*x2+2*x3)",
    4: "exp(x1+x2+x3+x4) + exp(x0+49*x1+19*x2+9*x3+4*x4)",
}

SEPARABLE_W = {
    2: ["x0+x1+x2", "x0 + x1^2/2 + x2"],
    3: ["x0+x1+x2+x3", "2*x0 + x1 + x2^2/2 + x3"],
    4: ["x0+x1+x2+x3+x4"],
}


def random_polynomial_w(k: int, rng: random.Random) -> str:
    """A random inhomogeneous quadratic with a full linear part.

    The linear part keeps every dw/dx_i generically nonzero, and at
    least one off-diagonal quadratic term guarantees the function is not
    additively separable (generic cross terms never satisfy the Hirota
    system).
    """
    terms = [f"x{i}" for i in range(k + 1)]
    i = rng.randint(0, k - 1)
    j = rng.randint(i + 1, k)
    terms.append(f"{rng.randint(1, 3)}*x{i}*x{j}")
    for _ in range(rng.randint(1, 3)):
        i = rng.randint(0, k)
        j = rng.randint(0, k)
        terms.append(f"{rng.randint(1, 3)}*x{i}*x{j}")
    return " + ".join(terms)


def seeded_corpus() -> list[tuple[int, str, str]]:
    """(k, w, tag) with tag in {separable, nonflat, random}; 20 random
    polynomial entries plus the seeded solutions."""
    rng = random.Random(20240811)
    corpus: list[tuple[int, str, str]] = []
    for k, ws in SEPARABLE_W.items():
        for w in ws:
            corpus.append((k, w, "separable"))
    for k, w in NONFLAT_W.items():
        corpus.append((k, w, "nonflat"))
    for k, count in ((2, 7), (3, 7), (4, 6)):
        for _ in range(count):
            corpus.append((k, random_polynomial_w(k, rng), "random"))
    return corpus


@pytest.fixture(scope="session")
def corpus():
    return seeded_corpus()


@pytest.fixture(scope="session")
def tester():
    return ZeroTester()


def sample_point(web: VeroneseWeb, exprs, rng: random.Random, scale: int = 4):
    """A pole-free random rational assignment for all symbols in exprs."""
    symbols = set()
    for e in exprs:
        symbols.update(free_symbols(e))
    symbols = sorted(symbols, key=lambda s: s.key)
    for _ in range(80):
        env = {s: Fraction(rng.randint(-scale, scale), rng.randint(scale, 3 * scale)) for s in symbols}
        try:
            for e in exprs:
                eval_numeric(e, env)
        except Exception:
            continue
        return env
    raise RuntimeError("could not find a pole-free sample point")
