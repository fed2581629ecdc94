"""Problem specifications and deterministic JSON reports.

A problem is a single JSON object, either an ODE or a web candidate;
batches carry {"problems": [...]}.  Reports echo the problem (with
defaulted options filled in), list named residuals with verdicts and
sample counts, and render every derived object in the same grammar the
parser accepts, so reports double as regression fixtures.  Identical
(problem, seed) pairs produce byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .expr import Expr, mul, rational, sub, to_string
from .invariants import (
    ExtractionError,
    Residual,
    beta_coefficient,
    cartan_residuals,
    coordinate_cartan_order2,
    coordinate_cartan_order3,
    coordinate_wunschmann_order3,
    curvature_chain,
    gamma_k,
    wunschmann_residuals,
)
from .jet import OdeProblem, total_derivative_field
from .webs import (
    DegenerateWebError,
    WebError,
    bryant_forms,
    canonical_connection,
    conformal_metric,
    eq1_residuals,
    flatness_verdict,
    hirota_residuals,
    lax_commutator_residuals,
    make_web,
    pencil_affinity_exact,
    ricci_null_residuals,
    schouten_residuals,
    weyl_form_from_connection,
    zakharevich_verdict,
)
from .zerotest import Verdict, ZeroTester

__all__ = [
    "InputError",
    "ProblemSpec",
    "analyze_ode",
    "analyze_web",
    "analyze_problem",
    "analyze_batch",
    "dumps_report",
]

CLASS_TOTALLY_GEODESIC = "totally-geodesic paraconformal"
CLASS_WUNSCHMANN_ONLY = "Wünschmann only"
CLASS_NO_STRUCTURE = "no structure"
CLASS_NECESSARY_ONLY = "necessary-conditions-only (order ≥ 5)"


class InputError(ValueError):
    pass


def _parse_fraction(text: Any) -> Fraction:
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, str):
        try:
            return Fraction(text.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"bad rational literal {text!r}") from exc
    raise InputError(f"rationals must be strings like 'p/q', got {text!r}")


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class ProblemSpec:
    """Validated problem: an ODE (order, rhs) or a web (k, w, t_params)."""

    kind: str
    order: int | None = None
    rhs: str | None = None
    k: int | None = None
    w: str | None = None
    t_params: tuple[Fraction, ...] | None = None
    trials: int = 8
    tolerance: float = 1e-9
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict, defaults: dict | None = None) -> "ProblemSpec":
        if not isinstance(raw, dict):
            raise InputError("problem entries must be objects")
        kind = raw.get("kind")
        if kind not in ("ode", "web"):
            raise InputError(f"kind must be 'ode' or 'web', got {kind!r}")
        options = dict(defaults or {})
        options.update(raw.get("options") or {})
        trials = int(options.get("trials", 8))
        tolerance = float(options.get("tolerance", 1e-9))
        seed = int(options.get("seed", 0))
        if trials < 1:
            raise InputError("trials must be at least 1")
        if kind == "ode":
            order = raw.get("order")
            rhs = raw.get("rhs")
            if not isinstance(order, int) or order < 2:
                raise InputError("ode problems need an integer order >= 2")
            if order > 10:
                raise InputError("orders beyond 10 are not supported")
            if not isinstance(rhs, str):
                raise InputError("ode problems need an rhs expression string")
            return cls(kind, order=order, rhs=rhs, trials=trials, tolerance=tolerance, seed=seed)
        k = raw.get("k")
        w = raw.get("w")
        if not isinstance(k, int) or k < 1 or k > 8:
            raise InputError("web problems need an integer k in 1..8")
        if not isinstance(w, str):
            raise InputError("web problems need a w expression string")
        t_raw = raw.get("t_params")
        if t_raw is None:
            t_params = tuple(Fraction(n) for n in range(k + 2))
        else:
            if not isinstance(t_raw, list) or len(t_raw) != k + 2:
                raise InputError(f"t_params must list {k + 2} rationals")
            t_params = tuple(_parse_fraction(t) for t in t_raw)
        if len(set(t_params)) != len(t_params):
            raise InputError("t_params must be pairwise distinct")
        return cls(kind, k=k, w=w, t_params=t_params, trials=trials, tolerance=tolerance, seed=seed)

    def tester(self) -> ZeroTester:
        return ZeroTester(trials=self.trials, tolerance=self.tolerance, seed=self.seed)

    def echo(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "options": {
            "seed": self.seed, "tolerance": self.tolerance, "trials": self.trials}}
        if self.kind == "ode":
            out["order"] = self.order
            out["rhs"] = self.rhs
        else:
            out["k"] = self.k
            out["w"] = self.w
            out["t_params"] = [_frac_str(t) for t in self.t_params]
        return out


def _residual_entry(r: Residual) -> dict:
    return {
        "name": r.name,
        "expression": to_string(r.expr),
        "verdict": r.verdict.value,
        "samples": r.samples,
        "note": r.note,
    }


def _verdict_entry(name: str, expr: Expr, verdict: Verdict, samples: int = 0, note=None) -> dict:
    return {
        "name": name,
        "expression": to_string(expr),
        "verdict": verdict.value,
        "samples": samples,
        "note": note,
    }


def analyze_ode(spec: ProblemSpec) -> dict:
    """Run the invariant pipeline on an ODE problem."""
    zero = spec.tester()
    try:
        ode = OdeProblem.from_rhs(spec.order, spec.rhs)
    except Exception as exc:
        raise InputError(f"bad rhs: {exc}") from exc
    chain = curvature_chain(ode, zero)
    wun = wunschmann_residuals(ode, chain, zero)
    car = cartan_residuals(ode, chain, zero)
    residuals = list(wun) + list(car)

    abstract = spec.rhs.strip() == "abstract"
    if abstract and ode.order == 2:
        x = total_derivative_field(ode)
        v, v1 = chain.fields[0], chain.fields[1]
        engine = rational(4) * v1.apply(chain.curvatures[0]) + v.apply(x.apply(chain.curvatures[0]))
        ident = sub(engine, mul(rational(3), coordinate_cartan_order2(ode)))
        verdict, samples = zero.verdict_stats(ident)
        residuals.append(Residual("identity[cartan-coordinate]", ident, verdict, samples,
                                  note="engine invariant minus 3x classical coordinate form"))
    if abstract and ode.order == 3:
        x = total_derivative_field(ode)
        v, v1 = chain.fields[0], chain.fields[1]
        k0, k1 = chain.curvatures
        wident = sub(k0 + mul(rational(Fraction(1, 2)), x.apply(k1)), coordinate_wunschmann_order3(ode))
        verdict, samples = zero.verdict_stats(wident)
        residuals.append(Residual("identity[wunschmann-coordinate]", wident, verdict, samples))
        cform = mul(rational(Fraction(-3, 2)), sub(v1.apply(k1), v.apply(k0)))
        cident = sub(cform, coordinate_cartan_order3(ode))
        verdict, samples = zero.verdict_stats(cident)
        residuals.append(Residual("identity[cartan-coordinate]", cident, verdict, samples))

    wun_ok = all(r.is_zero for r in wun)
    car_ok = all(r.is_zero for r in car)
    if ode.order >= 5:
        classification = CLASS_NECESSARY_ONLY if (wun_ok and car_ok) else CLASS_NO_STRUCTURE
    elif wun_ok and car_ok:
        classification = CLASS_TOTALLY_GEODESIC
    elif wun_ok and ode.order >= 3:
        classification = CLASS_WUNSCHMANN_ONLY
    else:
        classification = CLASS_NO_STRUCTURE

    derived: dict[str, Any] = {
        "curvatures": [to_string(k) for k in chain.curvatures],
        "gamma_k": _frac_str(gamma_k(ode.k)),
        "extraction_residuals": {
            "coefficient_of_v_k": to_string(chain.residual_vk),
            "dt_component": to_string(chain.residual_dt),
        },
    }
    if ode.order >= 4 and wun_ok and car_ok:
        b, beta, _theta = beta_coefficient(ode, chain, zero)
        derived["beta_b"] = to_string(b)
        derived["beta_form"] = {c: to_string(v) for c, v in sorted(beta.comps.items())}

    return {
        "problem": spec.echo(),
        "status": "ok",
        "classification": classification,
        "residuals": [_residual_entry(r) for r in residuals],
        "derived": derived,
    }


def analyze_web(spec: ProblemSpec) -> dict:
    """Run the web pipeline: Hirota/Lax/Zakharevich verdicts, then (for
    solutions) connection data, flatness, Ricci-null and Jacobi samples."""
    zero = spec.tester()
    try:
        web = make_web(spec.k, spec.w, spec.t_params, zero)
    except DegenerateWebError as exc:
        raise InputError(str(exc)) from exc
    except WebError as exc:
        raise InputError(str(exc)) from exc
    except Exception as exc:
        raise InputError(f"bad w: {exc}") from exc

    residuals: list[dict] = []
    hr = hirota_residuals(web, zero)
    for key in sorted(hr):
        e, v = hr[key]
        residuals.append(_verdict_entry(f"hirota[{key[0]},{key[1]},{key[2]}]", e, v))
    er = eq1_residuals(web, zero)
    for key in sorted(er):
        e, v = er[key]
        residuals.append(_verdict_entry(f"hierarchy[{key[0]},{key[1]}]", e, v))
    lr = lax_commutator_residuals(web, zero)
    for key in sorted(lr):
        i, j, c, deg = key
        e, v = lr[key]
        residuals.append(_verdict_entry(f"lax[{i},{j};{c};t^{deg}]", e, v))

    hirota_ok = all(v is Verdict.ZERO for _, v in hr.values())
    lax_ok = all(v is Verdict.ZERO for _, v in lr.values())
    zak = zakharevich_verdict(web, None, zero)
    verdicts: dict[str, Any] = {
        "hirota": hirota_ok,
        "hierarchy": all(v is Verdict.ZERO for _, v in er.values()),
        "lax": lax_ok,
        "zakharevich": zak,
        "pencil_affine": pencil_affinity_exact(web),
    }
    derived: dict[str, Any] = {
        "a_constants": [_frac_str(web.a_i(i)) for i in range(1, web.k + 1)],
        "classification": "veronese web" if hirota_ok else "not a web",
    }

    if hirota_ok:
        conn = canonical_connection(web, zero)
        if web.k > 2:
            verdicts["flat"] = flatness_verdict(web, zero)
        if conn.kind == "diagonal":
            derived["connection"] = {
                "type": "diagonal",
                "alpha": {c: to_string(v) for c, v in sorted(conn.alpha.comps.items())},
            }
        else:
            g = conformal_metric(web)
            phi = weyl_form_from_connection(web, conn, g)
            derived["connection"] = {
                "type": "weyl",
                "f": to_string(conn.f),
                "alpha_tilde": {c: to_string(v) for c, v in sorted(conn.alpha_tilde.comps.items())},
                "metric": {f"{c},{d}": to_string(v) for (c, d), v in sorted(g.items())},
                "weyl_form": {c: to_string(v) for c, v in sorted(phi.comps.items())},
            }
        if web.k == 3:
            bf = bryant_forms(web, zero)
            derived["bryant"] = {
                name: {c: to_string(v) for c, v in sorted(form.comps.items())}
                for name, form in (
                    ("beta0", bf.beta0),
                    ("beta1", bf.beta1),
                    ("beta2", bf.beta2),
                    ("alpha", bf.alpha),
                )
            }
        ric = ricci_null_residuals(web, conn, seed=spec.seed)
        derived["ricci_null_max"] = max(ric)
        jac: list[float] = []
        for tv in (Fraction(1, 2), Fraction(spec.k + 3), Fraction(-3, 2)):
            jac.extend(schouten_residuals(web, tv, point_samples=4, seed=spec.seed))
        derived["jacobi_max"] = max(jac) if jac else 0.0

    return {
        "problem": spec.echo(),
        "status": "ok",
        "residuals": residuals,
        "verdicts": verdicts,
        "derived": derived,
    }


def analyze_problem(spec: ProblemSpec) -> dict:
    if spec.kind == "ode":
        return analyze_ode(spec)
    return analyze_web(spec)


def analyze_batch(document: dict, defaults: dict | None = None) -> tuple[dict, int]:
    """Analyze {"problems": [...]} (or a bare problem object).

    Returns (report document, exit code): 0 clean, 1 if any problem had
    an input error, 2 on an internal extraction failure.
    """
    if "problems" in document:
        raw_problems = document["problems"]
        if not isinstance(raw_problems, list):
            raise InputError("'problems' must be a list")
    else:
        raw_problems = [document]
    reports = []
    code = 0
    for raw in raw_problems:
        try:
            spec = ProblemSpec.from_dict(raw, defaults)
            reports.append(analyze_problem(spec))
        except InputError as exc:
            reports.append({"problem": raw, "status": "error", "error": str(exc)})
            code = max(code, 1)
        except ExtractionError as exc:
            reports.append({"problem": raw, "status": "error", "error": f"extraction failure: {exc}"})
            code = 2
    return {"reports": reports}, code


def dumps_report(document: dict) -> str:
    return json.dumps(document, sort_keys=True, ensure_ascii=False, indent=2) + "\n"
