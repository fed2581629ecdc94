"""Veronese webs: Hirota/Lax equivalence, connections, metric data,
Bryant forms, Ricci and bi-Hamiltonian checks.

Numeric oracles (finite-difference curvature, the decomposable-bivector
expansion of the Schouten bracket) are implemented here, independently
of the library code paths they check.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

from paraweb.expr import (
    ZERO,
    add,
    add_iter,
    differentiate,
    div,
    eval_numeric,
    mul,
    neg,
    pow_int,
    rational,
    sub,
    sym,
)
from paraweb.jet import VectorField, exterior_derivative, lie_bracket, wedge3
from paraweb.webs import (
    DegenerateWebError,
    NotAWebError,
    WebError,
    bryant_forms,
    bryant_torsion_residuals,
    canonical_connection,
    conformal_metric,
    eq1_residuals,
    flatness_verdict,
    hirota_residuals,
    is_hirota_solution,
    lax_commutator_residuals,
    lax_commutes,
    lax_tuple,
    make_web,
    null_curve,
    omega_at,
    pencil_affinity_exact,
    poisson_pencil_components,
    ricci_null_residuals,
    ricci_tensor,
    schouten_residuals,
    torsion,
    weyl_compatibility_residuals,
    weyl_form_from_connection,
    zakharevich_verdict,
)
from paraweb.zerotest import Verdict, ZeroTester

from conftest import NONFLAT_W, sample_point

ZT = ZeroTester()


class TestConstruction:
    def test_default_spectral_constants(self):
        web = make_web(2, "x0+x1+x2")
        assert web.t_params == (0, 1, 2, 3)

    def test_distinctness_enforced(self):
        with pytest.raises(WebError):
            make_web(2, "x0+x1+x2", t_params=(0, 1, 1, 3))

    def test_degenerate_presentation_rejected(self):
        with pytest.raises(DegenerateWebError):
            make_web(3, "x0*x1")

    def test_cyclic_coefficient_identity(self):
        web = make_web(4, "x0+x1+x2+x3+x4")
        for (i, j, l) in web.triples():
            assert web.a(i, j, l) + web.a(j, l, i) + web.a(l, i, j) == 0


class TestOmega:
    def test_closed_form_example(self):
        # w = x0+x1+x2, t-params (0,1,2,3):
        # omega(t) = 3(t-1)(t-2) dx0 + 2t(t-2) dx1 + t(t-1) dx2
        web = make_web(2, "x0+x1+x2")
        for tv in (Fraction(5), Fraction(-1), Fraction(1, 2)):
            om = omega_at(web, tv)
            assert om.comp("x0") is rational(3 * (tv - 1) * (tv - 2))
            assert om.comp("x1") is rational(2 * tv * (tv - 2))
            assert om.comp("x2") is rational(tv * (tv - 1))

    def test_spectral_value_collapses_to_coordinate_form(self):
        web = make_web(3, NONFLAT_W[3])
        om = omega_at(web, web.t_params[1])
        assert set(om.comps) == {"x1"}

    def test_top_spectral_value_proportional_to_dw(self):
        web = make_web(2, "exp(x1+x2) + exp(x0+5*x1+2*x2)")
        om = omega_at(web, web.t_params[3])
        # all components share the constant factor prod(t3 - tj)
        c = rational(Fraction(3 * 2 * 1))
        for i in range(3):
            assert sub(om.comp(f"x{i}"), mul(c, web.dw(i))) is ZERO

    def test_separable_pencil_integrable(self):
        web = make_web(2, "x0 + x1^2/2 + x2")
        for tv in (Fraction(4), Fraction(-2)):
            om = omega_at(web, tv)
            three = wedge3(om, exterior_derivative(om))
            assert all(v is ZERO for v in three.comps.values())


class TestNullCurve:
    def test_duality_table(self):
        # omega^(i)(t)(V^(j)(t)) = 0 for i+j < k and (-1)^j k! at i+j = k
        for k, w in ((2, "x0+x1+x2"), (3, NONFLAT_W[3])):
            web = make_web(k, w)
            nc = null_curve(web)
            for tv in (Fraction(k + 3), Fraction(-1, 2)):
                for i in range(k + 1):
                    for j in range(k + 1 - i):
                        val = omega_at(web, tv, order=i)(nc.at(tv, order=j))
                        want = rational((-1) ** j * math.factorial(k)) if i + j == k else ZERO
                        assert ZT.verdict(sub(val, want)) is Verdict.ZERO

    def test_span_integrability_on_solution(self):
        # [V^(i)(t), V^(j)(t)] lies in span{V^(i), ..., V^(j)} at fixed t
        web = make_web(2, NONFLAT_W[2])
        nc = null_curve(web)
        tv = Fraction(9, 2)
        fields = [nc.at(tv, order=m) for m in range(3)]
        from paraweb.jet import dual_coframe

        thetas = dual_coframe(fields, coords=web.coords, zero=ZT)
        for i in range(3):
            for j in range(i + 1, 3):
                br = lie_bracket(fields[i], fields[j])
                for m in range(3):
                    coeff = thetas[m](br)
                    if i <= m <= j:
                        continue
                    assert ZT.verdict(coeff) is Verdict.ZERO, (i, j, m)


class TestHirotaLax:
    def test_separable_solves_exactly(self):
        web = make_web(3, "x0+x1+x2+x3")
        assert all(e is ZERO for e, _ in hirota_residuals(web, ZT).values())

    def test_product_is_not_a_solution(self):
        web = make_web(2, "x0*x1*x2 + x0 + x1 + x2")
        hr = hirota_residuals(web, ZT)
        assert any(v is Verdict.NONZERO for _, v in hr.values())

    def test_nonflat_exponential_solutions(self):
        for k, w in NONFLAT_W.items():
            web = make_web(k, w)
            assert is_hirota_solution(web, ZT), (k, w)
            assert lax_commutes(web, ZT), (k, w)

    def test_lax_tangency_is_exact(self):
        web = make_web(3, NONFLAT_W[3])
        for tv in (Fraction(11), Fraction(-3, 4)):
            om = omega_at(web, tv)
            for L in lax_tuple(web, tv):
                assert om(L) is ZERO

    def test_equivalence_on_corpus(self, corpus):
        # identical overall verdicts for the Hirota residuals, the
        # first-order hierarchy form and the Lax commutators
        for k, w, _tag in corpus:
            web = make_web(k, w)
            h = is_hirota_solution(web, ZT)
            e = all(v is Verdict.ZERO for _, v in eq1_residuals(web, ZT).values())
            l = lax_commutes(web, ZT)
            assert h == e == l, (k, w)

    def test_commutator_and_hierarchy_fail_together_pointwise(self):
        # [L_i, L_j]^{x0} = (t - t_0)(t_{k+1} - t) / (dw/dx0)^2 times the
        # hierarchy residual, so its t^2 coefficient is -residual/(dw/dx0)^2:
        # the two tests fail at exactly the same points
        web = make_web(2, "x0*x1*x2 + x0 + x1 + x2")
        lr = lax_commutator_residuals(web, ZT)
        (e1, _), = eq1_residuals(web, ZT).values()
        quad = lr[(1, 2, "x0", 2)][0]
        rel = add(mul(pow_int(web.dw(0), 2), quad), e1)
        assert ZT.verdict(rel) is Verdict.ZERO


class TestCanonicalConnection:
    def test_requires_solution(self):
        web = make_web(3, "x0*x1*x2 + x0 + x1 + x2 + x3")
        with pytest.raises(NotAWebError):
            canonical_connection(web, ZT)

    def test_k1_explicit_formulas(self):
        web = make_web(1, "x0 + x1 + x0*x1")
        conn = canonical_connection(web, ZT)
        g00 = conn.christoffel("x0", "x0", "x0")
        g11 = conn.christoffel("x1", "x1", "x1")
        want00 = sub(div(web.dw2(0, 0), web.dw(0)), div(web.dw2(0, 1), web.dw(1)))
        want11 = sub(div(web.dw2(1, 1), web.dw(1)), div(web.dw2(0, 1), web.dw(0)))
        assert ZT.verdict(sub(g00, want00)) is Verdict.ZERO
        assert ZT.verdict(sub(g11, want11)) is Verdict.ZERO
        assert conn.christoffel("x0", "x1", "x1") is ZERO
        assert conn.christoffel("x1", "x0", "x0") is ZERO

    def test_k1_preserves_null_directions(self):
        # nabla_Y V(t) proportional to V(t) for each t
        web = make_web(1, "x0 + x1 + x0*x1")
        conn = canonical_connection(web, ZT)
        nc = null_curve(web)
        for tv in (Fraction(3), Fraction(-1, 2)):
            v = nc.at(tv)
            for a in web.coords:
                comps = {}
                for c in web.coords:
                    terms = [differentiate(v.comp(c), a)]
                    for b in web.coords:
                        terms.append(mul(v.comp(b), conn.christoffel(a, b, c)))
                    comps[c] = add_iter(terms)
                nav = VectorField(web.coords, comps)
                # proportionality: nav ^ v = 0 componentwise
                cross = sub(mul(nav.comp("x0"), v.comp("x1")), mul(nav.comp("x1"), v.comp("x0")))
                assert ZT.verdict(cross) is Verdict.ZERO

    def test_flat_web_has_zero_alpha(self):
        web = make_web(3, "x0+x1+x2+x3")
        conn = canonical_connection(web, ZT)
        assert conn.alpha.comps == {}
        assert all(conn.christoffel(a, b, b) is ZERO for a in web.coords for b in web.coords)

    def test_torsion_normalisation_of_alpha(self):
        # the defining property: T(V(t), V'(t)) is proportional to V(t)
        web = make_web(3, NONFLAT_W[3])
        conn = canonical_connection(web, ZT)
        nc = null_curve(web)
        tor = torsion(conn, ZT)
        for tv in (Fraction(6), Fraction(-1, 3)):
            v, vp = nc.at(tv), nc.at(tv, order=1)
            tcomp = {c: ZERO for c in web.coords}
            for (a, b), tf in tor.items():
                factor = sub(mul(v.comp(a), vp.comp(b)), mul(v.comp(b), vp.comp(a)))
                for c, e in tf.comps.items():
                    tcomp[c] = add(tcomp[c], mul(factor, e))
            tvf = VectorField(web.coords, tcomp)
            # T(V, V') ^ V = 0: all 2x2 minors with V vanish
            for c1 in web.coords:
                for c2 in web.coords:
                    if c1 < c2:
                        minor = sub(mul(tvf.comp(c1), v.comp(c2)), mul(tvf.comp(c2), v.comp(c1)))
                        assert ZT.verdict(minor) is Verdict.ZERO

    def test_flatness_matches_separability_criterion(self):
        # d/dx_i (dw/dx_j / dw/dx_l) = 0 for i outside {j, l}
        for w, expect in (("x0+x1+x2+x3", True), (NONFLAT_W[3], False)):
            web = make_web(3, w)
            assert flatness_verdict(web, ZT) is expect
            sep = True
            for i in range(4):
                for j in range(4):
                    for l in range(4):
                        if len({i, j, l}) == 3:
                            e = differentiate(div(web.dw(j), web.dw(l)), f"x{i}")
                            if ZT.verdict(e) is not Verdict.ZERO:
                                sep = False
            assert sep is expect

    def test_flatness_requires_k_above_two(self):
        with pytest.raises(WebError):
            flatness_verdict(make_web(2, "x0+x1+x2"), ZT)

    def test_connection_family_has_no_vprime_part(self):
        # for k > 2 the canonical connection preserves each null
        # direction on the nose: nabla_Y V(t) = alpha(Y) V(t)
        web = make_web(3, NONFLAT_W[3])
        conn = canonical_connection(web, ZT)
        nc = null_curve(web)
        for tv in (Fraction(5), Fraction(-1, 2)):
            v = nc.at(tv)
            for a in web.coords:
                comps = {}
                for c in web.coords:
                    terms = [differentiate(v.comp(c), a)]
                    for b in web.coords:
                        vb = v.comp(b)
                        if vb is not ZERO:
                            terms.append(mul(vb, conn.christoffel(a, b, c)))
                    comps[c] = add_iter(terms)
                nav = VectorField(web.coords, comps)
                residual = nav.plus(v.scaled(neg(conn.alpha.comp(a))))
                assert all(ZT.verdict(e) is Verdict.ZERO for e in residual.comps.values()), (tv, a)

    def test_h_interpolation_consistency_is_checked(self):
        # the bracket function h(t) of a genuine web obeys its degree
        # bound, so construction succeeds and the connection is the same
        # from either node family
        web = make_web(4, "x0+x1+x2+x3+x4 + 0*x0")
        conn = canonical_connection(web, ZT)
        assert conn.alpha.comps == {}


class TestWeylStructure:
    def test_f_is_permutation_invariant_on_solutions(self):
        # the defining formula of the scalar f uses the index pair (0,1)
        # and (1,2); on a Hirota solution the (1,2)/(2,0) version agrees
        web = make_web(2, NONFLAT_W[2])
        t = web.t_params
        f01 = canonical_connection(web, ZT).f
        lead = Fraction(-1, 4) / ((t[3] - t[2]) * (t[1] - t[0]))
        f12 = mul(rational(lead), sub(
            div(web.dw2(1, 2), mul(web.dw(1), web.dw(2))),
            div(web.dw2(2, 0), mul(web.dw(2), web.dw(0)))))
        assert ZT.verdict(sub(f01, f12)) is Verdict.ZERO

    def test_weyl_connection_separable(self):
        web = make_web(2, "x0+x1+x2")
        conn = canonical_connection(web, ZT)
        assert ZT.verdict(conn.f) is Verdict.ZERO
        assert all(f.is_zero_field(ZT) for f in torsion(conn, ZT).values())
        res = weyl_compatibility_residuals(web, conn, zero=ZT)
        assert all(v is Verdict.ZERO for _, v in res.values())

    def test_weyl_connection_nonflat(self):
        web = make_web(2, NONFLAT_W[2])
        conn = canonical_connection(web, ZT)
        assert ZT.verdict(conn.f) is Verdict.NONZERO
        assert all(f.is_zero_field(ZT) for f in torsion(conn, ZT).values())
        res = weyl_compatibility_residuals(web, conn, zero=ZT)
        assert all(v is Verdict.ZERO for _, v in res.values())

    def test_metric_annihilates_null_directions(self):
        web = make_web(2, NONFLAT_W[2])
        g = conformal_metric(web)
        nc = null_curve(web)
        for tv in (Fraction(4), Fraction(9, 2), Fraction(-1), Fraction(6), Fraction(-5, 3)):
            v = nc.at(tv)
            terms = []
            for (c, d), gv in g.items():
                w = rational(1 if c == d else 2)
                terms.append(mul(w, gv, v.comp(c), v.comp(d)))
            assert ZT.verdict(add_iter(terms)) is Verdict.ZERO

    def test_weyl_form_matches_printed_formula(self):
        web = make_web(2, NONFLAT_W[2])
        conn = canonical_connection(web, ZT)
        phi = weyl_form_from_connection(web, conn)
        pairs = {0: ((0, 1, 1), (0, 2, 2)), 1: ((0, 1, 0), (1, 2, 2)), 2: ((0, 2, 0), (1, 2, 1))}
        for i, ((a1, b1, d1), (a2, b2, d2)) in pairs.items():
            want = add(div(web.dw2(a1, b1), web.dw(d1)), div(web.dw2(a2, b2), web.dw(d2)))
            assert ZT.verdict(sub(phi.comp(f"x{i}"), want)) is Verdict.ZERO


def _numeric_christoffels(conn, env):
    coords = conn.web.coords
    out = {}
    for a in coords:
        for b in coords:
            for c in coords:
                e = conn.christoffel(a, b, c)
                out[(a, b, c)] = float(eval_numeric(e, env)) if e is not ZERO else 0.0
    return out


def _fd_ricci(conn, base_env, b, c, h=1e-5):
    """Finite-difference Ricci component: derivatives of the Christoffel
    symbols are taken by central differences, independent of the
    symbolic curvature code."""
    web = conn.web
    coords = web.coords

    def gamma_at(shift_coord, delta):
        env = dict(base_env)
        if shift_coord is not None:
            key = sym(shift_coord)
            env[key] = env.get(key, Fraction(0)) + Fraction(delta)
        fenv = {k: float(v) for k, v in env.items()}
        return _numeric_christoffels(conn, fenv)

    g0 = gamma_at(None, 0)
    dgamma = {}
    for d in coords:
        gp = gamma_at(d, h)
        gm = gamma_at(d, -h)
        for key in g0:
            dgamma[(d,) + key] = (gp[key] - gm[key]) / (2 * float(h))
    acc = 0.0
    for a in coords:
        acc += dgamma[(a, b, c, a)] - dgamma[(b, a, c, a)]
        for m in coords:
            acc += g0[(a, m, a)] * g0[(b, c, m)] - g0[(b, m, a)] * g0[(a, c, m)]
    return acc


class TestRicci:
    def test_symbolic_matches_finite_difference(self):
        web = make_web(2, NONFLAT_W[2])
        conn = canonical_connection(web, ZT)
        ric = ricci_tensor(conn)
        rng = random.Random(17)
        env = sample_point(web, list(ric.values()), rng, scale=3)
        fenv = {k: float(v) for k, v in env.items()}
        for (b, c) in (("x0", "x0"), ("x0", "x1"), ("x2", "x1")):
            sym_val = float(eval_numeric(ric[(b, c)], fenv))
            fd_val = _fd_ricci(conn, env, b, c)
            assert abs(sym_val - fd_val) < 1e-4 * max(1.0, abs(sym_val))

    def test_null_contraction_small(self):
        for k in (2, 3):
            web = make_web(k, NONFLAT_W[k])
            conn = canonical_connection(web, ZT)
            vals = ricci_null_residuals(web, conn, seed=3)
            assert len(vals) >= (2 * k + 1)
            assert max(vals) < 1e-6

    def test_flat_web_is_ricci_flat(self):
        web = make_web(3, "x0+x1+x2+x3")
        conn = canonical_connection(web, ZT)
        assert all(e is ZERO for e in ricci_tensor(conn).values())


class TestBryant:
    def test_requires_k3(self):
        with pytest.raises(WebError):
            bryant_forms(make_web(2, "x0+x1+x2"), ZT)

    def test_flat_web_all_zero(self):
        bf = bryant_forms(make_web(3, "x0+x1+x2+x3"), ZT)
        assert all(e is ZERO for e in bf.c.values())
        assert all(not b.comps for b in bf.betas())
        assert not bf.alpha.comps

    def test_structure_functions_antisymmetric(self):
        # stored for i < j only; the accessor's antisymmetry is checked
        # through the dual pairing against the brackets
        web = make_web(3, NONFLAT_W[3])
        bf = bryant_forms(web, ZT)
        nc = null_curve(web)
        br = lie_bracket(nc.fields[2], nc.fields[1])
        want = neg(bf.c[(1, 2, 0)])
        assert ZT.verdict(sub(bf.eta[0](br), want)) is Verdict.ZERO

    def test_nonflat_torsion_free_with_nonzero_beta(self):
        web = make_web(3, NONFLAT_W[3])
        bf = bryant_forms(web, ZT)
        assert any(ZT.verdict(v) is Verdict.NONZERO for b in bf.betas() for v in b.comps.values())
        tres = bryant_torsion_residuals(bf, ZT)
        assert all(v is Verdict.ZERO for _, v in tres.values())

    def test_requires_solution(self):
        web = make_web(3, "x0*x1*x2 + x0 + x1 + x2 + x3")
        with pytest.raises(NotAWebError):
            bryant_forms(web, ZT)


class TestZakharevich:
    def test_agrees_with_hirota_on_corpus(self, corpus):
        for k, w, _tag in corpus:
            web = make_web(k, w)
            assert zakharevich_verdict(web, None, ZT) == is_hirota_solution(web, ZT), (k, w)

    def test_rejects_values_inside_spectrum(self):
        web = make_web(2, "x0+x1+x2")
        with pytest.raises(WebError, match="void"):
            zakharevich_verdict(web, [Fraction(0), Fraction(1), Fraction(2), Fraction(5), Fraction(6)], ZT)

    def test_rejects_repeated_values(self):
        web = make_web(2, "x0+x1+x2")
        with pytest.raises(WebError):
            zakharevich_verdict(web, [Fraction(4), Fraction(4), Fraction(5), Fraction(6), Fraction(7)], ZT)


class TestBiHamiltonian:
    def test_pencil_is_affine(self):
        for k in (2, 3):
            assert pencil_affinity_exact(make_web(k, NONFLAT_W[k]))

    def test_schouten_vanishes_on_solutions(self):
        for k in (2, 3):
            web = make_web(k, NONFLAT_W[k])
            vals = schouten_residuals(web, Fraction(1, 2), point_samples=4, seed=7)
            assert max(vals) < 1e-8

    def test_schouten_nonzero_off_solutions(self):
        web = make_web(2, "x0*x1*x2 + x0 + x1 + x2")
        vals = schouten_residuals(web, Fraction(1, 2), point_samples=4, seed=7)
        assert max(vals) > 1e-3

    def test_matches_decomposable_expansion(self):
        # oracle: [Pi, Pi] = sum_{i,j} [L_i, L_j] ^ dy_i ^ dy_j, so the
        # (x_c, y_i, y_j) component equals 2 [L_i, L_j]^{x_c}
        web = make_web(2, NONFLAT_W[2])
        tv = Fraction(5, 2)
        ls = lax_tuple(web, tv)
        comp = poisson_pencil_components(web, tv)

        def pi(a, b):
            if (a, b) in comp:
                return comp[(a, b)]
            if (b, a) in comp:
                return neg(comp[(b, a)])
            return ZERO

        coords = web.coords + ("y1", "y2")
        rng = random.Random(23)
        br = lie_bracket(ls[0], ls[1])
        for c in web.coords:
            terms = []
            for d in web.coords:
                for (u, v, z) in ((c, "y1", "y2"), ("y1", "y2", c), ("y2", c, "y1")):
                    p = pi(u, d)
                    if p is ZERO:
                        continue
                    dd = differentiate(pi(v, z), d)
                    if dd is ZERO:
                        continue
                    terms.append(mul(p, dd))
            schouten_c = mul(rational(2), add_iter(terms))
            want = mul(rational(2), br.comp(c))
            assert ZT.verdict(sub(schouten_c, want)) is Verdict.ZERO, c
