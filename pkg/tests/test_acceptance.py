"""Acceptance criteria; each test emits one PASS/FAIL line (printed and collected in the summary)."""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from canardlab import cli
from canardlab import expr as ex
from canardlab import melnikov as mk
from canardlab import normalform as nf
from canardlab import slowgeom as sg
from canardlab import sysmodel as sm
from canardlab import tracer as tr
from canardlab.lienard import lienard_system
from canardlab.stiff import integrate_planar

S2P = math.sqrt(2 * math.pi)
LIENARD_A5 = (0.0, 0.0, -4.0 / 3.0, -6.0, 0.0)
FIXTURE = Path(__file__).parent / "fixtures" / "lienard.cfg"


@pytest.fixture
def verdict(record_property):
    def emit(n: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {n}: {detail}"
        print(line)
        record_property("criterion", line)
        assert ok, line

    return emit


@pytest.fixture(scope="module")
def lien():
    s = lienard_system()
    pts = sm.canard_points(s)
    return s, pts, [nf.normal_form(s, p).a for p in pts]


def _rel(u, v):
    return abs(u - v) / max(abs(u), 1e-6)


def test_01_melnikov_paths_agree(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for a in rng.uniform(-5, 5, (200, 6)):
        c = mk.distance_closed_form(a).as_array()
        q = mk.distance_quadrature(a).as_array()
        worst = max(worst, max(_rel(u, v) for u, v in zip(c, q)))
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-8 and dt < 5.0, f"closed form vs quadrature, worst rel {worst:.2e}, {dt:.2f} s")


def test_02_lambda_coefficient(verdict, lien):
    _, _, a = lien
    d = mk.distance_quadrature(a[0]).d_lambda2
    verdict(2, abs(d + S2P) < 1e-10, f"d_lambda2 = {d!r}")


def test_03_canard_identification(verdict):
    t0 = time.perf_counter()
    s = lienard_system()
    contacts = sm.find_contact_points(s)
    mu, _ = sm.solve_canard_parameters(s, (0.2, 0.1))
    dt = time.perf_counter() - t0
    ok_pts = len(contacts) == 2 and max(abs(contacts[0][0]), abs(contacts[0][1]), abs(contacts[1][0] - 1),
                                         abs(contacts[1][1] - 1 / 6)) < 1e-10
    ok_mu = abs(mu[0] - 1 / 6) < 1e-10 and abs(mu[1] - 1 / 12) < 1e-10
    verdict(3, ok_pts and ok_mu and dt < 1.0,
            f"contacts {[(round(x, 12), round(y, 12)) for x, y in contacts]}, (lambda, eta) = ({mu[0]:.12f}, "
            f"{mu[1]:.12f}), {dt:.3f} s")


def test_04_normal_form_coefficients(verdict, lien):
    s, pts, _ = lien
    worst = 0.0
    for p in pts:
        d = nf.normal_form(s, p)
        target = (*LIENARD_A5, 3.0 * d.orientation)
        for a in (d.a, nf.a_coefficients_oracle(s, p)):
            worst = max(worst, max(abs(u - v) for u, v in zip(a, target)))
    signs = [nf.normal_form(s, p).orientation for p in pts]
    verdict(4, worst < 1e-6 and signs == [1, -1], f"both paths, max deviation {worst:.1e}, zeta = {signs}")


def test_05_lienard_distance(verdict, lien):
    s, pts, a = lien
    ok, parts = True, []
    for p, aj in zip(pts, a):
        zeta = nf.normal_form(s, p).orientation
        c, q = mk.distance_closed_form(aj), mk.distance_quadrature(aj)
        ok &= abs(q.d_lambda2 + S2P) < 1e-8 and abs(q.d_eta2[0] - 3 * S2P * zeta) < 1e-8
        ok &= _rel(c.d_r2, q.d_r2) < 1e-8
        cands = ", ".join(f"{name}: {'match' if abs(q.d_r2 - v) < 1e-8 else 'differs'}"
                          for name, v in (("-sqrt(2pi)", -S2P), ("-2 sqrt(2pi)", -2 * S2P)))
        parts.append(f"d_r2 = {q.d_r2:.10f} ({cands})")
    verdict(5, ok, "lambda and eta coefficients match; " + "; ".join(parts[:1]))


def test_06_curve_slopes(verdict, lien):
    _, pts, a = lien
    c = mk.canard_curve_expansion(pts, a)
    es = [1e-4, 2e-4, 4e-4]
    sol = np.array([mk.solve_canard_pair(pts, a, e) for e in es])
    fit_l = np.polyfit(es, sol[:, 0], 1)[0]
    fit_e = np.polyfit(es, sol[:, 1], 1)[0]
    ok = abs(fit_l - c.lambda_slope) <= 0.01 * abs(c.lambda_slope) and abs(fit_e - c.eta_slope) <= 0.01 * max(
        abs(c.eta_slope), 1e-8) and abs(c.eta_slope) < 1e-10
    verdict(6, ok, f"lambda slope {c.lambda_slope:.12f} vs difference {fit_l:.12f}; eta slope {c.eta_slope:.1e}")


def _antiderivative(x):
    return 1.5 * x * x - 1.5 * x - 0.75 * math.log(abs(2 * x - 1))


def test_07_slow_divergence(verdict):
    s = lienard_system()
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(50):
        lo, hi = (-0.8, 0.45) if k % 2 else (0.55, 1.8)
        x1, x2 = rng.uniform(lo, hi, 2)
        I = sg.slow_divergence_integral(s, x1, x2)
        worst = max(worst, abs(I - (_antiderivative(x2) - _antiderivative(x1))))
    verdict(7, worst < 1e-8, f"50 intervals, worst abs error {worst:.1e}")


def test_08_first_integral(verdict):
    a = (0.0,) * 6

    def rhs(x, y):
        return mk.chart2_field(a, (x, y), 0.0, 0.0, 0.0)

    def jac(x, y):
        return 2 * x, -1.0, 1.0, 0.0

    H0 = mk.first_integral(0.0, -0.5)
    worst = 0.0
    for t_end in (6.0, -6.0):
        sol = integrate_planar(rhs, jac, (0.0, -0.5), t_end, rtol=1e-10, atol=1e-10)
        worst = max(worst, float(np.max(np.abs(mk.first_integral(sol.u[:, 0], sol.u[:, 1]) - H0))))
    verdict(8, worst <= 1e-8, f"max |H - H0| = {worst:.1e} on [-6, 6]")


_SPLIT_WORST = [0.0, 0.0, 0.0]


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def _splitting_property(a):
    d = mk.distance_quadrature(a)
    h = 1e-3
    for i, (pred, args) in enumerate(((d.d_r2, (h, 0.0, [0.0])), (d.d_lambda2, (0.0, h, [0.0])),
                                      (d.d_eta2[0], (0.0, 0.0, [h])))):
        assume(abs(pred) > 0.1)
        ratio = mk.measure_splitting(a, *args) / (pred * h)
        _SPLIT_WORST[i] = max(_SPLIT_WORST[i], abs(ratio - 1))
        assert abs(ratio - 1) < 0.02


def test_09_splitting_linearity(verdict):
    try:
        _splitting_property()
        ok = True
    except AssertionError:
        ok = False
    w = ", ".join(f"{n} {v:.1e}" for n, v in zip(("r2", "lambda2", "eta2"), _SPLIT_WORST))
    verdict(9, ok, f"worst relative deviation from first order: {w}")


def test_10_three_cycle_coexistence(verdict):
    eps, lam, eta = 0.045, 0.163, 1 / 12
    t0 = time.perf_counter()
    s = lienard_system(lam=lam, eta=eta)
    eqs = tr.equilibria(s, eps)
    cycles = tr.find_limit_cycles(s, eps, None, n_seeds=16, tol=1e-11)
    dt = time.perf_counter() - t0
    roots = np.sort(np.roots([-1 / 3, 1 / 2, -lam, lam / 2 - eta]).real)
    ok_eq = len(eqs) == 3 and max(abs(e.x - r) for e, r in zip(eqs, roots)) < 1e-3
    ok_kind = [e.kind for e in eqs] == ["stable focus", "saddle", "stable focus"]
    large = [c for c in cycles if len(c.encloses) > 1]
    small = [c for c in cycles if len(c.encloses) <= 1]
    verdict(10, ok_eq and ok_kind and len(large) >= 1 and dt < 60.0,
            f"equilibria x = {[round(e.x, 6) for e in eqs]} ({', '.join(e.kind for e in eqs)}); "
            f"{len(large)} large cycle(s); small cycles {len(small)} (2 expected); {dt:.1f} s")


def test_11_convergence_trend(verdict):
    cfg = cli.load_config(FIXTURE)
    cfg.sweep_eps = (0.05, 0.02, 0.01)
    out = cli.sweep_section(cfg, None)
    h = [e["hausdorff"] for e in out["entries"]]
    ok = all(v is not None for v in h) and all(b <= a for a, b in zip(h, h[1:]))
    verdict(11, ok and out["monotone_non_increasing"],
            "Hausdorff to the slow-fast cycle: " + ", ".join(f"eps={e['eps']}: {e['hausdorff']:.5f}"
                                                             for e in out["entries"]))


CORPUS = [
    "-x^3/3 + x^2/2 - y",
    "eta + lambda*(x - 1/2) - (-x^3/3 + x^2/2)",
    "exp(-x^2/2)",
    "sin(x)*cos(y) + eps*x",
    "ln(1 + x^2) - y^3/(2 + y^2)",
    "x^4 - 2*x*y + lambda*y^2/3 - eta*eps",
]
ROSTER = ("x", "y", "eps", "lambda", "eta")


def test_12_derivative_engine(verdict):
    rng = np.random.default_rng(12)
    h = 1e-5
    worst = 0.0
    for text in CORPUS:
        e = ex.parse(text, ROSTER)
        fn = ex.compile_expr(e, ROSTER)
        for v in ("x", "y", "lambda"):
            dfn = ex.compile_expr(ex.differentiate(e, v), ROSTER)
            k = ROSTER.index(v)
            for p in rng.uniform(-1, 1, (100, 5)):
                up, dn = p.copy(), p.copy()
                up[k] += h
                dn[k] -= h
                fd = (fn(*up) - fn(*dn)) / (2 * h)
                sym = dfn(*p)
                worst = max(worst, abs(sym - fd) / max(abs(sym), 1e-3))
    verdict(12, worst < 1e-6, f"{len(CORPUS)} expressions x 100 points, worst relative error {worst:.1e}")
