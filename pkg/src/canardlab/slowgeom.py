"""Slow divergence integrals and double-canard slow-fast cycles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .sysmodel import SlowFastSystem, critical_slope, critical_value, find_contact_points


class LevelError(ValueError):
    pass


class DivergentIntegralError(ValueError):
    def __init__(self, zero: float):
        super().__init__(f"g vanishes inside the interval at x = {zero!r}; the integral diverges")
        self.zero = zero


class OutsideOmegaError(ValueError):
    pass


@dataclass(frozen=True)
class FoldGeometry:
    alpha1: float
    omega1: float
    alpha2: float
    omega2: float
    x_m: float
    y_m: float


def fold_geometry(sys: SlowFastSystem) -> FoldGeometry:
    cache = sys._cache
    if "fold_geometry" not in cache:
        (a1, w1), (a2, w2) = find_contact_points(sys)
        g = sys.fn("g")
        mu = sys.mu()

        def gm(x):
            return g(x, critical_value(sys, x), 0.0, *mu)

        xs = np.linspace(a1, a2, 801)[1:-1]
        vals = [gm(x) for x in xs]
        roots = [brentq(gm, xs[i], xs[i + 1], xtol=1e-15) for i in range(len(xs) - 1) if vals[i] * vals[i + 1] < 0]
        roots += [xs[i] for i in range(len(xs)) if vals[i] == 0.0]
        if len(roots) != 1:
            raise LevelError(f"expected one equilibrium on the middle branch, found {len(roots)}")
        xm = roots[0]
        cache["fold_geometry"] = FoldGeometry(a1, w1, a2, w2, xm, critical_value(sys, xm))
    return cache["fold_geometry"]


# ---------------------------------------------------------------- level sets

def _solve_level(sys, h, lo, hi, outward: int):
    fun = lambda x: critical_value(sys, x) - h
    flo, fhi = fun(lo), fun(hi)
    step = hi - lo
    for _ in range(40):
        if flo * fhi <= 0:
            break
        step *= 2
        if outward < 0:
            lo -= step
            flo = fun(lo)
        else:
            hi += step
            fhi = fun(hi)
    else:
        raise LevelError(f"no solution of phi(x) = {h!r} on the outer branch")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    x = brentq(fun, lo, hi, xtol=1e-15, rtol=1e-15)
    d = critical_slope(sys, x)
    if d != 0.0:
        xn = x - fun(x) / d
        if lo <= xn <= hi and abs(fun(xn)) <= abs(fun(x)):
            x = xn
    return x


def level_roots(sys: SlowFastSystem, h: float) -> tuple[float, float, float]:
    """(alpha_L, alpha_M, alpha_R) with phi = h on the left, middle and right branches."""
    G = fold_geometry(sys)
    if not G.omega1 < h < G.omega2:
        raise LevelError(f"level {h!r} outside ({G.omega1!r}, {G.omega2!r})")
    x_lo, x_hi = sys.window[0], sys.window[1]
    width = max(G.alpha2 - G.alpha1, 1e-3)
    left = _solve_level(sys, h, min(x_lo, G.alpha1 - width), G.alpha1, -1)
    mid = _solve_level(sys, h, G.alpha1, G.alpha2, 0)
    right = _solve_level(sys, h, G.alpha2, max(x_hi, G.alpha2 + width), 1)
    return left, mid, right


# ---------------------------------------------------------------- integrals

def divergence_integrand(sys: SlowFastSystem, x: float) -> float:
    """f_x phi'(x) / g along the critical curve, i.e. -f_x^2 / (f_y g)."""
    mu = sys.mu()
    y = critical_value(sys, x)
    fx = sys.fn("f", ("x",))(x, y, 0.0, *mu)
    fy = sys.fn("f", ("y",))(x, y, 0.0, *mu)
    g = sys.fn("g")(x, y, 0.0, *mu)
    return -fx * fx / (fy * g)


def slow_divergence_integral(sys: SlowFastSystem, x1: float, x2: float, tol: float = 1e-12) -> float:
    if x1 == x2:
        return 0.0
    lo, hi = min(x1, x2), max(x1, x2)
    g = sys.fn("g")
    mu = sys.mu()
    d = 1e-9 * (hi - lo)
    xs = np.linspace(lo + d, hi - d, 257)
    fx = sys.fn("f", ("x",))
    gv = np.array([g(x, critical_value(sys, x), 0.0, *mu) for x in xs])
    folds = []

    def check(z):
        # a zero of g at a fold is removable (f_x vanishes there too)
        if abs(fx(z, critical_value(sys, z), 0.0, *mu)) > 1e-7:
            raise DivergentIntegralError(float(z))
        folds.append(float(z))

    for i in range(len(xs)):
        if gv[i] == 0.0:
            check(xs[i])
        elif i and gv[i - 1] * gv[i] < 0:
            check(brentq(lambda x: g(x, critical_value(sys, x), 0.0, *mu), xs[i - 1], xs[i], xtol=1e-14))
    val, _ = quad(lambda x: divergence_integrand(sys, x), lo, hi, epsabs=tol, epsrel=1e-12, limit=200,
                  points=folds or None)
    return val if x2 > x1 else -val


def cycle_integrals(sys: SlowFastSystem, s1: float, s2: float) -> tuple[float, float, float, float]:
    G = fold_geometry(sys)
    _check_omega(G, s1, s2)
    L1, M1, _ = level_roots(sys, G.omega1 + s1)
    _, M2, R2 = level_roots(sys, G.omega1 + s2)
    return (
        slow_divergence_integral(sys, L1, G.alpha1),
        slow_divergence_integral(sys, G.alpha1, M2),
        slow_divergence_integral(sys, R2, G.alpha2),
        slow_divergence_integral(sys, G.alpha2, M1),
    )


def _check_omega(G: FoldGeometry, s1: float, s2: float) -> None:
    if not (0.0 < s2 < G.y_m - G.omega1 < s1 < G.omega2 - G.omega1):
        raise OutsideOmegaError(f"(s1, s2) = ({s1!r}, {s2!r}) is outside the admissible region")


# ---------------------------------------------------------------- cycle pair

@dataclass
class CycleRoot:
    s1: float
    s2: float
    residual: float
    jacobian_det: float
    iterations: int

    def to_dict(self) -> dict:
        return {"s1": self.s1, "s2": self.s2, "residual_norm": self.residual,
                "jacobian_det": self.jacobian_det, "newton_iterations": self.iterations}


class _Branches:
    """Per-height integrals; R(s1, s2) separates into s1- and s2-parts."""

    def __init__(self, sys: SlowFastSystem):
        self.sys = sys
        self.G = fold_geometry(sys)

    def part1(self, s1):
        G = self.G
        L, M, _ = level_roots(self.sys, G.omega1 + s1)
        I1 = slow_divergence_integral(self.sys, L, G.alpha1)
        I4 = slow_divergence_integral(self.sys, G.alpha2, M)
        dI1 = -divergence_integrand(self.sys, L) / critical_slope(self.sys, L)
        dI4 = divergence_integrand(self.sys, M) / critical_slope(self.sys, M)
        return I1, I4, dI1, dI4

    def part2(self, s2):
        G = self.G
        _, M, R = level_roots(self.sys, G.omega1 + s2)
        I2 = slow_divergence_integral(self.sys, G.alpha1, M)
        I3 = slow_divergence_integral(self.sys, R, G.alpha2)
        dI2 = divergence_integrand(self.sys, M) / critical_slope(self.sys, M)
        dI3 = -divergence_integrand(self.sys, R) / critical_slope(self.sys, R)
        return I2, I3, dI2, dI3


def cycle_residual(sys: SlowFastSystem, s1: float, s2: float) -> tuple[float, float]:
    I1, I2, I3, I4 = cycle_integrals(sys, s1, s2)
    return I1 + I2, I3 + I4


def find_cycle_pair(sys: SlowFastSystem, n: int = 32, tol: float = 1e-8, max_iter: int = 50) -> list[CycleRoot]:
    """Roots of (I1 + I2, I3 + I4) over the admissible region, from a seed grid."""
    br = _Branches(sys)
    G = br.G
    lo1, hi1 = G.y_m - G.omega1, G.omega2 - G.omega1
    lo2, hi2 = 0.0, G.y_m - G.omega1
    g1 = lo1 + (hi1 - lo1) * (np.arange(n) + 0.5) / n
    g2 = lo2 + (hi2 - lo2) * (np.arange(n) + 0.5) / n
    P1 = [br.part1(s) for s in g1]
    P2 = [br.part2(s) for s in g2]
    R1 = np.array([[P1[i][0] + P2[k][0] for k in range(n)] for i in range(n)])
    R2 = np.array([[P2[k][1] + P1[i][1] for k in range(n)] for i in range(n)])

    def changes(M, i, k):
        c = [M[i, k], M[i + 1, k], M[i, k + 1], M[i + 1, k + 1]]
        return min(c) <= 0.0 <= max(c)

    seeds = [(0.5 * (g1[i] + g1[i + 1]), 0.5 * (g2[k] + g2[k + 1]))
             for i in range(n - 1) for k in range(n - 1) if changes(R1, i, k) and changes(R2, i, k)]

    def inside(s1, s2):
        return lo2 < s2 < hi2 and lo1 < s1 < hi1

    roots: list[CycleRoot] = []
    for s1, s2 in seeds:
        I1, I4, d1, d4 = br.part1(s1)
        I2, I3, d2, d3 = br.part2(s2)
        r = np.array([I1 + I2, I3 + I4])
        it = 0
        ok = False
        for it in range(1, max_iter + 1):
            J = np.array([[d1, d2], [d4, d3]])
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t > 1e-6:
                n1, n2 = s1 + t * step[0], s2 + t * step[1]
                if inside(n1, n2):
                    I1n, I4n, d1n, d4n = br.part1(n1)
                    I2n, I3n, d2n, d3n = br.part2(n2)
                    rn = np.array([I1n + I2n, I3n + I4n])
                    if np.linalg.norm(rn) < np.linalg.norm(r) or np.linalg.norm(rn) < 1e-14:
                        break
                t *= 0.5
            else:
                break
            s1, s2, r = n1, n2, rn
            d1, d2, d3, d4 = d1n, d2n, d3n, d4n
            if np.linalg.norm(r) < 1e-13 or np.linalg.norm(t * step) < 1e-15:
                ok = True
                break
        res = float(np.linalg.norm(r))
        if res < tol or ok and res < tol:
            det = float(d1 * d3 - d2 * d4)
            if all(abs(s1 - q.s1) > 1e-7 or abs(s2 - q.s2) > 1e-7 for q in roots):
                roots.append(CycleRoot(float(s1), float(s2), res, det, it))
    roots.sort(key=lambda q: (q.s1, q.s2))
    return roots


# ---------------------------------------------------------------- cycle

@dataclass
class SlowFastCycle:
    s1: float
    s2: float
    h1: float
    h2: float
    alpha_L1: float
    alpha_M1: float
    alpha_M2: float
    alpha_R2: float
    integrals: tuple[float, float, float, float]
    arcs: list[tuple[str, np.ndarray]] = field(default_factory=list)

    @property
    def polyline(self) -> np.ndarray:
        pts = [self.arcs[0][1]]
        for _, arc in self.arcs[1:]:
            pts.append(arc[1:])
        return np.vstack(pts)

    def tagged_rows(self):
        for tag, arc in self.arcs:
            for x, y in arc:
                yield tag, x, y

    def to_dict(self) -> dict:
        return {"s1": self.s1, "s2": self.s2, "h1": self.h1, "h2": self.h2,
                "alpha_L_s1": self.alpha_L1, "alpha_M_s1": self.alpha_M1,
                "alpha_M_s2": self.alpha_M2, "alpha_R_s2": self.alpha_R2,
                "integrals": list(self.integrals)}


def _slow_arc(sys, a, b, through, n):
    xs = np.concatenate([np.linspace(a, through, n // 2, endpoint=False), np.linspace(through, b, n - n // 2)])
    ys = np.array([critical_value(sys, x) for x in xs])
    return np.column_stack([xs, ys])


def build_cycle(sys: SlowFastSystem, s1: float, s2: float, n: int = 400) -> SlowFastCycle:
    G = fold_geometry(sys)
    _check_omega(G, s1, s2)
    h1, h2 = G.omega1 + s1, G.omega1 + s2
    L1, M1, _ = level_roots(sys, h1)
    _, M2, R2 = level_roots(sys, h2)
    ints = cycle_integrals(sys, s1, s2)
    a1 = _slow_arc(sys, L1, M2, G.alpha1, n)
    a1[0, 1], a1[-1, 1] = h1, h2
    f2 = np.array([[M2, h2], [R2, h2]])
    a3 = _slow_arc(sys, R2, M1, G.alpha2, n)
    a3[0, 1], a3[-1, 1] = h2, h1
    f1 = np.array([[M1, h1], [L1, h1]])
    arcs = [("slow_left", a1), ("fast_s2", f2), ("slow_right", a3), ("fast_s1", f1)]
    return SlowFastCycle(s1, s2, h1, h2, L1, M1, M2, R2, ints, arcs)
