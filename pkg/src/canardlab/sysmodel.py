"""Slow-fast systems, their critical curve, contact points and hypotheses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from . import expr as ex


class SystemError_(Exception):
    """Base class for errors raised while analysing a system."""


class NoRootError(SystemError_):
    pass


class NonGraphError(SystemError_):
    pass


class HypothesisViolation(SystemError_):
    def __init__(self, message: str, roots: Sequence[float] = ()):
        super().__init__(message)
        self.roots = list(roots)


class DegenerateCanardError(SystemError_):
    pass


class NondegeneracyError(SystemError_):
    pass


@dataclass(frozen=True)
class Tolerances:
    root_abs: float = 1e-12
    sign_margin: float = 1e-9
    canard_abs: float = 1e-10
    rank_rel: float = 1e-10


@dataclass
class SlowFastSystem:
    """Fast-form system x' = f, y' = eps*g with parameters (lambda, eta_1..eta_m)."""

    f: ex.Expr
    g: ex.Expr
    lam: str = "lambda"
    etas: tuple[str, ...] = ("eta",)
    base: dict[str, float] = field(default_factory=dict)
    window: tuple[float, float, float, float] = (-1.0, 2.0, -1.0, 1.0)
    eps: float = 0.0
    tol: Tolerances = field(default_factory=Tolerances)
    f_text: str | None = None
    g_text: str | None = None

    def __post_init__(self):
        self._cache: dict = {}
        allowed = set(self.roster)
        for name, e in (("f", self.f), ("g", self.g)):
            extra = ex.variables(e) - allowed
            if extra:
                raise ex.UnknownIdentifierError(sorted(extra)[0], 0)
        for p in self.params:
            self.base.setdefault(p, 0.0)

    @classmethod
    def from_strings(cls, f: str, g: str, lam: str = "lambda", etas: Sequence[str] = ("eta",), **kw):
        roster = ("x", "y", "eps", lam, *etas)
        return cls(ex.parse(f, roster), ex.parse(g, roster), lam, tuple(etas), f_text=f, g_text=g, **kw)

    @property
    def params(self) -> tuple[str, ...]:
        return (self.lam, *self.etas)

    @property
    def roster(self) -> tuple[str, ...]:
        return ("x", "y", "eps", *self.params)

    @property
    def m(self) -> int:
        return len(self.etas)

    def with_base(self, **values: float) -> "SlowFastSystem":
        b = dict(self.base)
        for k, v in values.items():
            b[self.lam if k == "lam" else k] = float(v)
        return replace(self, base=b)

    def mu(self, mu: Mapping[str, float] | None = None) -> tuple[float, ...]:
        b = self.base if mu is None else {**self.base, **mu}
        return tuple(float(b[p]) for p in self.params)

    def expr_of(self, which: str, vars: Sequence[str] = ()) -> ex.Expr:
        key = ("e", which, tuple(vars))
        if key not in self._cache:
            self._cache[key] = ex.derivative(self.f if which == "f" else self.g, vars)
        return self._cache[key]

    def fn(self, which: str, vars: Sequence[str] = (), vectorized: bool = False) -> Callable[..., float]:
        """Compiled ``d^k(which)/d vars`` taking (x, y, eps, lam, *etas)."""
        key = ("c", which, tuple(vars), vectorized)
        if key not in self._cache:
            self._cache[key] = ex.compile_expr(self.expr_of(which, vars), self.roster, vectorized)
        return self._cache[key]

    def value(self, which: str, vars: Sequence[str], x: float, y: float,
              eps: float = 0.0, mu: Sequence[float] | None = None) -> float:
        p = self.mu() if mu is None else tuple(mu)
        return self.fn(which, vars)(x, y, eps, *p)

    def partial_at(self, which: str, vars: Sequence[str], x: float, y: float,
                   eps: float = 0.0, mu: Sequence[float] | None = None) -> float:
        """Evaluate a partial through the tree evaluator (exact domain semantics)."""
        p = self.mu() if mu is None else tuple(mu)
        pt = dict(zip(self.roster, (x, y, eps, *p)))
        e = self.expr_of(which, vars)
        return ex.evaluate(e, pt)

    def graph_slope(self) -> float | None:
        """If f is affine in y with constant coefficient, return that coefficient."""
        d = self.expr_of("f", ("y",))
        if isinstance(d, ex.Const) and d.value != 0.0:
            return d.value
        return None


# ---------------------------------------------------------------- critical curve

def critical_value(sys: SlowFastSystem, x: float, mu: Sequence[float] | None = None) -> float:
    """y = phi(x) solving f(x, y, mu, 0) = 0 inside the window."""
    p = sys.mu() if mu is None else tuple(mu)
    f = sys.fn("f")
    c = sys.graph_slope()
    if c is not None:
        v = f(x, 0.0, 0.0, *p)
        return v if c == -1.0 else -v / c
    fy = sys.fn("f", ("y",))
    y_lo, y_hi = sys.window[2], sys.window[3]
    ys = np.linspace(y_lo, y_hi, 257)
    vals = np.array([f(x, yy, 0.0, *p) for yy in ys])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    roots = []
    for i in idx:
        if vals[i] == 0.0:
            r = ys[i]
        elif vals[i + 1] == 0.0:
            continue
        else:
            r = brentq(lambda yy: f(x, yy, 0.0, *p), ys[i], ys[i + 1], xtol=1e-15, rtol=1e-15)
        if not roots or abs(r - roots[-1]) > 1e-12:
            roots.append(r)
    if not roots:
        raise NoRootError(f"f(x={x!r}, y) has no root for y in [{y_lo}, {y_hi}]")
    if len(roots) > 1:
        raise NonGraphError(f"critical set is not a graph over x={x!r}: roots {roots}")
    y = roots[0]
    for _ in range(3):
        d = fy(x, y, 0.0, *p)
        if d == 0.0:
            break
        y -= f(x, y, 0.0, *p) / d
    if abs(fy(x, y, 0.0, *p)) < sys.tol.sign_margin:
        raise NonGraphError(f"f_y vanishes at the root ({x!r}, {y!r})")
    return y


def critical_slope(sys: SlowFastSystem, x: float, mu: Sequence[float] | None = None) -> float:
    """phi'(x) = -f_x / f_y on the critical curve."""
    p = sys.mu() if mu is None else tuple(mu)
    y = critical_value(sys, x, p)
    return -sys.fn("f", ("x",))(x, y, 0.0, *p) / sys.fn("f", ("y",))(x, y, 0.0, *p)


def _fold_newton(sys: SlowFastSystem, x: float, y: float, mu: Sequence[float], iters: int = 30):
    f, fx, fy = sys.fn("f"), sys.fn("f", ("x",)), sys.fn("f", ("y",))
    fxx, fxy = sys.fn("f", ("x", "x")), sys.fn("f", ("x", "y"))
    for _ in range(iters):
        r1, r2 = f(x, y, 0.0, *mu), fx(x, y, 0.0, *mu)
        a, b = fx(x, y, 0.0, *mu), fy(x, y, 0.0, *mu)
        c, d = fxx(x, y, 0.0, *mu), fxy(x, y, 0.0, *mu)
        det = a * d - b * c
        if det == 0.0:
            break
        dx = (d * r1 - b * r2) / det
        dy = (-c * r1 + a * r2) / det
        x, y = x - dx, y - dy
        if abs(dx) + abs(dy) < 1e-15 * (1 + abs(x) + abs(y)):
            break
    return x, y


def find_contact_points(sys: SlowFastSystem, mu: Sequence[float] | None = None,
                        expect: int | None = 2, samples: int = 2049) -> list[tuple[float, float]]:
    """Roots of f_x(x, phi(x)) in the window, sorted by x."""
    p = sys.mu() if mu is None else tuple(mu)
    fx = sys.fn("f", ("x",))
    xs = np.linspace(sys.window[0], sys.window[1], samples)

    def h(x):
        return fx(x, critical_value(sys, x, p), 0.0, *p)

    hv = np.array([h(x) for x in xs])
    pts: list[tuple[float, float]] = []
    for i in range(len(xs) - 1):
        if hv[i] == 0.0:
            r = xs[i]
        elif hv[i] * hv[i + 1] < 0:
            r = brentq(h, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15)
        else:
            continue
        x, y = _fold_newton(sys, r, critical_value(sys, r, p), p)
        if not pts or abs(x - pts[-1][0]) > 1e-9:
            pts.append((x, y))
    if hv[-1] == 0.0 and (not pts or abs(xs[-1] - pts[-1][0]) > 1e-9):
        pts.append((xs[-1], critical_value(sys, xs[-1], p)))
    pts.sort()
    if expect is not None and len(pts) != expect:
        raise HypothesisViolation(
            f"expected two contact points, found {len(pts)}: {[x for x, _ in pts]}",
            [x for x, _ in pts],
        )
    return pts


def track_contact_point(sys: SlowFastSystem, guess: tuple[float, float], mu: Sequence[float]):
    """Contact point (x~(mu), y~(mu)) continued from ``guess``."""
    return _fold_newton(sys, guess[0], guess[1], tuple(mu))


# ---------------------------------------------------------------- canard points

@dataclass
class CanardPointData:
    index: int
    alpha: float
    omega: float
    mu: tuple[float, ...]
    kind: str
    g_value: float
    partials: dict[str, float]
    zeta: int = 0
    orientation: int = 0
    x_lam: float = 0.0
    y_lam: float = 0.0
    x_eta: tuple[float, ...] = ()
    y_eta: tuple[float, ...] = ()
    G: float = 0.0
    lambda_tilde_slope: float = 0.0
    beta_eta: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "alpha": self.alpha,
            "omega": self.omega,
            "kind": self.kind,
            "g_value": self.g_value,
            "zeta": self.zeta,
            "orientation": self.orientation,
            "partials": dict(sorted(self.partials.items())),
            "x_lambda_slope": self.x_lam,
            "y_lambda_slope": self.y_lam,
            "x_eta_slopes": list(self.x_eta),
            "y_eta_slopes": list(self.y_eta),
            "G": self.G,
            "lambda_tilde_slope": self.lambda_tilde_slope,
            "beta_row": [self.G, *self.beta_eta],
        }


def _partials(sys: SlowFastSystem, x: float, y: float, mu: Sequence[float]) -> dict[str, float]:
    lam = sys.lam
    names: dict[str, tuple[str, tuple[str, ...]]] = {
        "f": ("f", ()), "f_x": ("f", ("x",)), "f_y": ("f", ("y",)), "f_xx": ("f", ("x", "x")),
        "f_xy": ("f", ("x", "y")), "f_xxx": ("f", ("x", "x", "x")), "f_yy": ("f", ("y", "y")),
        "f_eps": ("f", ("eps",)), "f_xeps": ("f", ("x", "eps")),
        "f_lam": ("f", (lam,)), "f_xlam": ("f", ("x", lam)),
        "g": ("g", ()), "g_x": ("g", ("x",)), "g_y": ("g", ("y",)), "g_xx": ("g", ("x", "x")),
        "g_lam": ("g", (lam,)), "g_eps": ("g", ("eps",)),
    }
    for k, eta in enumerate(sys.etas, 1):
        names[f"f_eta{k}"] = ("f", (eta,))
        names[f"f_xeta{k}"] = ("f", ("x", eta))
        names[f"g_eta{k}"] = ("g", (eta,))
    return {k: sys.partial_at(w, v, x, y, 0.0, mu) for k, (w, v) in names.items()}


def _slopes(P: Mapping[str, float], fp: str, fxp: str) -> tuple[float, float]:
    fy, fxx = P["f_y"], P["f_xx"]
    if fy == 0.0 or fxx == 0.0:
        raise NondegeneracyError("f_xx or f_y vanishes at the contact point")
    xs = (P[fp] * P["f_xy"] - fy * P[fxp]) / (fy * fxx)
    ys = (P["f_x"] * P[fxp] - P[fp] * fxx) / (fy * fxx)
    return xs, ys


def contact_manifold_slopes(sys: SlowFastSystem, pt, mu: Sequence[float] | None = None):
    """(dx~/dlam, dy~/dlam, dx~/deta_k, dy~/deta_k) at a contact point."""
    p = sys.mu() if mu is None else tuple(mu)
    if isinstance(pt, CanardPointData):
        P = pt.partials
    else:
        P = _partials(sys, pt[0], pt[1], p)
    xl, yl = _slopes(P, "f_lam", "f_xlam")
    pairs = [_slopes(P, f"f_eta{k}", f"f_xeta{k}") for k in range(1, sys.m + 1)]
    return xl, yl, tuple(a for a, _ in pairs), tuple(b for _, b in pairs)


def transversality_G(sys: SlowFastSystem, pt, mu: Sequence[float] | None = None) -> float:
    p = sys.mu() if mu is None else tuple(mu)
    P = pt.partials if isinstance(pt, CanardPointData) else _partials(sys, pt[0], pt[1], p)
    xl, yl, _, _ = contact_manifold_slopes(sys, pt, p)
    return P["g_x"] * xl + P["g_y"] * yl + P["g_lam"]


def lambda_tilde_slope(sys: SlowFastSystem, pt, mu: Sequence[float] | None = None) -> float:
    """Slope of the root lambda~(eps) of g(x~, y~, lambda, eps) = 0."""
    p = sys.mu() if mu is None else tuple(mu)
    P = pt.partials if isinstance(pt, CanardPointData) else _partials(sys, pt[0], pt[1], p)
    G = transversality_G(sys, pt, p)
    if G == 0.0:
        raise HypothesisViolation("composed dg~/dlambda vanishes")
    # x~ and y~ do not depend on eps, so the composed eps-derivative is g_eps
    return -P["g_eps"] / G


def classify_contact_point(sys: SlowFastSystem, pt: tuple[float, float], index: int = 0,
                           mu: Sequence[float] | None = None) -> tuple[str, CanardPointData]:
    p = sys.mu() if mu is None else tuple(mu)
    x, y = pt
    P = _partials(sys, x, y, p)
    gv = P["g"]
    kind = "jump"
    d = CanardPointData(index, x, y, p, kind, gv, P)
    d.orientation = int(np.sign(P["f_xx"]))
    if P["f_y"] != 0.0 and P["f_xx"] != 0.0:
        d.x_lam, d.y_lam, d.x_eta, d.y_eta = contact_manifold_slopes(sys, d, p)
        d.G = P["g_x"] * d.x_lam + P["g_y"] * d.y_lam + P["g_lam"]
        d.beta_eta = tuple(
            P["g_x"] * d.x_eta[k] + P["g_y"] * d.y_eta[k] + P[f"g_eta{k + 1}"] for k in range(sys.m)
        )
    if abs(gv) < sys.tol.canard_abs:
        if abs(P["g_x"]) <= sys.tol.sign_margin:
            raise DegenerateCanardError("degenerate canard point (g = g_x = 0) is unsupported")
        if abs(d.G) <= sys.tol.sign_margin:
            raise DegenerateCanardError("non-transversal canard point (G = 0) is unsupported")
        d.kind = "canard"
        d.zeta = -int(np.sign(P["f_y"] * P["g_x"]))
        d.lambda_tilde_slope = -P["g_eps"] / d.G
    return d.kind, d


def canard_points(sys: SlowFastSystem) -> list[CanardPointData]:
    """Both contact points, classified; raises unless both are canard points."""
    out = []
    for j, pt in enumerate(find_contact_points(sys)):
        kind, d = classify_contact_point(sys, pt, j)
        if kind != "canard":
            raise HypothesisViolation(f"contact point {j} at x={pt[0]!r} is a jump point (g={d.g_value:.3g})")
        out.append(d)
    return out


@dataclass
class BetaRank:
    matrix: np.ndarray
    det: float
    rank: int

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "det": self.det, "rank": self.rank}


def beta_rank(sys: SlowFastSystem, pts: Sequence[CanardPointData], i: int = 0, tol: float | None = None) -> BetaRank:
    """Rank of the matrix of d beta_j/d(lambda, eta_i)."""
    M = np.array([[p.G, p.beta_eta[i]] for p in pts], dtype=float)
    det = float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    scale = float(np.linalg.norm(M[0]) * np.linalg.norm(M[1]))
    t = sys.tol.rank_rel if tol is None else tol
    if abs(det) > t * scale and scale > 0:
        rank = 2
    else:
        rank = 1 if np.any(M != 0) else 0
    return BetaRank(M, det, rank)


# ---------------------------------------------------------------- hypotheses

@dataclass
class HypothesisResult:
    passed: bool
    detail: str
    witness: dict | None = None

    def to_dict(self) -> dict:
        d = {"passed": self.passed, "detail": self.detail}
        if self.witness is not None:
            d["witness"] = self.witness
        return d


@dataclass
class HypothesisReport:
    results: dict[str, HypothesisResult]
    contact_points: list[tuple[float, float]]
    saddle: tuple[float, float] | None
    bendixson: str

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "hypotheses": {k: v.to_dict() for k, v in self.results.items()},
            "contact_points": [list(p) for p in self.contact_points],
            "saddle": None if self.saddle is None else list(self.saddle),
            "bendixson": self.bendixson,
        }


def _sample_x(lo: float, hi: float, alphas: Sequence[float], n: int = 1024) -> np.ndarray:
    xs = list(np.linspace(lo, hi, n))
    for a in alphas:
        for k in range(2, 7):
            xs += [a - 10.0**-k, a + 10.0**-k]
    return np.array(sorted(x for x in xs if lo <= x <= hi))


def bendixson_verdict(sys: SlowFastSystem, mu: Sequence[float] | None = None, n: int = 65) -> str:
    p = sys.mu() if mu is None else tuple(mu)
    fx = sys.fn("f", ("x",))
    x_lo, x_hi, y_lo, y_hi = sys.window
    vals = np.array([fx(x, y, 0.0, *p) for x in np.linspace(x_lo, x_hi, n) for y in np.linspace(y_lo, y_hi, n)])
    m = sys.tol.sign_margin
    if np.all(vals > m) or np.all(vals < -m):
        return "divergence single-signed: no limit cycles"
    return "divergence changes sign: inconclusive"


def check_hypotheses(sys: SlowFastSystem, mu: Sequence[float] | None = None) -> HypothesisReport:
    p = sys.mu() if mu is None else tuple(mu)
    margin = sys.tol.sign_margin
    R: dict[str, HypothesisResult] = {}
    x_lo, x_hi = sys.window[0], sys.window[1]
    bend = bendixson_verdict(sys, p)

    # H1: graph form and two extrema
    pts: list[tuple[float, float]] = []
    try:
        for x in np.linspace(x_lo, x_hi, 64):
            critical_value(sys, float(x), p)
        pts = find_contact_points(sys, p, expect=None)
    except SystemError_ as err:
        R["H1"] = HypothesisResult(False, str(err), {"x": x_lo})
        for h in ("H2", "H3", "H4", "H5"):
            R[h] = HypothesisResult(False, "not checked: H1 failed", {"x": x_lo})
        return HypothesisReport(R, [], None, bend)
    if len(pts) != 2:
        w = {"roots": [x for x, _ in pts]}
        R["H1"] = HypothesisResult(False, f"critical curve has {len(pts)} extrema, expected 2", w)
        for h in ("H2", "H3", "H4", "H5"):
            R[h] = HypothesisResult(False, "not checked: H1 failed", w)
        return HypothesisReport(R, pts, None, bend)
    R["H1"] = HypothesisResult(True, "critical curve is a graph with two extrema")
    (a1, w1), (a2, w2) = pts

    # H2: nondegeneracy
    bad = None
    data = []
    for j, (x, y) in enumerate(pts):
        P = _partials(sys, x, y, p)
        data.append(P)
        if abs(P["f"]) > 1e-10 or abs(P["f_x"]) > 1e-10 or abs(P["f_xx"]) <= margin or abs(P["f_y"]) <= margin:
            bad = {"x": x, "y": y, "f_xx": P["f_xx"], "f_y": P["f_y"]}
    if bad is None and not (data[0]["f_xx"] / -data[0]["f_y"] > 0 and data[1]["f_xx"] / -data[1]["f_y"] < 0):
        bad = {"x": a1, "y": w1, "detail": "phi must have a minimum at alpha_1 and a maximum at alpha_2"}
    R["H2"] = HypothesisResult(bad is None, "nondegenerate folds" if bad is None else "degenerate fold", bad)

    # H3: attracting outer branches, repelling middle branch
    fx = sys.fn("f", ("x",))
    bad = None
    for x in _sample_x(x_lo, x_hi, (a1, a2)):
        if abs(x - a1) < 1e-7 or abs(x - a2) < 1e-7:
            continue
        y = critical_value(sys, x, p)
        v = fx(x, y, 0.0, *p)
        want = 1.0 if a1 < x < a2 else -1.0
        if v * want <= 0.0:
            bad = {"x": float(x), "y": y, "f_x": v}
            break
    R["H3"] = HypothesisResult(bad is None, "branch stability signs L-/M+/R-" if bad is None else "f_x has the wrong sign", bad)

    # H4: canard conditions
    bad = None
    for j, ((x, y), P) in enumerate(zip(pts, data)):
        G = transversality_G(sys, (x, y), p) if abs(P["f_y"]) > 0 and abs(P["f_xx"]) > 0 else 0.0
        if abs(P["g"]) >= sys.tol.canard_abs or abs(P["g_x"]) <= margin or abs(G) <= margin:
            bad = {"x": x, "y": y, "g": P["g"], "g_x": P["g_x"], "G": G}
            break
    R["H4"] = HypothesisResult(bad is None, "both contact points are transversal canard points" if bad is None
                               else "canard condition fails", bad)

    # H5: one saddle on the middle branch, slow flow towards the folds on the outer branches
    g = sys.fn("g")
    saddle = None
    span = a2 - a1
    xs = np.linspace(a1 + 1e-6 * span, a2 - 1e-6 * span, 2001)

    def gm(x):
        return g(x, critical_value(sys, x, p), 0.0, *p)

    gv = np.array([gm(x) for x in xs])
    roots = []
    for i in range(len(xs) - 1):
        if gv[i] == 0.0:
            roots.append(float(xs[i]))
        elif gv[i] * gv[i + 1] < 0:
            roots.append(brentq(gm, xs[i], xs[i + 1], xtol=1e-15))
    detail = []
    bad = None
    if len(roots) != 1:
        bad = {"roots": roots}
        detail.append(f"{len(roots)} equilibria on the middle branch")
    else:
        xm = roots[0]
        ym = critical_value(sys, xm, p)
        saddle = (xm, ym)
        P = _partials(sys, xm, ym, p)
        if not (P["f_x"] > 0 and P["f_x"] * P["g_y"] - P["f_y"] * P["g_x"] < 0):
            bad = {"x": xm, "y": ym, "f_x": P["f_x"]}
            detail.append("middle equilibrium is not a saddle with f_x > 0")
    for xe, want in ((x_lo, 1.0), (x_hi, -1.0)):
        if bad is not None:
            break
        ye = critical_value(sys, xe, p)
        slope = -fx(xe, ye, 0.0, *p) / sys.fn("f", ("y",))(xe, ye, 0.0, *p)
        xdot = g(xe, ye, 0.0, *p) / slope if slope != 0 else math.nan
        if not xdot * want > 0:
            bad = {"x": xe, "y": ye, "xdot": xdot}
            detail.append("slow flow on an outer branch points away from the fold")
    R["H5"] = HypothesisResult(bad is None, "saddle on the middle branch; slow flow towards the folds" if bad is None
                               else "; ".join(detail), bad)
    return HypothesisReport(R, pts, saddle, bend)


def solve_canard_parameters(sys: SlowFastSystem, guess: Sequence[float] | None = None, i: int = 0,
                            tol: float = 1e-14, max_iter: int = 50) -> tuple[tuple[float, ...], list[tuple[float, float]]]:
    """Newton solve of beta_1(mu) = beta_2(mu) = 0 in (lambda, eta_i).

    Contact points are continued with the parameters; returns the parameter
    tuple and the contact points at the solution.
    """
    mu = list(sys.mu() if guess is None else guess)
    pts = find_contact_points(sys, mu)
    g = sys.fn("g")
    for _ in range(max_iter):
        pts = [track_contact_point(sys, pt, mu) for pt in pts]
        beta = np.array([g(x, y, 0.0, *mu) for x, y in pts])
        rows = []
        for j, (x, y) in enumerate(pts):
            P = _partials(sys, x, y, mu)
            xl, yl, xe, ye = contact_manifold_slopes(sys, (x, y), mu)
            rows.append([P["g_x"] * xl + P["g_y"] * yl + P["g_lam"],
                         P["g_x"] * xe[i] + P["g_y"] * ye[i] + P[f"g_eta{i + 1}"]])
        step = np.linalg.solve(np.array(rows), -beta)
        mu[0] += step[0]
        mu[1 + i] += step[1]
        if np.max(np.abs(step)) < tol * (1 + max(abs(mu[0]), abs(mu[1 + i]))):
            break
    pts = [track_contact_point(sys, pt, mu) for pt in pts]
    return tuple(mu), pts
