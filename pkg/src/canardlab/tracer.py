"""Orbits, equilibria, return maps and limit cycles of the fast-form system."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from . import expr as ex
from .stiff import Event, IntegrationError, Solution, integrate_planar
from .sysmodel import SlowFastSystem, critical_value


class ReturnMapError(RuntimeError):
    pass


class NoReturnError(ReturnMapError):
    pass


class LeftWindowError(ReturnMapError):
    pass


# ---------------------------------------------------------------- field

@dataclass
class PlanarField:
    rhs: object
    jac: object
    eps: float
    mu: tuple[float, ...]
    source: str = ""


def planar_field(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None = None) -> PlanarField:
    """x' = f, y' = eps g with parameters baked in as literals."""
    p = sys.mu() if mu is None else tuple(float(v) for v in mu)
    key = ("field", float(eps), p)
    if key in sys._cache:
        return sys._cache[key]
    names = {"x": "x", "y": "y", "eps": f"({float(eps)!r})"}
    names.update({n: f"({v!r})" for n, v in zip(sys.params, p)})
    src = lambda which, vars=(): ex.python_source(sys.expr_of(which, vars), names)  # noqa: E731
    e = f"({float(eps)!r})"
    code = (
        "def rhs(x, y):\n"
        f"    return ({src('f')}, {e}*({src('g')}))\n"
        "def jac(x, y):\n"
        f"    return ({src('f', ('x',))}, {src('f', ('y',))}, {e}*({src('g', ('x',))}), {e}*({src('g', ('y',))}))\n"
    )
    scope = {"_m": math}
    exec(compile(code, "<field>", "exec"), scope)
    pf = PlanarField(scope["rhs"], scope["jac"], float(eps), p, code)
    sys._cache[key] = pf
    return pf


# ---------------------------------------------------------------- orbits

@dataclass
class OrbitTrace:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    steps: int
    rejected: int
    tol: float
    status: str

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def integrate(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None, start: Sequence[float],
              t_end: float, tol: float = 1e-10, atol: float | Sequence[float] | None = None,
              events: Sequence[Event] = (), window: bool = True) -> OrbitTrace:
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError("tolerance must lie in [1e-12, 1e-6]")
    if eps <= 0:
        raise ValueError("eps must be positive")
    pf = planar_field(sys, eps, mu)
    sol = integrate_planar(pf.rhs, pf.jac, start, t_end, rtol=tol, atol=atol, events=events,
                           bounds=sys.window if window else None)
    return OrbitTrace(sol.t, sol.u[:, 0], sol.u[:, 1], sol.steps, sol.rejected, tol, sol.status)


# ---------------------------------------------------------------- equilibria

@dataclass
class Equilibrium:
    x: float
    y: float
    jacobian: tuple[float, float, float, float]
    eigenvalues: tuple[complex, complex]
    kind: str
    residual: float

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "kind": self.kind, "jacobian": list(self.jacobian),
                "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues], "residual": self.residual}


def classify_jacobian(a: float, b: float, c: float, d: float, tol: float = 1e-12) -> str:
    tr, det = a + d, a * d - b * c
    disc = tr * tr - 4 * det
    scale = max(abs(a), abs(b), abs(c), abs(d), 1e-300)
    if det < -tol * scale * scale:
        return "saddle"
    if abs(det) <= tol * scale * scale:
        return "center-ambiguous"
    if abs(tr) <= tol * scale:
        return "center-ambiguous"
    stab = "stable" if tr < 0 else "unstable"
    return f"{stab} focus" if disc < 0 else f"{stab} node"


def equilibria(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None = None, samples: int = 4001) -> list[Equilibrium]:
    p = sys.mu() if mu is None else tuple(mu)
    f, g = sys.fn("f"), sys.fn("g")
    fx, fy, gx, gy = (sys.fn(w, (v,)) for w, v in (("f", "x"), ("f", "y"), ("g", "x"), ("g", "y")))

    def gm(x):
        return g(x, critical_value(sys, x, p), eps, *p)

    xs = np.linspace(sys.window[0], sys.window[1], samples)
    vals = np.array([gm(x) for x in xs])
    guesses = []
    for i in range(len(xs) - 1):
        if vals[i] == 0.0:
            guesses.append(xs[i])
        elif vals[i] * vals[i + 1] < 0:
            guesses.append(brentq(gm, xs[i], xs[i + 1], xtol=1e-15))
    out = []
    for x0 in guesses:
        x, y = x0, critical_value(sys, x0, p)
        for _ in range(30):
            r1, r2 = f(x, y, eps, *p), g(x, y, eps, *p)
            a, b, c, d = fx(x, y, eps, *p), fy(x, y, eps, *p), gx(x, y, eps, *p), gy(x, y, eps, *p)
            det = a * d - b * c
            if det == 0:
                break
            dx, dy = (d * r1 - b * r2) / det, (a * r2 - c * r1) / det
            x, y = x - dx, y - dy
            if abs(dx) + abs(dy) < 1e-16 * (1 + abs(x) + abs(y)):
                break
        J = (fx(x, y, eps, *p), fy(x, y, eps, *p), eps * gx(x, y, eps, *p), eps * gy(x, y, eps, *p))
        ev = np.linalg.eigvals(np.array(J).reshape(2, 2))
        ev = tuple(sorted((complex(z) for z in ev), key=lambda z: (z.real, z.imag)))
        res = max(abs(f(x, y, eps, *p)), abs(g(x, y, eps, *p)))
        if all(abs(x - q.x) > 1e-9 for q in out):
            out.append(Equilibrium(float(x), float(y), J, ev, classify_jacobian(*J), res))
    return out


# ---------------------------------------------------------------- return maps

@dataclass(frozen=True)
class Section:
    """Vertical segment {x = x0, y in [y_lo, y_hi]} crossed with sign(x') = direction."""

    x0: float
    y_lo: float
    y_hi: float
    direction: int
    spacing: str = "linear"  # seed spacing: "linear", or "geometric" in the offset from y_anchor
    y_anchor: float | None = None
    label: str = ""

    def seeds(self, n: int) -> np.ndarray:
        if self.spacing == "geometric":
            a = self.y_lo if self.y_anchor is None else self.y_anchor
            lo, hi = sorted((abs(self.y_lo - a), abs(self.y_hi - a)))
            lo = max(lo, 1e-6 * hi)
            sgn = 1.0 if self.y_hi - a >= self.y_lo - a and (self.y_hi - a) > 0 else -1.0
            return a + sgn * np.geomspace(lo, hi, n)
        return np.linspace(self.y_lo, self.y_hi, n + 2)[1:-1]

    def to_dict(self) -> dict:
        return {"x": self.x0, "y_lo": self.y_lo, "y_hi": self.y_hi, "direction": self.direction, "label": self.label}


def time_budget(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None = None) -> float:
    """10 times a crude period bound 2(omega2-omega1)/(eps*typical|g|), capped at 1e6."""
    p = sys.mu() if mu is None else tuple(mu)
    g = sys.fn("g")
    xs = np.linspace(sys.window[0], sys.window[1], 201)
    ys = np.array([critical_value(sys, x, p) for x in xs])
    gv = np.abs([g(x, y, eps, *p) for x, y in zip(xs, ys)])
    typical = float(np.median(gv)) or 1e-300
    height = float(ys.max() - ys.min()) or 1.0
    try:
        from .sysmodel import find_contact_points

        (_, w1), (_, w2) = find_contact_points(sys, p)
        height = abs(w2 - w1) or height
    except Exception:
        pass
    return 10.0 * min(2.0 * height / (eps * typical), 1e6)


def return_map(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None, section: Section, y0: float,
               tol: float = 1e-11, budget: float | None = None, reverse: bool = False,
               record: bool = False) -> tuple[float, float] | tuple[float, float, Solution]:
    """First return (y1, flight time) to ``section`` from (x0, y0)."""
    pf = planar_field(sys, eps, mu)
    T = time_budget(sys, eps, mu) if budget is None else budget
    ev = Event(lambda x, y: x - section.x0, direction=section.direction, terminal=True, name="section",
               t_min=1e-9, accept=lambda x, y: section.y_lo <= y <= section.y_hi)
    try:
        sol = integrate_planar(pf.rhs, pf.jac, (section.x0, y0), -T if reverse else T, rtol=tol,
                               atol=tol * 1e-2, events=[ev], bounds=sys.window, record=record)
    except IntegrationError as err:
        raise ReturnMapError(str(err)) from err
    if sol.status == "left_window":
        raise LeftWindowError("orbit leaves window")
    if sol.status != "section":
        raise NoReturnError("no return within the time budget")
    y1, t1 = sol.event_u[-1][1], abs(sol.event_t[-1])
    return (y1, t1, sol) if record else (y1, t1)


def _safe_return(sys, eps, mu, section, y0, tol, budget, reverse):
    try:
        return return_map(sys, eps, mu, section, y0, tol, budget, reverse)[0]
    except ReturnMapError:
        return math.nan


# ---------------------------------------------------------------- limit cycles

@dataclass
class LimitCycle:
    section: Section
    y: float
    period: float
    multiplier: float
    hyperbolic: bool
    attracting: bool
    polyline: np.ndarray
    closure_gap: float
    found_in: str
    encloses: list[int] = field(default_factory=list)
    times: np.ndarray | None = None

    @property
    def point(self) -> tuple[float, float]:
        return self.section.x0, self.y

    def to_dict(self) -> dict:
        return {"x": self.section.x0, "y": self.y, "period": self.period, "multiplier": self.multiplier,
                "hyperbolic": self.hyperbolic, "attracting": self.attracting,
                "closure_gap": self.closure_gap, "found_in": self.found_in,
                "section": self.section.to_dict(), "encloses_equilibria": self.encloses,
                "x_range": [float(self.polyline[:, 0].min()), float(self.polyline[:, 0].max())],
                "y_range": [float(self.polyline[:, 1].min()), float(self.polyline[:, 1].max())]}


def point_in_polygon(poly: np.ndarray, p: Sequence[float]) -> bool:
    x, y = p
    xs, ys = poly[:, 0], poly[:, 1]
    xj, yj = np.roll(xs, 1), np.roll(ys, 1)
    cross = ((ys > y) != (yj > y)) & (x < (xj - xs) * (y - ys) / np.where(yj != ys, yj - ys, 1e-300) + xs)
    return bool(np.count_nonzero(cross) % 2)


def default_sections(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None = None,
                     eqs: Sequence[Equilibrium] | None = None) -> list[Section]:
    """Midpoint section between the folds plus short sections above each focus or node."""
    from .sysmodel import find_contact_points

    p = sys.mu() if mu is None else tuple(mu)
    (a1, _), (a2, _) = find_contact_points(sys, p)
    xm = 0.5 * (a1 + a2)
    ym = critical_value(sys, xm, p)
    f = sys.fn("f")
    y_hi = sys.window[3]
    d = -1 if f(xm, 0.5 * (ym + y_hi), eps, *p) < 0 else 1
    out = [Section(xm, ym, y_hi, d, label="midpoint")]
    eqs = equilibria(sys, eps, p) if eqs is None else eqs
    for e in eqs:
        if e.kind == "saddle":
            continue
        others = [abs(q.x - e.x) for q in eqs if q is not e]
        reach = 0.5 * min(others) if others else 0.25 * (sys.window[3] - sys.window[2])
        yt = e.y + 1e-3 * reach
        d = -1 if f(e.x, yt, eps, *p) < 0 else 1
        out.append(Section(e.x, e.y + 1e-6 * reach, e.y + reach, d, "geometric", e.y, label=f"above x={e.x:.6g}"))
    return out


def _refine(D, lo, hi, dlo, dhi, tol):
    # Brent's method on the displacement function, then a secant polish
    try:
        y = brentq(D, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=100)
    except (ValueError, RuntimeError):
        return None
    return y


def find_limit_cycles(sys: SlowFastSystem, eps: float, mu: Sequence[float] | None = None,
                      sections: Sequence[Section] | None = None, n_seeds: int = 16, tol: float = 1e-11,
                      budget: float | None = None, time_directions: Sequence[str] = ("forward", "reverse"),
                      fd_step: float = 1e-6, dedupe: float = 1e-3) -> list[LimitCycle]:
    p = sys.mu() if mu is None else tuple(mu)
    eqs = equilibria(sys, eps, p)
    secs = default_sections(sys, eps, p, eqs) if sections is None else list(sections)
    T = time_budget(sys, eps, p) if budget is None else budget
    found: list[LimitCycle] = []
    for sec in secs:
        seeds = sec.seeds(n_seeds)
        # nested cycles sit next to already known ones, so bracket those crossings tightly
        pad = 1e-4 * (sec.y_hi - sec.y_lo)
        extra = [yc + s * pad for c in found for yc in section_crossings(c.polyline, sec) for s in (-1, 1)]
        seeds = np.unique(np.clip(np.concatenate([seeds, extra]), sec.y_lo, sec.y_hi))
        for mode in time_directions:
            rev = mode == "reverse"

            def D(y):
                y1 = _safe_return(sys, eps, p, sec, y, tol, T, rev)
                return y1 - y

            dv = [D(y) for y in seeds]
            for i in range(len(seeds) - 1):
                a, b = dv[i], dv[i + 1]
                if not (math.isfinite(a) and math.isfinite(b)) or a * b > 0:
                    continue
                Dn = lambda y: (lambda v: v if math.isfinite(v) else math.copysign(1e300, a))(D(y))  # noqa: E731
                y = seeds[i] if a == 0 else seeds[i + 1] if b == 0 else _refine(Dn, seeds[i], seeds[i + 1], a, b, tol)
                if y is None:
                    continue
                cyc = _make_cycle(sys, eps, p, sec, float(y), tol, T, rev, fd_step, eqs)
                if cyc is None:
                    continue
                # the section point's distance to an orbit bounds the Hausdorff distance from below
                if all(distance_to_polyline(cyc.point, c.polyline) >= dedupe
                       or hausdorff(cyc.polyline, c.polyline) >= dedupe for c in found):
                    found.append(cyc)
    found.sort(key=lambda c: (-float(np.ptp(c.polyline[:, 0])), c.section.x0, c.y))
    return found


def section_crossings(poly: np.ndarray, sec: Section) -> list[float]:
    """Heights where a polyline crosses the line x = x0 inside the section."""
    x = poly[:, 0] - sec.x0
    out = []
    for i in np.nonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))[0]:
        w = x[i] / (x[i] - x[i + 1]) if x[i] != x[i + 1] else 0.0
        y = poly[i, 1] + w * (poly[i + 1, 1] - poly[i, 1])
        if sec.y_lo < y < sec.y_hi:
            out.append(float(y))
    return out


def _make_cycle(sys, eps, p, sec, y, tol, T, rev, h, eqs) -> LimitCycle | None:
    try:
        y1, per, sol = return_map(sys, eps, p, sec, y, tol, T, rev, record=True)
    except ReturnMapError:
        return None
    if abs(y1 - y) >= 1e-9:
        return None
    poly = sol.u
    gap = float(np.hypot(poly[-1, 0] - sec.x0, poly[-1, 1] - y))

    def mult(reverse):
        lo = return_map(sys, eps, p, sec, y - h, tol, T, reverse)[0]
        hi = return_map(sys, eps, p, sec, y + h, tol, T, reverse)[0]
        return (hi - lo) / (2 * h)

    try:
        m = mult(False)
    except ReturnMapError:
        try:
            mr = mult(True)
            m = 1.0 / mr if mr != 0 else math.inf
        except ReturnMapError:
            m = math.nan
    encl = [k for k, e in enumerate(eqs) if point_in_polygon(poly, (e.x, e.y))]
    return LimitCycle(sec, y, per, m, bool(abs(m - 1.0) > 1e-3), bool(abs(m) < 1.0), poly, gap,
                      "reverse" if rev else "forward", encl, np.abs(sol.t))


# ---------------------------------------------------------------- Hausdorff

def _densify(p: np.ndarray, step: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if len(p) < 2:
        return p
    seg = np.diff(p, axis=0)
    n = np.maximum(1, np.ceil(np.hypot(seg[:, 0], seg[:, 1]) / step).astype(int))
    parts = [p[i] + np.outer(np.arange(n[i]) / n[i], seg[i]) for i in range(len(seg))]
    parts.append(p[-1:])
    return np.vstack(parts)


def _point_to_polyline(p: np.ndarray, b: np.ndarray, tree: cKDTree, k: int = 16) -> np.ndarray:
    """Distance from each row of p to the polyline b, via segments next to the k nearest vertices."""
    k = min(k, len(b))
    _, idx = tree.query(p, k=k)
    idx = np.atleast_2d(idx).reshape(len(p), k)
    best = np.full(len(p), np.inf)
    if len(b) == 1:
        return np.hypot(*(p - b[0]).T)
    for shift in (-1, 0):
        j = np.clip(idx + shift, 0, len(b) - 2)
        u, v = b[j], b[j + 1]
        w = v - u
        ww = np.einsum("...i,...i", w, w)
        s = np.einsum("...i,...i", p[:, None, :] - u, w) / np.where(ww == 0, 1.0, ww)
        q = u + np.clip(s, 0.0, 1.0)[..., None] * w
        best = np.minimum(best, np.hypot(*(p[:, None, :] - q).transpose(2, 0, 1)).min(axis=1))
    return best


def _directed(a: np.ndarray, b: np.ndarray, tree: cKDTree) -> float:
    """max over points of a of the distance to the polyline b."""
    return float(_point_to_polyline(a, b, tree).max())


def distance_to_polyline(p: Sequence[float], b: np.ndarray) -> float:
    b = np.asarray(b, dtype=float)
    return float(_point_to_polyline(np.asarray([p], dtype=float), b, cKDTree(b), k=min(64, len(b)))[0])


def hausdorff(a: np.ndarray, b: np.ndarray, resolution: float | None = None) -> float:
    """Symmetric Hausdorff distance between two polylines."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty polyline")
    if resolution is None:
        span = max(np.ptp(np.vstack([a, b]), axis=0).max(), 1e-12)
        resolution = 2e-4 * span
    A = _densify(a, resolution)
    B = _densify(b, resolution)
    return max(_directed(A, B, cKDTree(B)), _directed(B, A, cKDTree(A)))
