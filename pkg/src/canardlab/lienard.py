"""Cubic Liénard systems with quadratic damping.

Normalization to F(x) = -x^3/3 + x^2/2, and tracing of the large cycle at
the edge of the canard window in coordinates that keep the tiny breaking
offset resolvable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .sysmodel import SlowFastSystem
from . import tracer as tr

F0_COEFFS = (0.0, 0.0, 0.5, -1.0 / 3.0)  # ascending powers


class LienardError(ValueError):
    pass


@dataclass
class LienardSpec:
    """x' = F(x) - y, y' = eps (eta + lam (x - shift) - F(x)) with cubic F.

    ``coeffs`` are ascending (c0, c1, c2, c3). Alternatively give (u, nu) for
    F = u x^3/3 - u nu x^2/2, i.e. F'(x) = u x (x - nu).
    """

    coeffs: tuple[float, float, float, float] | None = None
    u: float | None = None
    nu: float | None = None
    eta: float = 1.0 / 12.0
    lam: float = 1.0 / 6.0
    eps: float = 0.01
    shift: float = 0.0

    def cubic(self) -> Polynomial:
        if self.coeffs is not None:
            return Polynomial([float(c) for c in self.coeffs])
        if self.u is None or self.nu is None:
            raise LienardError("give either cubic coefficients or (u, nu)")
        if self.u == 0:
            raise LienardError("u must be nonzero")
        if not self.nu > 0:
            raise LienardError("nu must be positive")
        return Polynomial([0.0, 0.0, -0.5 * self.u * self.nu, self.u / 3.0])


@dataclass
class NormalizationRecord:
    """Affine change x = p + nu X, y = F(p) + k Y, t = tau T."""

    p: float
    Fp: float
    u: float
    nu: float
    k: float
    tau: float
    shift: float
    coeffs: tuple[float, ...]  # normalized cubic, ascending
    eta: float
    lam: float
    eps: float
    time_reversed: bool = False

    def forward(self, eta: float, lam: float, eps: float) -> tuple[float, float, float]:
        eta_bar = eta + lam * (self.p - self.shift) - self.Fp
        lam_n = -lam / (self.u * self.nu**2)
        eta_n = -eta_bar / (self.u * self.nu**3) + 0.5 * lam_n
        return eta_n, lam_n, self.tau * eps

    def inverse(self, eta_n: float, lam_n: float, eps_n: float) -> tuple[float, float, float]:
        lam = -self.u * self.nu**2 * lam_n
        eta_bar = -self.u * self.nu**3 * (eta_n - 0.5 * lam_n)
        return eta_bar - lam * (self.p - self.shift) + self.Fp, lam, eps_n / self.tau

    def to_dict(self) -> dict:
        return {"p": self.p, "F(p)": self.Fp, "u": self.u, "nu": self.nu, "k": self.k, "tau": self.tau,
                "shift": self.shift, "normalized_F": list(self.coeffs), "eta": self.eta, "lambda": self.lam,
                "eps": self.eps, "time_reversed": self.time_reversed}


@dataclass
class NormalizationResult:
    verdict: str  # "normalized" or "no limit cycles"
    system: SlowFastSystem | None = None
    record: NormalizationRecord | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "detail": self.detail,
                "record": None if self.record is None else self.record.to_dict()}


def _poly_text(c: Sequence[float], var: str = "x") -> str:
    terms = []
    for n, a in enumerate(c):
        if a == 0.0:
            continue
        mono = "" if n == 0 else var if n == 1 else f"{var}^{n}"
        terms.append(f"({a!r})" + (f"*{mono}" if mono else ""))
    return " + ".join(terms) if terms else "0"


def lienard_system(coeffs: Sequence[float] = F0_COEFFS, eta: float = 1.0 / 12.0, lam: float = 1.0 / 6.0,
                   eps: float | None = None, window=(-1.0, 2.0, -1.0, 1.0)) -> SlowFastSystem:
    if tuple(coeffs) == F0_COEFFS:
        F = "(-x^3/3 + x^2/2)"
    else:
        F = f"({_poly_text(coeffs)})"
    return SlowFastSystem.from_strings(f"{F} - y", f"eta + lambda*(x - 1/2) - {F}",
                                       base={"lambda": lam, "eta": eta}, window=window, eps=eps)


def normalize_lienard(spec: LienardSpec) -> NormalizationResult:
    F = spec.cubic().trim()
    if F.degree() != 3:
        raise LienardError("F must be a cubic")
    roots = F.deriv().roots()
    if np.iscomplexobj(roots) and np.any(np.abs(np.imag(roots)) > 0) or len(set(np.round(roots.real, 14))) < 2:
        return NormalizationResult("no limit cycles",
                                   detail="F' does not change sign, so the divergence F'(x) is single-signed")
    r1, r2 = sorted(float(np.real(r)) for r in roots)
    u = 3.0 * F.coef[3]
    nu = r2 - r1
    p = r1
    Fp = float(F(p))
    k = -u * nu**3
    tau = -1.0 / (u * nu**2)
    composed = (F(Polynomial([p, nu])) - Fp) / k
    c = tuple(float(v) for v in np.pad(composed.coef, (0, 4))[:4])
    rec = NormalizationRecord(p, Fp, u, nu, k, tau, spec.shift, c, *(0.0, 0.0, 0.0), time_reversed=tau < 0)
    rec.eta, rec.lam, rec.eps = rec.forward(spec.eta, spec.lam, spec.eps)
    clean = c if np.allclose(c, F0_COEFFS, atol=1e-12, rtol=0) else None
    sys = lienard_system(F0_COEFFS if clean else c, rec.eta, rec.lam, rec.eps)
    return NormalizationResult("normalized", sys, rec)


# ---------------------------------------------------------------- canard-window edge

def canard_lambda(eps: float) -> float:
    """Breaking parameter at which y = F(x) + eps (x/3 - 1/6) is invariant (eta = 1/12)."""
    return 1.0 / 6.0 - eps / 9.0


def invariant_curve(x, eps: float):
    x = np.asarray(x, dtype=float)
    return -x**3 / 3.0 + x**2 / 2.0 + eps * (x / 3.0 - 1.0 / 6.0)


def offset_system(window=(-1.0, 2.0, -2.0, 2.0)) -> SlowFastSystem:
    """Normalized Liénard system at eta = 1/12, lambda = canard_lambda(eps) + delta,
    written in (x, w) with w = y - invariant_curve(x); 'y' here holds w."""
    return SlowFastSystem.from_strings(
        "-eps*(x - 1/2)/3 - y",
        "((x - x^2) + eps/3)*y/eps + delta*(x - 1/2)",
        lam="delta", etas=("eta",), base={"delta": 0.0, "eta": 0.0}, window=window)


@dataclass
class EdgeCycle:
    eps: float
    delta: float
    log10_delta: float
    bracket: tuple[float, float]
    y: float
    period: float
    polyline: np.ndarray
    evaluations: int
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "log10_delta_bracket": list(self.bracket),
                "lambda_offset_path": "traced", "section_y": self.y, "period": self.period,
                "x_range": [float(self.polyline[:, 0].min()), float(self.polyline[:, 0].max())],
                "evaluations": self.evaluations}


def _settle(run: Callable[[float], float], y0: float, tol: float, max_iter: int) -> float | None:
    y = y0
    for _ in range(max_iter):
        try:
            yn = run(y)
        except tr.ReturnMapError:
            return None
        if abs(yn - y) < tol:
            return yn
        y = yn
    return None


def edge_cycle(eps: float, y0: float = 0.15, log_hi: float = -2.0, log_lo: float = -300.0,
               bisections: int = 14, tol: float = 1e-11) -> EdgeCycle:
    """Large attracting cycle closest to the canard curve.

    Exactly on the curve the large cycle is absent; it exists for
    delta = lambda - canard_lambda(eps) above a saddle-node value. The edge
    is bracketed in log10(delta) and the last existing cycle returned.
    """
    sys = offset_system()
    sec = tr.Section(0.5, 0.0, 1.0, -1, label="x=1/2 upper")
    budget = 40.0 / eps
    count = 0

    def exists(logd, start):
        nonlocal count
        mu = (10.0**logd, 0.0)

        def run(y):
            nonlocal count
            count += 1
            return tr.return_map(sys, eps, mu, sec, y, tol=tol, budget=budget)[0]

        return _settle(run, start, 1e-10, 60)

    # y0 is given in original coordinates; at x = 1/2 the offset is y - 1/12
    start = y0 - 1.0 / 12.0
    hi, last = log_hi, exists(log_hi, start)
    if last is None:
        raise tr.NoReturnError("no large cycle at the upper end of the bracket")
    lo = None
    k = log_hi
    while k > log_lo:
        k -= 1.0
        r = exists(k, last)
        if r is None:
            lo = k
            break
        hi, last = k, r
    if lo is None:
        raise tr.ReturnMapError("large cycle persists to the bottom of the bracket")
    for _ in range(bisections):
        m = 0.5 * (lo + hi)
        r = exists(m, last)
        if r is None:
            lo = m
        else:
            hi, last = m, r
    mu = (10.0**hi, 0.0)
    y1, per, sol = tr.return_map(sys, eps, mu, sec, last, tol=tol, budget=budget, record=True)
    poly = np.column_stack([sol.u[:, 0], sol.u[:, 1] + invariant_curve(sol.u[:, 0], eps)])
    return EdgeCycle(eps, 10.0**hi, hi, (lo, hi), float(last + 1.0 / 12.0), per, poly, count)


def check_offset_field(eps: float, delta: float, x: float, w: float) -> tuple[float, float]:
    """Mismatch between the offset field and the original field pushed through w = y - C(x)."""
    lam = canard_lambda(eps) + delta
    y = float(invariant_curve(x, eps)) + w
    F = -x**3 / 3 + x**2 / 2
    xd = F - y
    yd = eps * (1 / 12 + lam * (x - 0.5) - F)
    wd = yd - (-x * x + x + eps / 3) * xd
    sys = offset_system()
    pf = tr.planar_field(sys, eps, (delta, 0.0))
    a, b = pf.rhs(x, w)
    return a - xd, b - wd
