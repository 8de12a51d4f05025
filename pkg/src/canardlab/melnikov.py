"""Splitting of the chart-K2 heteroclinic orbit and the double-canard parameter curve."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from .sysmodel import CanardPointData

SQRT2PI = math.sqrt(2.0 * math.pi)


class SplittingError(Exception):
    pass


class RankDeficiencyError(Exception):
    pass


@dataclass
class MelnikovCoeffs:
    d_r2: float
    d_lambda2: float
    d_eta2: tuple[float, ...]
    path: str = "closed-form"

    def as_array(self) -> np.ndarray:
        return np.array([self.d_r2, self.d_lambda2, *self.d_eta2])

    def to_dict(self) -> dict:
        return {"path": self.path, "d_r2": self.d_r2, "d_lambda2": self.d_lambda2, "d_eta2": list(self.d_eta2)}


# ---------------------------------------------------------------- integrable system

def heteroclinic(t):
    return 0.5 * t, 0.25 * t * t - 0.5


def adjoint(t):
    w = np.exp(-0.5 * t * t)
    return -t * w, w


def first_integral(x2, y2):
    return 0.5 * np.exp(-2.0 * y2) * (y2 - x2 * x2 + 0.5)


def distance_closed_form(a: Sequence[float]) -> MelnikovCoeffs:
    a = list(a)
    if len(a) < 5:
        raise ValueError("need at least five coefficients")
    d_r = -SQRT2PI / 8.0 * (4 * a[0] - a[1] + 3 * a[2] - 2 * a[3] + 2 * a[4])
    return MelnikovCoeffs(d_r, -SQRT2PI, tuple(SQRT2PI * c for c in a[5:]), "closed-form")


def _melnikov_integral(dfield, T: float) -> float:
    # inner product of the adjoint with a parameter derivative of the field along the heteroclinic
    def integrand(t):
        x, y = heteroclinic(t)
        u, v = adjoint(t)
        p, q = dfield(x, y)
        return u * p + v * q

    val, _ = quad(integrand, -T, T, epsabs=1e-13, epsrel=1e-12, limit=400, points=[0.0])
    return val


def distance_quadrature(a: Sequence[float], T: float = 12.0) -> MelnikovCoeffs:
    if T < 10:
        raise ValueError("truncation half-width must be at least 10")
    a = list(a)
    a1, a2, a3, a4, a5 = a[:5]
    d_r = _melnikov_integral(lambda x, y: (a1 * x - a2 * x * y + a3 * x**3, a4 * x * x + a5 * y), T)
    d_l = _melnikov_integral(lambda x, y: (0.0, -1.0), T)
    d_e = tuple(_melnikov_integral(lambda x, y, c=c: (0.0, c), T) for c in a[5:])
    return MelnikovCoeffs(d_r, d_l, d_e, "quadrature")


# ---------------------------------------------------------------- chart K2

def chart2_field(a: Sequence[float], state: Sequence[float], r2: float, lam2: float,
                 eta2: Sequence[float] | float = ()) -> tuple[float, float]:
    x, y = state
    a = list(a)
    etas = np.atleast_1d(np.asarray(eta2, dtype=float)) if np.size(eta2) else np.zeros(len(a) - 5)
    xd = -y + x * x + r2 * (a[0] * x - a[1] * x * y + a[2] * x**3)
    yd = x - lam2 + r2 * (a[3] * x * x + a[4] * y) + float(np.dot(a[5:5 + len(etas)], etas))
    return xd, yd


def _crossing(a, r2, lam2, eta2, start, direction: float, budget: float, tol: float) -> float:
    def rhs(t, u):
        return chart2_field(a, u, r2, lam2, eta2)

    def hit(t, u):
        return u[0]

    hit.terminal = True
    sol = solve_ivp(rhs, (0.0, direction * budget), start, method="DOP853", events=hit,
                    rtol=tol, atol=tol * 1e-2)
    if sol.status != 1 or len(sol.y_events[0]) == 0:
        raise SplittingError("no crossing of x2 = 0 within the time budget")
    return float(sol.y_events[0][0][1])


def measure_splitting(a: Sequence[float], r2: float, lam2: float, eta2: Sequence[float] | float = (),
                      T: float = 8.0, tol: float = 1e-12) -> float:
    """Distance y2,a - y2,r between the branches at x2 = 0.

    The attracting branch is followed forward from the heteroclinic at t = -T
    and the repelling branch backward from t = +T; both are pulled onto the
    perturbed branches by the strong attraction of their own time direction.
    """
    a = list(a)
    ya = _crossing(a, r2, lam2, eta2, heteroclinic(-T), 1.0, 4 * T, tol)
    yr = _crossing(a, r2, lam2, eta2, heteroclinic(T), -1.0, 4 * T, tol)
    return ya - yr


# ---------------------------------------------------------------- canard curve

@dataclass
class CanardCurve:
    mu0: tuple[float, ...]
    eta_index: int
    A: tuple[float, float]
    B: tuple[float, float]
    C: tuple[float, float]
    lambda_slope: float
    eta_slope: float
    melnikov: list[MelnikovCoeffs] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eta_index": self.eta_index,
            "A": list(self.A),
            "B": list(self.B),
            "C": list(self.C),
            "lambda_slope": self.lambda_slope,
            "eta_slope": self.eta_slope,
        }

    def evaluate(self, eps: float) -> tuple[float, float]:
        return self.mu0[0] + self.lambda_slope * eps, self.mu0[1 + self.eta_index] + self.eta_slope * eps


def _linear_terms(p: CanardPointData, a: Sequence[float], i: int, d: MelnikovCoeffs | None = None):
    """(A, B, C) for the linearized distance equation A dl + B de = C eps at one point."""
    if d is None:
        d = distance_closed_form(a)
    P = p.partials
    z = p.zeta
    fxx, fy, gx = P["f_xx"], P["f_y"], P["g_x"]
    A = -z * fxx * p.G * d.d_lambda2 / (2.0 * gx)
    B = d.d_eta2[i]
    C = z * (fy * gx * d.d_r2 + fxx * P["g_eps"] * d.d_lambda2 / (2.0 * gx))
    return A, B, C, d


def canard_curve_expansion(pts: Sequence[CanardPointData], a_list: Sequence[Sequence[float]], i: int = 0) -> CanardCurve:
    rows = [_linear_terms(p, a, i) for p, a in zip(pts, a_list)]
    (A1, B1, C1, d1), (A2, B2, C2, d2) = rows
    det = A1 * B2 - A2 * B1
    if det == 0.0:
        raise RankDeficiencyError("A1 B2 - A2 B1 vanishes")
    ls = (B2 * C1 - B1 * C2) / det
    es = (A1 * C2 - A2 * C1) / det
    return CanardCurve(pts[0].mu, i, (A1, A2), (B1, B2), (C1, C2), ls, es, [d1, d2])


def solve_canard_pair(pts: Sequence[CanardPointData], a_list: Sequence[Sequence[float]], eps: float,
                      i: int = 0, tol: float = 1e-12, max_iter: int = 50) -> tuple[float, float]:
    """Parameters (lambda, eta_i) on the double-canard curve at ``eps``.

    Solves the two linearized distance equations simultaneously with damped
    Newton steps. The lambda~_j(eps) shift of each canard point enters
    through C_j.
    """
    terms = [_linear_terms(p, a, i) for p, a in zip(pts, a_list)]
    J = np.array([[t[0], t[1]] for t in terms])
    if abs(np.linalg.det(J)) <= 1e-14 * max(1.0, np.abs(J).max() ** 2):
        raise RankDeficiencyError("linearized canard conditions are rank deficient")

    def residual(u):
        dl, de = u
        return np.array([A * dl + B * de - C * eps for A, B, C, _ in terms])

    u = np.zeros(2)
    r = residual(u)
    for _ in range(max_iter):
        step = np.linalg.solve(J, -r)
        lam_ = 1.0
        while True:
            un = u + lam_ * step
            rn = residual(un)
            if np.linalg.norm(rn) <= (1 - 0.5 * lam_) * np.linalg.norm(r) or lam_ < 1e-4:
                break
            lam_ *= 0.5
        u, r = un, rn
        if np.linalg.norm(lam_ * step) <= tol * (1 + np.linalg.norm(u)) or np.linalg.norm(r) == 0.0:
            break
    else:
        raise RuntimeError("Newton iteration did not converge")
    mu0 = pts[0].mu
    return mu0[0] + float(u[0]), mu0[1 + i] + float(u[1])
