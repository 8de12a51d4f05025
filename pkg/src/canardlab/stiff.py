"""Fourth-order A-stable Rosenbrock integrator for planar autonomous systems.

Coefficients are Shampine's (the set used by the classic ``stiff`` routine):
    (I/(gamma h) - J) k_i = F(u + sum a_ij k_j) + sum c_ij k_j / h
with an embedded third-order error estimate. The stability function tends
to a constant of modulus below one as h*lambda -> -inf, so stiff modes are
damped geometrically rather than annihilated in a single step. Dense output is the cubic
Hermite interpolant through the step endpoints, whose derivatives are the
field values, so event location needs no extra stages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

GAM = 0.5
A21 = 2.0
A31, A32 = 48.0 / 25.0, 6.0 / 25.0
C21 = -8.0
C31, C32 = 372.0 / 25.0, 12.0 / 5.0
C41, C42, C43 = -112.0 / 125.0, -54.0 / 125.0, -2.0 / 5.0
B1, B2, B3, B4 = 19.0 / 9.0, 0.5, 25.0 / 108.0, 125.0 / 108.0
E1, E2, E3, E4 = 17.0 / 54.0, 7.0 / 36.0, 0.0, 125.0 / 108.0

SAFETY, GROW, SHRINK = 0.9, 1.5, 0.5
PGROW, PSHRINK = -0.25, -1.0 / 3.0


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


Field2 = Callable[[float, float], tuple[float, float]]
Jac2 = Callable[[float, float], tuple[float, float, float, float]]


@dataclass
class Event:
    """Zero of ``fun(x, y)``; direction +1 for increasing, -1 for decreasing, 0 for both."""

    fun: Callable[[float, float], float]
    direction: int = 0
    terminal: bool = True
    name: str = "event"
    t_min: float = 0.0  # crossings earlier than this (in |t|) are ignored
    accept: Callable[[float, float], bool] | None = None


@dataclass
class Solution:
    t: np.ndarray
    u: np.ndarray
    steps: int
    rejected: int
    status: str
    event_t: list[float] = field(default_factory=list)
    event_u: list[tuple[float, float]] = field(default_factory=list)
    event_name: list[str] = field(default_factory=list)


def _hermite(t0, u0, f0, t1, u1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return (h00 * u0[0] + h10 * h * f0[0] + h01 * u1[0] + h11 * h * f1[0],
            h00 * u0[1] + h10 * h * f0[1] + h01 * u1[1] + h11 * h * f1[1])


def integrate_planar(rhs: Field2, jac: Jac2, start: Sequence[float], t_end: float, rtol: float = 1e-10,
                     atol: float | Sequence[float] | None = None, events: Sequence[Event] = (),
                     h0: float | None = None, max_steps: int = 2_000_000,
                     bounds: tuple[float, float, float, float] | None = None,
                     record: bool = True, t_event_tol: float = 1e-12,
                     fixed_step: float | None = None) -> Solution:
    """Integrate u' = rhs(u) from t = 0 to ``t_end`` (which may be negative).

    ``fixed_step`` disables error control (used for order checks).
    """
    sgn = 1.0 if t_end >= 0 else -1.0
    T = abs(t_end)
    if sgn < 0:
        f_, j_ = rhs, jac
        rhs = lambda x, y: tuple(-v for v in f_(x, y))  # noqa: E731
        jac = lambda x, y: tuple(-v for v in j_(x, y))  # noqa: E731
    if atol is None:
        atol = rtol
    at0, at1 = (atol, atol) if np.isscalar(atol) else (float(atol[0]), float(atol[1]))
    x, y = float(start[0]), float(start[1])
    fx, fy = rhs(x, y)
    h = h0 if h0 is not None else min(T, 1e-3 * max(1.0, T * 1e-3)) if T > 0 else 0.0
    h = max(h, 1e-12)
    if fixed_step is not None:
        h = float(fixed_step)
    t = 0.0
    ts, xs, ys = [0.0], [x], [y]
    steps = rejected = 0
    ev_vals = [e.fun(x, y) for e in events]
    out_t, out_u, out_n = [], [], []
    status = "completed"
    if T == 0.0:
        return Solution(np.array(ts), np.column_stack([xs, ys]), 0, 0, status)
    while t < T:
        if steps >= max_steps:
            status = "max_steps"
            break
        if t + h > T:
            h = T - t
        a, b, c, d = jac(x, y)
        gi = 1.0 / (GAM * h)
        m11, m12, m21, m22 = gi - a, -b, -c, gi - d
        det = m11 * m22 - m12 * m21
        if det == 0.0 or not math.isfinite(det):
            h *= 0.25
            rejected += 1
            if h < 1e-14 * max(1.0, t):
                raise StepSizeUnderflow(f"singular stage matrix at t={sgn * t!r}")
            continue
        inv = 1.0 / det

        def solve(r0, r1):
            return (m22 * r0 - m12 * r1) * inv, (m11 * r1 - m21 * r0) * inv

        g1 = solve(fx, fy)
        f2 = rhs(x + A21 * g1[0], y + A21 * g1[1])
        g2 = solve(f2[0] + C21 * g1[0] / h, f2[1] + C21 * g1[1] / h)
        f3 = rhs(x + A31 * g1[0] + A32 * g2[0], y + A31 * g1[1] + A32 * g2[1])
        g3 = solve(f3[0] + (C31 * g1[0] + C32 * g2[0]) / h, f3[1] + (C31 * g1[1] + C32 * g2[1]) / h)
        g4 = solve(f3[0] + (C41 * g1[0] + C42 * g2[0] + C43 * g3[0]) / h,
                   f3[1] + (C41 * g1[1] + C42 * g2[1] + C43 * g3[1]) / h)
        xn = x + B1 * g1[0] + B2 * g2[0] + B3 * g3[0] + B4 * g4[0]
        yn = y + B1 * g1[1] + B2 * g2[1] + B3 * g3[1] + B4 * g4[1]
        ex = E1 * g1[0] + E2 * g2[0] + E3 * g3[0] + E4 * g4[0]
        ey = E1 * g1[1] + E2 * g2[1] + E3 * g3[1] + E4 * g4[1]
        sx = at0 + rtol * max(abs(x), abs(xn))
        sy = at1 + rtol * max(abs(y), abs(yn))
        err = max(abs(ex) / sx, abs(ey) / sy)
        if not math.isfinite(err):
            err = 1e10
        if fixed_step is not None:
            err = 0.0
        if err > 1.0:
            rejected += 1
            h = max(SAFETY * h * err**PSHRINK, SHRINK * h)
            if h < 1e-14 * max(1.0, t):
                raise StepSizeUnderflow(f"step size underflow at t={sgn * t!r}")
            continue
        # accepted
        fxn, fyn = rhs(xn, yn)
        tn = t + h
        steps += 1
        hit = None
        for k, e in enumerate(events):
            vn = e.fun(xn, yn)
            v0 = ev_vals[k]
            ev_vals[k] = vn
            dirn = e.direction * sgn
            up = v0 < 0.0 <= vn
            down = v0 > 0.0 >= vn
            if not ((up and dirn >= 0) or (down and dirn <= 0)):
                continue
            p0, p1 = (x, y), (xn, yn)
            q0, q1 = (fx, fy), (fxn, fyn)
            fun = lambda s: e.fun(*_hermite(t, p0, q0, tn, p1, q1, s))  # noqa: E731
            try:
                te = brentq(fun, t, tn, xtol=t_event_tol, rtol=1e-15)
            except ValueError:
                te = tn
            ue = _hermite(t, p0, q0, tn, p1, q1, te)
            if te < e.t_min:
                continue
            if e.accept is not None and not e.accept(*ue):
                continue
            if hit is None or te < hit[0]:
                hit = (te, ue, e)
        if hit is not None:
            te, ue, e = hit
            out_t.append(sgn * te)
            out_u.append(ue)
            out_n.append(e.name)
            if e.terminal:
                if record:
                    ts.append(te)
                    xs.append(ue[0])
                    ys.append(ue[1])
                status = e.name
                t, x, y = te, ue[0], ue[1]
                break
        t, x, y, fx, fy = tn, xn, yn, fxn, fyn
        if record:
            ts.append(t)
            xs.append(x)
            ys.append(y)
        if bounds is not None and not (bounds[0] <= x <= bounds[1] and bounds[2] <= y <= bounds[3]):
            status = "left_window"
            break
        if fixed_step is None:
            h *= GROW if err == 0.0 else min(GROW, SAFETY * err**PGROW)
    if not record:
        ts.append(t)
        xs.append(x)
        ys.append(y)
    return Solution(sgn * np.array(ts), np.column_stack([xs, ys]), steps, rejected, status, out_t, out_u, out_n)
