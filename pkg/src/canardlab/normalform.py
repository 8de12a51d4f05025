"""Canard normal form at a canard point and its a-coefficients.

The primary route reads the coefficients off third-order Taylor data of the
translated system. The oracle route evaluates the integral representation of
the remainder functions by quadrature and differentiates numerically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .sysmodel import CanardPointData, SlowFastSystem, track_contact_point


class NormalFormWarning(UserWarning):
    pass


@dataclass
class NormalFormData:
    index: int
    zeta: int
    orientation: int
    alpha: float
    omega: float
    mu0: tuple[float, ...]
    x_lam: float
    y_lam: float
    x_eta: tuple[float, ...]
    y_eta: tuple[float, ...]
    lambda_tilde_slope: float
    scales: tuple[float, float, float, float, float]  # x, y, lambda, eta, eps
    a: tuple[float, ...]
    eps_offset: float = 0.0

    @property
    def m(self) -> int:
        return len(self.a) - 5

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "zeta": self.zeta,
            "orientation": self.orientation,
            "scales": {"x": self.scales[0], "y": self.scales[1], "lambda": self.scales[2],
                       "eta": self.scales[3], "eps": self.scales[4]},
            "a": list(self.a),
            "eps_offset": self.eps_offset,
        }


def _scales(P, G: float, zeta: int) -> tuple[float, float, float, float, float]:
    fxx, fy, gx = P["f_xx"], P["f_y"], P["g_x"]
    vals = (2.0 / fxx, -2.0 / (fxx * fy), -2.0 * zeta * gx / (fxx * G), 1.0, -zeta / (fy * gx))
    if not all(math.isfinite(v) and v != 0.0 for v in vals):
        raise ValueError("degenerate normal-form scaling")
    return vals


def normal_form(sys: SlowFastSystem, pt: CanardPointData) -> NormalFormData:
    if pt.kind != "canard":
        raise ValueError("normal form requires a canard point")
    P = pt.partials
    z = pt.zeta
    fxx, fy, gx = P["f_xx"], P["f_y"], P["g_x"]
    sc = _scales(P, pt.G, z)
    a = [
        -z * P["f_xeps"] / (fy * gx),
        2.0 * P["f_xy"] / (fy * fxx),
        2.0 * P["f_xxx"] / (3.0 * fxx**2),
        P["g_xx"] / (gx * fxx),
        -z * P["g_y"] / (fy * gx),
    ]
    a += [z * fxx * b / (2.0 * gx) for b in pt.beta_eta]
    offset = -z * fxx / (2.0 * fy * gx) * P["f_eps"]
    if offset != 0.0:
        warnings.warn(
            f"f_eps = {P['f_eps']:.3g} at canard point {pt.index}: the normal form has an eps-order "
            "offset that is not covered by the a-coefficients", NormalFormWarning, stacklevel=2)
    return NormalFormData(pt.index, z, pt.orientation, pt.alpha, pt.omega, pt.mu, pt.x_lam, pt.y_lam,
                          pt.x_eta, pt.y_eta, pt.lambda_tilde_slope, sc, tuple(a), offset)


# ---------------------------------------------------------------- oracle

def _fd4(fun, h: float = 1e-4) -> float:
    return (-fun(2 * h) + 8 * fun(h) - 8 * fun(-h) + fun(-2 * h)) / (12 * h)


def a_coefficients_oracle(sys: SlowFastSystem, pt: CanardPointData, h: float = 1e-4,
                          tol: float = 1e-12) -> tuple[float, ...]:
    """a-coefficients from the integral form of the remainders, by quadrature."""
    if pt.kind != "canard":
        raise ValueError("oracle requires a canard point")
    P = pt.partials
    z = pt.zeta
    mu = pt.mu
    al, om = pt.alpha, pt.omega
    fxx0, fy0, gx0, gy0 = P["f_xx"], P["f_y"], P["g_x"], P["g_y"]
    G = pt.G
    s = pt.lambda_tilde_slope
    lam = sys.lam
    F = {k: sys.fn("f", v) for k, v in {
        "x": ("x",), "y": ("y",), "xx": ("x", "x"), "xy": ("x", "y"), "eps": ("eps",),
        "lam": (lam,), "xlam": ("x", lam), "xeps": ("x", "eps")}.items()}
    Gf = {"x": sys.fn("g", ("x",)), "y": sys.fn("g", ("y",)), "lam": sys.fn("g", (lam,))}
    for k, eta in enumerate(sys.etas):
        Gf[f"eta{k}"] = sys.fn("g", (eta,))

    def at(fn, X):
        return fn(al + X, om, 0.0, *mu)

    # derivatives of the translated functions at (X, 0, 0, 0, 0)
    def D2f(X):
        return at(F["y"], X)

    def D12f(X):
        return at(F["xy"], X)

    def D11f(X):
        return at(F["xx"], X)

    def Depsf(X):
        c = at(F["x"], X) * pt.x_lam + at(F["y"], X) * pt.y_lam + at(F["lam"], X)
        return c * s + at(F["eps"], X)

    def D1epsf(X):
        c = at(F["xx"], X) * pt.x_lam + at(F["xy"], X) * pt.y_lam + at(F["xlam"], X)
        return c * s + at(F["xeps"], X)

    def D1g(X):
        return at(Gf["x"], X)

    def D2g(X):
        return at(Gf["y"], X)

    def Detag(k):
        return lambda X: (at(Gf["x"], X) * pt.x_eta[k] + at(Gf["y"], X) * pt.y_eta[k] + at(Gf[f"eta{k}"], X))

    def q1(fun, X):
        return quad(lambda u: fun(u * X), 0.0, 1.0, epsabs=tol, epsrel=0.0, limit=200)[0]

    def q2(fun, X):
        inner = lambda u: u * quad(lambda v: fun(u * v * X), 0.0, 1.0, epsabs=tol, epsrel=0.0, limit=200)[0]
        return quad(inner, 0.0, 1.0, epsabs=tol, epsrel=0.0, limit=200)[0]

    def phihat1(X):
        return -P["f_y"] + q1(D2f, X) + X * q2(D12f, X)

    def phihat2(X):
        return -0.5 * P["f_xx"] + q2(D11f, X)

    def phihat3(X):
        return -P["f_eps"] + q1(Depsf, X) + X * q2(D1epsf, X)

    def phihat4(X):
        return -P["g_x"] + q1(D1g, X)

    def phihat6(X):
        return -P["g_y"] + q1(D2g, X)

    tx = 2.0 / fxx0  # x-scale of the rescaling map
    phi1 = lambda x: phihat1(tx * x) / fy0
    phi2 = lambda x: 2.0 / fxx0 * phihat2(tx * x)
    phi3 = lambda x: -z * fxx0 / (2.0 * fy0 * gx0) * (P["f_eps"] + phihat3(tx * x))
    phi4 = lambda x: phihat4(tx * x) / gx0
    a1 = _fd4(phi3, h)
    a2 = _fd4(phi1, h)
    a3 = _fd4(phi2, h)
    a4 = _fd4(phi4, h)
    a5 = -z / (fy0 * gx0) * (gy0 + phihat6(0.0))
    out = [a1, a2, a3, a4, a5]
    for k in range(sys.m):
        beta = pt.beta_eta[k]
        hat = -beta + q1(Detag(k), 0.0)
        out.append(z * fxx0 / (2.0 * gx0) * (beta + hat))
    return tuple(out)


# ---------------------------------------------------------------- fields

def normalized_field(nf: NormalFormData, state: Sequence[float], lam: float, eta: Sequence[float] | float,
                     eps: float) -> tuple[float, float]:
    """Truncated normal form keeping the terms that survive to first order in chart K2."""
    x, y = state
    a = nf.a
    etas = np.atleast_1d(np.asarray(eta, dtype=float))
    xd = -y * (1.0 + a[1] * x) + x * x * (1.0 + a[2] * x) + eps * (a[0] * x + nf.eps_offset)
    yd = eps * (nf.zeta * x * (1.0 + a[3] * x) - lam + a[4] * y + float(np.dot(a[5:], etas)))
    return xd, yd


def pulled_back_field(sys: SlowFastSystem, nf: NormalFormData, state: Sequence[float], lam: float,
                      eta: Sequence[float] | float, eps: float) -> tuple[float, float]:
    """The original field written in normal-form coordinates (no truncation).

    Contact-point translation uses the exact continued contact point; the
    breaking-parameter shift uses the linear lambda~(eps).
    """
    X, Y = state
    sx, sy, sl, se, seps = nf.scales
    etas = np.atleast_1d(np.asarray(eta, dtype=float))
    e_old = seps * eps
    mu = list(nf.mu0)
    mu[0] += sl * lam + nf.lambda_tilde_slope * e_old
    for k in range(len(etas)):
        mu[1 + k] += se * etas[k]
    xt, yt = track_contact_point(sys, (nf.alpha, nf.omega), mu)
    x = xt + sx * X
    y = yt + sy * Y
    f = sys.fn("f")(x, y, e_old, *mu)
    g = sys.fn("g")(x, y, e_old, *mu)
    return f / sx, e_old * g / sy
