from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from canardlab import slowgeom as sg
from canardlab.lienard import lienard_system

S1_FIXTURE = 0.12437363498778463
S2_FIXTURE = 0.042293031678882036


def antiderivative(x):
    return 1.5 * x * x - 1.5 * x - 0.75 * math.log(abs(2 * x - 1))


@pytest.fixture(scope="module")
def lien():
    return lienard_system()


def F(x):
    return -x**3 / 3 + x**2 / 2


def test_level_roots_at_saddle_height(lien):
    L, M, R = sg.level_roots(lien, 1 / 12)
    r3 = math.sqrt(3)
    assert (L, M, R) == pytest.approx(((1 - r3) / 2, 0.5, (1 + r3) / 2), abs=1e-12)
    for x in (L, M, R):
        assert abs(F(x) - 1 / 12) < 1e-10


def test_level_roots_collide_at_folds(lien):
    L, M, _ = sg.level_roots(lien, 1e-10)
    assert abs(L) < 1e-4 and abs(M) < 1e-4 and L < 0 < M
    _, M, R = sg.level_roots(lien, 1 / 6 - 1e-10)
    assert abs(M - 1) < 1e-4 and abs(R - 1) < 1e-4 and M < 1 < R


def test_level_outside_range(lien):
    with pytest.raises(sg.LevelError):
        sg.level_roots(lien, 0.2)
    with pytest.raises(sg.LevelError):
        sg.level_roots(lien, -0.01)


def test_divergence_integral_value(lien):
    assert sg.slow_divergence_integral(lien, -0.2, 0.0) == pytest.approx(-0.1076458225, abs=1e-9)
    assert sg.slow_divergence_integral(lien, 0.3, 0.3) == 0.0


def test_additivity(lien):
    a = sg.slow_divergence_integral(lien, -0.5, -0.1)
    b = sg.slow_divergence_integral(lien, -0.1, 0.3)
    assert a + b == pytest.approx(sg.slow_divergence_integral(lien, -0.5, 0.3), abs=1e-9)


def test_interior_zero_of_slow_flow(lien):
    with pytest.raises(sg.DivergentIntegralError) as info:
        sg.slow_divergence_integral(lien, 0.2, 0.8)
    assert info.value.zero == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.booleans(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_matches_antiderivative(right, u, v):
    lo, hi = (0.55, 1.8) if right else (-0.8, 0.45)
    x1, x2 = lo + (hi - lo) * u, lo + (hi - lo) * v
    I = sg.slow_divergence_integral(lienard_system(), x1, x2)
    assert abs(I - (antiderivative(x2) - antiderivative(x1))) < 1e-8


def test_removable_singularity_at_folds(lien):
    for a in (0.0, 1.0):
        for side in (-1, 1):
            near = abs(sg.divergence_integrand(lien, a + side * 1e-6))
            far = abs(sg.divergence_integrand(lien, a + side * 1e-3))
            assert near <= 10 * far


def test_cycle_integral_signs(lien):
    I1, I2, I3, I4 = sg.cycle_integrals(lien, 0.10, 0.04)
    assert all(np.isfinite([I1, I2, I3, I4]))
    assert I1 < 0 < I2


def test_cycle_integrals_against_antiderivative(lien):
    s1, s2 = 0.10, 0.04
    L1, M1, _ = sg.level_roots(lien, s1)
    _, M2, R2 = sg.level_roots(lien, s2)
    A = antiderivative
    ref = (A(0) - A(L1), A(M2) - A(0), A(1) - A(R2), A(M1) - A(1))
    np.testing.assert_allclose(sg.cycle_integrals(lien, s1, s2), ref, atol=1e-8)


def test_second_integral_vanishes_with_s2(lien):
    vals = [abs(sg.cycle_integrals(lien, 0.1, s)[1]) for s in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-5


def test_outside_omega(lien):
    with pytest.raises(sg.OutsideOmegaError):
        sg.cycle_integrals(lien, 0.05, 0.04)


def test_cycle_pair(lien):
    roots = sg.find_cycle_pair(lien)
    assert len(roots) == 1
    r = roots[0]
    assert max(abs(v) for v in sg.cycle_residual(lien, r.s1, r.s2)) < 1e-8
    assert abs(r.jacobian_det) > 1e-8
    assert r.s1 == pytest.approx(S1_FIXTURE, abs=1e-9)
    assert r.s2 == pytest.approx(S2_FIXTURE, abs=1e-9)


def test_repelling_branch_derivative_positive(lien):
    h = 1e-6
    for s2 in (0.01, 0.04, 0.07):
        d = (sg.cycle_integrals(lien, 0.12, s2 + h)[1] - sg.cycle_integrals(lien, 0.12, s2 - h)[1]) / (2 * h)
        assert d > 0


def test_build_cycle_geometry(lien):
    c = sg.build_cycle(lien, 0.10, 0.04)
    arcs = [a for _, a in c.arcs]
    for a, b in zip(arcs, arcs[1:] + arcs[:1]):
        assert np.hypot(*(a[-1] - b[0])) < 1e-10
    assert c.h1 == pytest.approx(0.10) and c.h2 == pytest.approx(0.04)
    for tag, arc in c.arcs:
        if tag.startswith("fast"):
            assert np.all(arc[:, 1] == arc[0, 1])
            assert all(abs(F(x) - arc[0, 1]) < 1e-10 for x in arc[:, 0])
    assert c.alpha_L1 < 0 < c.alpha_M1 < 1 < c.alpha_R2
    assert 0 < c.alpha_M2 < 1
