import dataclasses
import math

import numpy as np
import pytest

from quadhjb.barriers import RationalBarrier, quadratic_barrier_constants
from quadhjb.core import ConfigurationError, GrowthConstants, Orientation, ProblemSpec, ScalarHForm
from quadhjb.presets import preset
from quadhjb.riccati import lq_value, phi_abs_max
from quadhjb.solver import Grid, solve
from quadhjb.verification import (
    NUMERIC_TOL,
    comparison_check,
    distance,
    growth_check,
    hopf_lax_oracle,
    residual_check,
    sample_field,
)

GRID = Grid.uniform(-3.0, 3.0, 0.1)
TIMES = np.linspace(0.0, 0.03, 4)


def test_comparison_of_quadratic_barrier_pair():
    sub, sup = quadratic_barrier_constants(GrowthConstants(1.0, 1.0, 1.0))
    times = np.linspace(0.0, sup.tau, 5)
    U = sample_field(sub.value, GRID, times)
    rep = comparison_check(U, sup.value)
    assert rep.passed and rep.max_violation <= 0


def test_comparison_identity_and_antisymmetry():
    f = sample_field(lambda x, t: np.sin(x[..., 0]) * (1 + t), GRID, TIMES)
    same = comparison_check(f, f)
    assert same.passed and same.max_violation == 0.0
    g = sample_field(lambda x, t: np.sin(x[..., 0]) * (1 + t) + 0.01 * np.exp(-((x[..., 0] - 1) ** 2)), GRID, TIMES)
    up, down = comparison_check(g, f), comparison_check(f, g)
    assert not up.passed and up.max_violation == pytest.approx(0.01)
    assert up.point[0] == pytest.approx((1.0,))
    # g - f is positive everywhere, so the reverse check sees its minimum
    assert down.passed and down.max_violation < 0
    h = sample_field(lambda x, t: np.sin(x[..., 0]) * (1 + t) + 0.01 * x[..., 0], GRID, TIMES)
    a, b = comparison_check(h, f), comparison_check(f, h)
    assert a.max_violation == pytest.approx(b.max_violation)  # odd perturbation: symmetric extremes
    with pytest.raises(ConfigurationError):
        comparison_check(f, sample_field(lambda x, t: x[..., 0], Grid.uniform(-1, 1, 0.1), TIMES))


def test_lq_solution_below_rational_barrier():
    p = preset("lq")
    f = solve(p.spec, p.grid, p.scheme)
    T = p.spec.horizon
    b = RationalBarrier(K=phi_abs_max(p.riccati) + 1.0, L=0.5, R=1e-3)
    rep = comparison_check(f, lambda x, t: b.value(x, T - t))
    assert rep.passed


def test_growth_examples():
    zero = sample_field(lambda x, t: np.zeros(x.shape[:-1]), GRID, TIMES)
    assert growth_check(zero, 1.0).max_ratio == 0.0
    p = preset("lq")
    f = solve(p.spec, p.grid, p.scheme)
    assert growth_check(f, phi_abs_max(p.riccati) + 0.05).passed
    wild = sample_field(lambda x, t: np.exp(np.abs(x[..., 0])), Grid.uniform(-10, 10, 0.5), [0.0])
    rep = growth_check(wild, 1.0)
    assert not rep.passed
    assert abs(rep.point[0][0]) == 10.0


def test_hopf_lax_examples():
    sq = lambda y: np.sum(np.asarray(y) ** 2, axis=-1)
    assert hopf_lax_oracle(sq, 1.0, 0.5, 0.25) == pytest.approx(0.125, abs=1e-10)
    assert hopf_lax_oracle(sq, 1.0, 0.7, 1e-12) == pytest.approx(0.49, abs=1e-9)
    assert hopf_lax_oracle(sq, 1.0, 0.7, 0.0) == pytest.approx(0.49)
    assert hopf_lax_oracle(lambda y: 3.0 + 0 * y[..., 0], 2.0, -1.0, 0.5) == pytest.approx(3.0)
    for x in (-2.0, 0.3, 4.0):
        for h, t in ((0.5, 0.1), (2.0, 1.0)):
            assert hopf_lax_oracle(sq, h, x, t) == pytest.approx(x * x / (1 + 4 * h * t), abs=1e-9)
    with pytest.raises(ConfigurationError):
        hopf_lax_oracle(sq, 0.0, 1.0, 1.0)


def test_residual_examples():
    p = preset("lq")
    grid = Grid.uniform(-2.0, 2.0, 1e-2)
    rep = residual_check(lambda x, t: lq_value(p.riccati, x[..., 0], t), p.spec, grid, dt=1e-2)
    assert rep.max_residual <= 1e-3
    zero_spec = ProblemSpec((), lambda x: np.zeros(x.shape[:-1]), 1.0, GrowthConstants(1, 1, 1))
    zero = residual_check(lambda x, t: np.zeros(x.shape[:-1]), zero_spec, grid)
    assert zero.max_residual == 0.0


def test_hopf_lax_field_residual():
    q = preset("const-h")
    w = lambda x, t: x[..., 0] ** 2 / (1 + 4 * t)
    # space differences are exact on quadratics; the time difference errs by
    # dt^2/6 |w_ttt| = 64 x^2 dt^2 / (1 + 4t)^4, below 1e-3 for |x| < 0.39
    near = residual_check(w, q.spec, Grid.uniform(-0.35, 0.35, 1e-2), dt=1e-2)
    assert near.max_residual <= 1e-3
    wide = Grid.uniform(-2.0, 2.0, 1e-2)
    coarse, fine = (residual_check(w, q.spec, wide, dt=dt).max_residual for dt in (1e-2, 5e-3))
    assert coarse <= 64 * 4 * 1e-4 * 1.01
    assert 3.5 <= coarse / fine <= 4.5


def test_residual_detects_wrong_field():
    p = preset("lq")
    grid = Grid.uniform(-2.0, 2.0, 1e-2)
    rep = residual_check(lambda x, t: -x[..., 0] ** 2, p.spec, grid)
    assert rep.max_residual > 0.1


def test_sign_h_ordering():
    p = preset("sign-h")
    lo = solve(p.with_data(lambda x: 0.2 * x[..., 0] ** 2 - 0.1).spec, p.grid, p.scheme)
    hi = solve(p.spec, p.grid, p.scheme)
    assert comparison_check(lo, hi, NUMERIC_TOL).passed


def test_risk_sensitive_sweep_nonincreasing():
    base = preset("robust-limit")
    f0 = solve(base.spec, base.grid, base.scheme)
    dists = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        p = preset("risk-sensitive", eps=eps)
        dists.append(distance(solve(p.spec, p.grid, p.scheme), f0))
    assert all(a >= b for a, b in zip(dists, dists[1:]))
    assert dists[-1] < dists[0]


def test_sample_field_terminal_orientation():
    f = sample_field(lambda x, t: t + 0 * x[..., 0], GRID, [1.0, 0.5, 0.0], Orientation.TERMINAL, 1.0)
    assert np.allclose(f.march_times, [0.0, 0.5, 1.0])
    assert f.layers[0][0] == 1.0 and math.isclose(f.norm_history[1], 0.5)


def test_comparison_radius_ignores_box_edge():
    f = sample_field(lambda x, t: np.zeros(x.shape[:-1]), GRID, TIMES)
    g = sample_field(lambda x, t: -(np.abs(x[..., 0]) > 2.5).astype(float), GRID, TIMES)
    assert not comparison_check(f, g).passed
    rep = comparison_check(f, g, radius=2.5)
    assert rep.passed and rep.max_violation == 0.0


def test_comparison_rejects_blown_up_field():
    p = preset("lq-blowup")
    f = solve(p.spec, p.grid, p.scheme)
    with pytest.raises(ConfigurationError):
        comparison_check(f, f)


@pytest.mark.parametrize("freq", [2.0, 6.0, 12.0])
def test_ordering_stress_oscillating_h(freq):
    base = preset("sign-h")
    spec = dataclasses.replace(base.spec, terms=(ScalarHForm(lambda x: np.sin(freq * x[..., 0]) ** 3),))
    low = dataclasses.replace(spec, data=lambda x: 0.25 * x[..., 0] ** 2 - 0.05 * np.cos(1.3 * x[..., 0]) ** 2)
    f1, f2 = solve(low, base.grid, base.scheme), solve(spec, base.grid, base.scheme)
    assert comparison_check(f1, f2, NUMERIC_TOL).passed
