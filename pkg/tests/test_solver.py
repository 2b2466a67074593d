import math

import numpy as np
import pytest

from quadhjb.barriers import quadratic_barrier_constants
from quadhjb.core import (
    ConfigurationError,
    ControlAffineDynamics,
    GrowthConstants,
    Orientation,
    ProblemSpec,
    RunningCost,
    SigmaForm,
    SupCompactGrid,
    SupQuadraticClosedForm,
    constant_field,
)
from quadhjb.presets import preset
from quadhjb.riccati import blowup_time, lq_value
from quadhjb.solver import (
    Grid,
    SchemeConfig,
    boundary_ghosts,
    cfl_bound,
    numerical_gradient,
    numerical_hessian_diag,
    one_sided_differences,
    second_differences,
    solve,
    step,
)
from quadhjb.verification import comparison_check, max_relative_error, sample_field, self_convergence

ZERO = lambda x: np.zeros(np.asarray(x).shape[:-1])


def _heat_spec(a=0.5):
    dyn = ControlAffineDynamics(b_mat=constant_field([[0.0]]), sigma=constant_field([[math.sqrt(a)]]))
    return ProblemSpec((SupQuadraticClosedForm(dyn, RunningCost(1.0)),), ZERO, 1.0, GrowthConstants(1, 1, 1))


def test_grid_invariants():
    g = Grid.uniform(-1.0, 1.0, 0.25)
    assert g.n == (9,) and g.dx == pytest.approx((0.25,))
    assert g.points.shape == (9, 1)
    with pytest.raises(ConfigurationError):
        Grid((-1,), (1,), (5,))
    with pytest.raises(ConfigurationError):
        Grid((1,), (-1,), (10,))
    with pytest.raises(ConfigurationError):
        Grid((0, 0, 0), (1, 1, 1), (8, 8, 8))


def test_cfl_bound_examples():
    grid = Grid.uniform(-1.0, 1.0, 0.1)
    assert cfl_bound(_heat_spec(0.5), grid, p_max=1.0) == pytest.approx(0.01)
    first = ProblemSpec(
        (SupCompactGrid([0.0], g=lambda x, t, b: np.full(np.asarray(x).shape, 2.0), f=lambda x, t, b: ZERO(x)),),
        ZERO, 1.0, GrowthConstants(2, 1, 1))
    assert cfl_bound(first, grid, p_max=1.0) == pytest.approx(0.05)
    p = preset("lq")
    phi_max = 1.0  # |phi| is largest at t = T for rho = 2, T = 1
    p_max = 2 * phi_max * 4 + 2  # the default cap 2 c_hat (1 + max|x|)
    theta = p_max / (2 * 2.0)
    assert cfl_bound(p.spec, p.grid, p_max) == pytest.approx(p.grid.dx[0] / theta)
    with pytest.raises(ValueError):
        cfl_bound(p.spec, p.grid, 0.0)


def test_step_zero_spec_is_identity():
    spec = ProblemSpec((), ZERO, 1.0, GrowthConstants(1, 1, 1))
    grid = Grid.uniform(-1, 1, 0.1)
    layer = np.sin(grid.points[..., 0])
    assert np.array_equal(step(layer, 0.0, spec, grid, SchemeConfig(), 0.01), layer)


def _sigma_spec(s):
    return ProblemSpec((SigmaForm(constant_field([[s]])),), lambda x: x[..., 0] ** 2, 1.0, GrowthConstants(1, 1, 1))


def test_step_on_quadratic_sigma_form_is_second_order_in_dt():
    s = 0.5
    errors = []
    for dx in (0.1, 0.05, 0.025):
        grid = Grid.uniform(-2.0, 2.0, dx)
        spec = _sigma_spec(s)
        dt = cfl_bound(spec, grid, p_max=8.0)
        x = grid.points[..., 0]
        nxt = step(x**2, 0.0, spec, grid, SchemeConfig(), dt)
        errors.append(np.max(np.abs(nxt - x**2 / (1 + 4 * s * dt))[np.abs(x) <= 1.0]) / dt**2)
    # error / dt^2 stays bounded as the grid is refined
    assert max(errors) <= 2 * min(errors) + 1e-9
    assert max(errors) < 50


def test_step_residual_on_exact_lq_field():
    residuals = []
    for dx in (0.1, 0.05):
        p = preset("lq", dx=dx)
        params = p.riccati
        grid = p.grid
        x = grid.points[..., 0]
        dt = 0.5 * cfl_bound(p.spec, grid, 10.0)
        s = 0.3
        t = p.spec.horizon - s
        w_now = lq_value(params, x, t)
        w_next = step(w_now, s, p.spec, grid, SchemeConfig(), dt)
        exact = lq_value(params, x, t - dt)
        residuals.append(np.max(np.abs(w_next - exact)[np.abs(x) <= 2]) / dt)
    assert residuals[1] < residuals[0]


def test_boundary_ghosts_quadratic_and_linear():
    grid = Grid.uniform(0.0, 1.0, 0.1)
    x = grid.points[..., 0]
    ghosts = boundary_ghosts(x**2, grid)
    assert ghosts[0] == pytest.approx((-0.1) ** 2, abs=1e-14)
    assert ghosts[-1] == pytest.approx(1.1**2, abs=1e-14)
    lin = boundary_ghosts(3 * x - 1, grid)
    assert lin[0] == pytest.approx(-1.3) and lin[-1] == pytest.approx(2.3)
    g2 = Grid.uniform([-1, -1], [1, 1], 0.25)
    pts = g2.points
    padded = boundary_ghosts(pts[..., 0] ** 2 + 2 * pts[..., 1] ** 2, g2)
    assert padded.shape == (11, 11)
    assert padded[0, 0] == pytest.approx(1.25**2 + 2 * 1.25**2)


def test_boundary_truncation_exact_on_lq_quadratic():
    p = preset("lq")
    x = p.grid.points[..., 0]
    layer = lq_value(p.riccati, x, 0.5)
    assert np.allclose(second_differences(layer, p.grid)[..., 0], 2 * lq_value(p.riccati, 1.0, 0.5), atol=1e-9)


def test_numerical_derivatives():
    grid = Grid.uniform(-1.0, 1.0, 0.01)
    x = grid.points[..., 0]
    assert np.allclose(numerical_gradient(np.full_like(x, 3.0), grid, slice(None)), 0.0)
    assert np.allclose(numerical_hessian_diag(np.full_like(x, 3.0), grid, slice(None)), 0.0)
    assert np.allclose(numerical_gradient(x**2, grid, slice(None))[:, 0], 2 * x, atol=1e-12)
    assert np.allclose(numerical_hessian_diag(x**2, grid, slice(None))[:, 0], 2.0, atol=1e-9)
    err = np.abs(numerical_gradient(np.sin(x), grid, slice(1, -1))[:, 0] - np.cos(x[1:-1]))
    assert np.max(err) <= 2e-5
    assert numerical_gradient(x**2, grid, 150)[0] == pytest.approx(1.0)


def test_solve_zero_problem():
    dyn = ControlAffineDynamics(b_mat=constant_field([[1.0]]))
    spec = ProblemSpec((SupQuadraticClosedForm(dyn, RunningCost(1.0)),), ZERO, 0.5, GrowthConstants(1, 1, 1))
    f = solve(spec, Grid.uniform(-2, 2, 0.1))
    assert np.all(f.layers == 0.0) and not f.blew_up


def test_lq_preset_accuracy():
    p = preset("lq")
    f = solve(p.spec, p.grid, p.scheme)
    assert not f.blew_up
    assert max_relative_error(f, p.exact, 2.0) <= 2e-2


def test_lq_blowup_preset():
    p = preset("lq-blowup")
    f = solve(p.spec, p.grid, p.scheme)
    assert f.blew_up
    assert abs(f.blowup_time - blowup_time(p.riccati)) <= 0.1
    assert f.blowup_march_time == pytest.approx(p.spec.horizon - f.blowup_time)
    assert not np.isfinite(f.norm_history[-1]) or f.norm_history[-1] > 1e8


def test_terminal_orientation_layout():
    p = preset("lq", dx=0.1)
    f = solve(p.spec, p.grid, p.scheme)
    assert f.orientation is Orientation.TERMINAL
    assert f.times[0] == p.spec.horizon and f.times[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.array_equal(f.layers[0], p.spec.data(p.grid.points))
    assert np.allclose(f.norm_history, np.max(np.abs(f.layers), axis=-1))
    assert f.layer_index(0.0) == len(f.times) - 1


def test_cfl_violation_raises():
    p = preset("lq", dx=0.1)
    with pytest.raises(ConfigurationError):
        solve(p.spec, p.grid, SchemeConfig(dt=1.0))


def test_cross_diffusion_rejected_in_2d():
    sig = constant_field([[1.0, 0.0], [1.0, 0.0]])
    dyn = ControlAffineDynamics(b_mat=constant_field(np.eye(2)), sigma=sig)
    spec = ProblemSpec((SupQuadraticClosedForm(dyn, RunningCost(1.0)),), ZERO, 0.1, GrowthConstants(2, 1, 1), dim=2)
    with pytest.raises(ConfigurationError):
        solve(spec, Grid.uniform([-1, -1], [1, 1], 0.2))


def test_monotone_under_perturbation():
    rng = np.random.default_rng(3)
    p = preset("lq")
    grid = p.grid
    x = grid.points[..., 0]
    p_max = 20.0
    dt = cfl_bound(p.spec, grid, p_max)
    for _ in range(100):
        layer = lq_value(p.riccati, x, rng.uniform(0.2, 1.0)) + 0.01 * rng.normal(size=x.shape)
        i = int(rng.integers(1, len(x) - 1))
        j = i + int(rng.integers(-1, 2))
        bumped = layer.copy()
        bumped[j] += 1e-3
        minus, plus = one_sided_differences(layer, grid)
        if np.max(np.abs(np.concatenate([minus, plus]))[max(i - 1, 0):i + 2]) > p_max:
            continue
        s = rng.uniform(0, 0.5)
        base = step(layer, s, p.spec, grid, p.scheme, dt)[i]
        after = step(bumped, s, p.spec, grid, p.scheme, dt)[i]
        assert after >= base - 1e-12


def test_comparison_transfer_on_lq():
    p = preset("lq", dx=0.1)
    f1 = solve(p.with_data(lambda x: -np.sum(x**2, axis=-1) - 0.3).spec, p.grid, p.scheme)
    f2 = solve(p.spec, p.grid, p.scheme)
    assert comparison_check(f1, f2, 1e-12).passed


def test_growth_containment_between_quadratic_barriers():
    p = preset("lq")
    sub, sup = quadratic_barrier_constants(p.spec.constants)
    T = p.spec.horizon
    horizon = min(sub.tau, T)
    f = solve(p.spec, p.grid, p.scheme)
    keep = f.march_times <= horizon
    f.times, f.march_times, f.layers = f.times[keep], f.march_times[keep], f.layers[keep]
    assert comparison_check(sample_field(lambda x, t: sub(x, T - t), p.grid, f.times), f).passed
    assert comparison_check(f, sample_field(lambda x, t: sup(x, T - t), p.grid, f.times)).passed


def test_self_convergence_factor():
    def build(dx):
        q = preset("lq", dx=dx)
        return q.spec, q.grid, q.scheme

    study = self_convergence(build, [0.1, 0.05, 0.025, 0.0125], radius=2.0)
    assert all(r >= 1.7 for r in study.ratios)


def test_two_dimensional_sigma_form():
    p = preset("sigma-form", dim=2, dx=0.1)
    f = solve(p.spec, p.grid, p.scheme)
    assert f.layers.shape[1:] == (61, 61)
    assert max_relative_error(f, p.exact, 1.0) <= 0.1
    last = f.layers[-1]
    assert np.allclose(last, last.T, atol=1e-12)


def test_csv_round_trip(tmp_path):
    p = preset("const-h", dx=0.25)
    f = solve(p.spec, p.grid, p.scheme, store_every=10)
    path = tmp_path / "w.csv"
    f.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,x,w"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 2].reshape(f.layers.shape), f.layers)
    f.to_json(tmp_path / "w.json")
