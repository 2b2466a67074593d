"""Executable checks: ordering, growth, residuals and independent oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .core import ConfigurationError, Orientation, ProblemSpec
from .solver import Grid, SolutionField, solve

ANALYTIC_TOL = 1e-10
NUMERIC_TOL = 1e-6


@dataclass(frozen=True)
class OrderingReport:
    max_violation: float
    point: tuple | None
    passed: bool
    tolerance: float

    def to_dict(self):
        return {"max_violation": self.max_violation, "point": self.point, "passed": self.passed,
                "tolerance": self.tolerance}


@dataclass(frozen=True)
class GrowthReport:
    max_ratio: float
    point: tuple | None
    c_hat: float
    passed: bool

    def to_dict(self):
        return {"max_ratio": self.max_ratio, "point": self.point, "c_hat": self.c_hat, "passed": self.passed}


@dataclass(frozen=True)
class ResidualReport:
    max_residual: float
    point: tuple | None

    def to_dict(self):
        return {"max_residual": self.max_residual, "point": self.point}


def sample_field(fn: Callable, grid: Grid, times: Sequence[float], orientation=Orientation.INITIAL,
                 horizon: float | None = None) -> SolutionField:
    """Evaluate ``fn(x, t)`` on ``grid`` at ``times`` and wrap it as a field."""
    times = np.asarray(times, dtype=float)
    pts = grid.points
    layers = np.stack([np.asarray(fn(pts, float(t)), dtype=float) for t in times])
    horizon = float(times.max()) if horizon is None else horizon
    orientation = Orientation(orientation)
    march = horizon - times if orientation is Orientation.TERMINAL else times.copy()
    return SolutionField(
        grid=grid, times=times, march_times=march, layers=layers,
        norm_history=np.max(np.abs(layers.reshape(len(times), -1)), axis=-1),
        blew_up=False, blowup_time=None, blowup_march_time=None,
        orientation=orientation, horizon=horizon,
    )


def _as_layers(obj, reference: SolutionField | None):
    if isinstance(obj, SolutionField):
        return obj
    if reference is None:
        raise ConfigurationError("comparing two callables needs a grid; sample one with sample_field first")
    return sample_field(obj, reference.grid, reference.times, reference.orientation, reference.horizon)


def _point(field: SolutionField, flat_index: int):
    n_layers = field.layers.shape[0]
    per = field.layers[0].size
    k, j = divmod(int(flat_index), per)
    x = field.grid.points.reshape(per, field.grid.dim)[j]
    assert k < n_layers
    return (tuple(float(v) for v in x), float(field.times[k]))


def comparison_check(U, V, tolerance: float = ANALYTIC_TOL, radius: float | None = None) -> OrderingReport:
    """``max (U - V)`` over the shared samples; passes when it is at most ``tolerance``.

    Either argument may be a callable ``(x, t) -> value``; it is sampled on the
    grid and times of the other one. With ``radius`` only nodes with
    ``|x| <= radius`` count, which keeps the artificial box edge out of the check.
    """
    ref = U if isinstance(U, SolutionField) else V if isinstance(V, SolutionField) else None
    U = _as_layers(U, ref)
    V = _as_layers(V, ref)
    if U.blew_up or V.blew_up:
        raise ConfigurationError("cannot compare a field that blew up before the horizon")
    if U.grid != V.grid or U.layers.shape != V.layers.shape or not np.allclose(U.times, V.times):
        raise ConfigurationError("fields are sampled on different grids or times")
    diff = U.layers - V.layers
    if not np.all(np.isfinite(diff)):
        raise ConfigurationError("fields contain non-finite values")
    if radius is not None:
        outside = np.linalg.norm(U.grid.points, axis=-1) > radius + 1e-12
        diff = np.where(outside, -np.inf, diff)
    i = int(np.argmax(diff))
    worst = float(diff.reshape(-1)[i])
    return OrderingReport(worst, _point(U, i), worst <= tolerance, tolerance)


def growth_check(field: SolutionField, c_hat: float) -> GrowthReport:
    """``max |w| / (1 + |x|^2)`` over all stored layers."""
    pts = field.grid.points
    weight = 1.0 + np.sum(pts * pts, axis=-1)
    ratio = np.abs(field.layers) / weight
    if not np.all(np.isfinite(ratio)):
        return GrowthReport(math.inf, None, c_hat, False)
    i = int(np.argmax(ratio))
    worst = float(ratio.reshape(-1)[i])
    return GrowthReport(worst, _point(field, i), c_hat, worst <= c_hat)


def hopf_lax_oracle(psi: Callable, h: float, x: float, t: float, tol: float = 1e-8) -> float:
    """``min_y psi(y) + |x - y|^2 / (4 h t)`` by golden-section search."""
    if not h > 0:
        raise ConfigurationError(f"h must be positive, got {h}")
    if t < 0:
        raise ConfigurationError(f"t must be nonnegative, got {t}")
    x = float(x)

    def psi1(y):
        return float(np.asarray(psi(np.array([y])), dtype=float))

    if t == 0:
        return psi1(x)

    def objective(y):
        return psi1(y) + (x - y) ** 2 / (4.0 * h * t)

    radius = 10.0 * (1.0 + abs(x))
    lo, hi = x - radius, x + radius
    if objective(x) < min(objective(lo), objective(hi)):
        res = optimize.minimize_scalar(objective, bracket=(lo, x, hi), method="golden", options={"xtol": tol})
    else:
        res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.fun)


def _fd_derivatives(w, x, t, dx, dt):
    """Centered first and second differences of a callable ``w(x, t)``."""
    n = x.shape[-1]
    p = np.empty(x.shape)
    X = np.zeros(x.shape + (n,))
    w0 = np.asarray(w(x, t), dtype=float)
    for i in range(n):
        e = np.zeros(n)
        e[i] = dx
        wp = np.asarray(w(x + e, t), dtype=float)
        wm = np.asarray(w(x - e, t), dtype=float)
        p[..., i] = (wp - wm) / (2.0 * dx)
        X[..., i, i] = (wp - 2.0 * w0 + wm) / dx**2
        for j in range(i + 1, n):
            f = np.zeros(n)
            f[j] = dx
            cross = (w(x + e + f, t) - w(x + e - f, t) - w(x - e + f, t) + w(x - e - f, t)) / (4.0 * dx * dx)
            X[..., i, j] = X[..., j, i] = cross
    w_t = (np.asarray(w(x, t + dt)) - np.asarray(w(x, t - dt))) / (2.0 * dt)
    return w_t, p, X


def residual_check(w: Callable, spec: ProblemSpec, grid: Grid, dt: float = 1e-2, dx: float | None = None) -> ResidualReport:
    """Max ``|+-w_t + F(x, t, Dw, D^2 w)|`` over grid points and interior times.

    Only meaningful for smooth ``w`` (closed forms); kinked viscosity
    solutions are not classical and will show spurious residuals.
    """
    dx = grid.dx[0] if dx is None else dx
    sign = -1.0 if spec.orientation is Orientation.TERMINAL else 1.0
    x = grid.points.reshape(-1, grid.dim)
    times = np.arange(dt, spec.horizon - dt * 0.5, dt)
    worst, where = 0.0, None
    for t in times:
        w_t, p, X = _fd_derivatives(w, x, float(t), dx, dt)
        res = np.abs(sign * w_t + spec.operator(x, float(t), p, X))
        i = int(np.argmax(res))
        if res[i] > worst:
            worst, where = float(res[i]), (tuple(float(v) for v in x[i]), float(t))
    return ResidualReport(worst, where)


def barrier_residual(barrier, spec: ProblemSpec, x, t) -> np.ndarray:
    """``+-w_t + F`` evaluated with the barrier's analytic derivatives."""
    sign = -1.0 if spec.orientation is Orientation.TERMINAL else 1.0
    x = np.asarray(x, dtype=float)
    return sign * barrier.time_derivative(x, t) + spec.operator(x, t, barrier.gradient(x, t), barrier.hessian(x, t))


# --- refinement studies ------------------------------------------------------


@dataclass
class ConvergenceStudy:
    dxs: list
    errors: list
    ratios: list = field(default_factory=list)

    def to_dict(self):
        return {"dxs": self.dxs, "errors": self.errors, "ratios": self.ratios}


def final_layer(field: SolutionField) -> np.ndarray:
    return field.layers[-1]


def self_convergence(build: Callable[[float], tuple], dxs: Sequence[float], radius: float) -> ConvergenceStudy:
    """Errors of successively refined runs against the finest one.

    ``build(dx)`` returns ``(spec, grid, scheme)``. Grids must be nested (each
    dx an integer multiple of the finest) so coarse nodes are fine nodes.
    Errors are max-norm differences of the final layer over ``|x| <= radius``.
    """
    dxs = sorted(dxs, reverse=True)
    runs = []
    for dx in dxs:
        spec, grid, scheme = build(dx)
        f = solve(spec, grid, scheme)
        if f.blew_up:
            raise ConfigurationError(f"run with dx={dx} blew up")
        runs.append(f)
    fine = runs[-1]
    fine_axis = fine.grid.axes[0]
    errors = []
    for f in runs[:-1]:
        axis = f.grid.axes[0]
        idx = np.rint((axis - fine_axis[0]) / fine.grid.dx[0]).astype(int)
        mask = np.abs(axis) <= radius + 1e-12
        if f.grid.dim == 1:
            diff = final_layer(f)[mask] - final_layer(fine)[idx[mask]]
        else:
            diff = final_layer(f)[np.ix_(mask, mask)] - final_layer(fine)[np.ix_(idx[mask], idx[mask])]
        errors.append(float(np.max(np.abs(diff))))
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1) if errors[i + 1] > 0]
    return ConvergenceStudy(list(dxs), errors, ratios)


def max_relative_error(field: SolutionField, exact: Callable, radius: float) -> float:
    """``max |w - exact| / max |exact|`` over ``|x| <= radius`` and all stored layers."""
    pts = field.grid.points
    mask = np.linalg.norm(pts, axis=-1) <= radius + 1e-12
    err, scale = 0.0, 0.0
    for t, layer in zip(field.times, field.layers):
        ref = np.asarray(exact(pts, float(t)), dtype=float)
        err = max(err, float(np.max(np.abs(layer - ref)[mask])))
        scale = max(scale, float(np.max(np.abs(ref)[mask])))
    return err / scale if scale > 0 else err


def distance(a: SolutionField, b: SolutionField, radius: float | None = None) -> float:
    """Max-norm distance between the final layers of two fields on the same grid."""
    if a.grid != b.grid:
        raise ConfigurationError("fields live on different grids")
    diff = np.abs(final_layer(a) - final_layer(b))
    if radius is not None:
        diff = diff[np.linalg.norm(a.grid.points, axis=-1) <= radius + 1e-12]
    return float(np.max(diff))
