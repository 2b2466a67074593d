"""Explicit monotone finite-difference solver on truncated 1-D/2-D grids.

Each step applies a Lax-Friedrichs numerical Hamiltonian

    w_next = w - dt * [F(x, t, D0 w, D2 w) - theta * sum_i (w_{i+1} - 2 w_i + w_{i-1}) / (2 dx_i)]

with central gradients ``D0``, central second differences ``D2`` on the
diagonal of the Hessian and dissipation ``theta`` bounding ``|dF/dp|``. By
default ``theta`` is chosen per grid point from the one-sided differences of
the stencil (local Lax-Friedrichs); a fixed global value can be configured.
Ghost values outside the grid come from quadratic extrapolation.

Terminal-value problems are marched in reversed time ``s = T - t``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigurationError, Orientation, ProblemSpec

logger = logging.getLogger(__name__)

MIN_POINTS = 8
OFFDIAG_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not (len(lo) == len(hi) == len(n)) or len(n) not in (1, 2):
            raise ConfigurationError("grid must be 1-D or 2-D with matching lo/hi/n")
        if any(k < MIN_POINTS for k in n):
            raise ConfigurationError(f"need at least {MIN_POINTS} points per axis, got {n}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ConfigurationError("grid bounds must satisfy lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @classmethod
    def uniform(cls, lo, hi, dx):
        lo, hi, dx = np.atleast_1d(lo), np.atleast_1d(hi), np.atleast_1d(dx)
        dx = np.broadcast_to(dx, lo.shape)
        n = [int(round((b - a) / d)) + 1 for a, b, d in zip(lo, hi, dx)]
        return cls(tuple(lo), tuple(hi), tuple(n))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def dx(self) -> tuple:
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.n))

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.n)]

    @property
    def points(self) -> np.ndarray:
        """Grid coordinates with shape ``(*n, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "n": list(self.n), "dx": list(self.dx)}


@dataclass(frozen=True)
class SchemeConfig:
    dt: float | None = None
    cfl_safety: float = 0.9
    theta: float | None = None
    p_max: float | None = None
    blowup_threshold: float = 1e8

    def __post_init__(self):
        if not (0 < self.cfl_safety <= 1):
            raise ConfigurationError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.theta is not None and self.theta < 0:
            raise ConfigurationError("theta must be nonnegative")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.p_max is not None and not self.p_max > 0:
            raise ConfigurationError("p_max must be positive")


@dataclass
class SolutionField:
    grid: Grid
    times: np.ndarray
    march_times: np.ndarray
    layers: np.ndarray
    norm_history: np.ndarray
    blew_up: bool
    blowup_time: float | None
    blowup_march_time: float | None
    orientation: Orientation
    horizon: float
    info: dict = field(default_factory=dict)

    def layer_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def to_csv(self, path):
        pts = self.grid.points.reshape(-1, self.grid.dim)
        rows = []
        for t, layer in zip(self.times, self.layers):
            block = np.column_stack([np.full(len(pts), t), pts, layer.reshape(-1)])
            rows.append(block)
        names = ["t", "x", "y"][: 1 + self.grid.dim] + ["w"]
        np.savetxt(path, np.vstack(rows), fmt="%.17g", delimiter=",", header=",".join(names), comments="")

    def report(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "orientation": self.orientation.value,
            "horizon": self.horizon,
            "n_layers": int(len(self.layers)),
            "t_first": float(self.times[0]),
            "t_last": float(self.times[-1]),
            "norm_history": [float(v) for v in self.norm_history],
            "blew_up": self.blew_up,
            "blowup_time": self.blowup_time,
            "blowup_march_time": self.blowup_march_time,
            **self.info,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)


# --- stencils ---------------------------------------------------------------


def boundary_ghosts(layer, grid: Grid) -> np.ndarray:
    """Pad ``layer`` by one ghost cell per side using quadratic extrapolation."""
    out = np.asarray(layer, dtype=float)
    for axis in range(grid.dim):
        if out.shape[axis] < 3:
            raise ConfigurationError("need at least three points per axis for extrapolation")
        first = np.take(out, [0], axis=axis)
        second = np.take(out, [1], axis=axis)
        third = np.take(out, [2], axis=axis)
        last = np.take(out, [-1], axis=axis)
        before_last = np.take(out, [-2], axis=axis)
        third_last = np.take(out, [-3], axis=axis)
        lo_ghost = 3.0 * first - 3.0 * second + third
        hi_ghost = 3.0 * last - 3.0 * before_last + third_last
        out = np.concatenate([lo_ghost, out, hi_ghost], axis=axis)
    return out


def _interior(padded, dim, axis, shift):
    index = [slice(1, -1)] * dim
    index[axis] = slice(1 + shift, padded.shape[axis] - 1 + shift)
    return padded[tuple(index)]


def one_sided_differences(layer, grid: Grid):
    """Backward and forward differences per axis, each with shape ``(*n, dim)``."""
    padded = boundary_ghosts(layer, grid)
    center = _interior(padded, grid.dim, 0, 0)
    minus, plus = [], []
    for axis, h in enumerate(grid.dx):
        minus.append((center - _interior(padded, grid.dim, axis, -1)) / h)
        plus.append((_interior(padded, grid.dim, axis, +1) - center) / h)
    return np.stack(minus, axis=-1), np.stack(plus, axis=-1)


def central_gradient(layer, grid: Grid) -> np.ndarray:
    minus, plus = one_sided_differences(layer, grid)
    return 0.5 * (minus + plus)


def second_differences(layer, grid: Grid) -> np.ndarray:
    minus, plus = one_sided_differences(layer, grid)
    return (plus - minus) / np.asarray(grid.dx)


def numerical_gradient(layer, grid: Grid, index) -> np.ndarray:
    return central_gradient(layer, grid)[tuple(np.atleast_1d(index))]


def numerical_hessian_diag(layer, grid: Grid, index) -> np.ndarray:
    return second_differences(layer, grid)[tuple(np.atleast_1d(index))]


# --- scheme -----------------------------------------------------------------


def physical_time(spec: ProblemSpec, s: float) -> float:
    return spec.horizon - s if spec.orientation is Orientation.TERMINAL else s


def default_p_max(spec: ProblemSpec, grid: Grid) -> float:
    """Gradient cap ``2 c_hat (1 + max |x|)`` from the quadratic growth bound."""
    radius = float(np.max(np.linalg.norm(grid.points, axis=-1)))
    return 2.0 * spec.constants.c_hat * (1.0 + radius)


def _sample_times(spec, n=5):
    return np.linspace(0.0, spec.horizon, n)


def diffusion_diagonal_max(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    pts = grid.points
    a_max = np.zeros(grid.dim)
    for t in _sample_times(spec):
        a = spec.diffusion(pts, float(t))
        diag = np.diagonal(a, axis1=-2, axis2=-1)
        a_max = np.maximum(a_max, diag.reshape(-1, grid.dim).max(axis=0))
    return a_max


def check_diagonal_diffusion(spec: ProblemSpec, grid: Grid):
    if grid.dim != spec.dim:
        raise ConfigurationError(f"grid is {grid.dim}-D but the problem is {spec.dim}-D")
    pts = grid.points
    for t in _sample_times(spec):
        a = spec.diffusion(pts, float(t))
        diag = np.diagonal(a, axis1=-2, axis2=-1)
        if np.any(diag < -OFFDIAG_TOL):
            raise ConfigurationError("diffusion matrix has a negative diagonal entry")
        if grid.dim > 1:
            off = a - np.einsum("...i,ij->...ij", diag, np.eye(grid.dim))
            if np.max(np.abs(off)) > OFFDIAG_TOL:
                raise ConfigurationError("cross-derivative diffusion terms are not supported")


def cfl_bound(spec: ProblemSpec, grid: Grid, p_max: float, theta: float | None = None) -> float:
    """Largest ``dt`` keeping the explicit update monotone.

    ``dt * sum_i (2 a_i / dx_i^2 + theta / dx_i) <= 1`` with ``a_i`` the largest
    diagonal diffusion coefficient and ``theta`` the largest ``|dF/dp|`` over
    ``|p| <= p_max`` on the grid (unless given explicitly).
    """
    if not p_max > 0:
        raise ValueError(f"p_max must be positive, got {p_max}")
    if theta is None:
        pts = grid.points
        theta = max(float(np.max(spec.grad_bound(pts, float(t), p_max), initial=0.0)) for t in _sample_times(spec))
    a_max = diffusion_diagonal_max(spec, grid)
    dx = np.asarray(grid.dx)
    rate = float(np.sum(2.0 * a_max / dx**2 + theta / dx))
    return math.inf if rate == 0 else 1.0 / rate


def step(layer, s: float, spec: ProblemSpec, grid: Grid, scheme: SchemeConfig, dt: float) -> np.ndarray:
    """Advance one explicit step from marching time ``s``."""
    layer = np.asarray(layer, dtype=float)
    if not spec.terms:
        return layer.copy()
    minus, plus = one_sided_differences(layer, grid)
    p = 0.5 * (minus + plus)
    d2 = (plus - minus) / np.asarray(grid.dx)
    X = np.einsum("...i,ij->...ij", d2, np.eye(grid.dim))
    x = grid.points
    t = physical_time(spec, s)
    F = spec.operator(x, t, p, X)
    if scheme.theta is None:
        p_loc = np.sqrt(np.sum(np.maximum(np.abs(minus), np.abs(plus)) ** 2, axis=-1))
        theta = spec.grad_bound(x, t, p_loc)
    else:
        theta = scheme.theta
    dissipation = theta * np.sum(0.5 * (plus - minus), axis=-1)
    return layer - dt * (F - dissipation)


def solve(spec: ProblemSpec, grid: Grid, scheme: SchemeConfig = SchemeConfig(), store_every: int = 1) -> SolutionField:
    """March from the data layer to the horizon or until blow-up."""
    check_diagonal_diffusion(spec, grid)
    p_max = scheme.p_max if scheme.p_max is not None else default_p_max(spec, grid)
    bound = cfl_bound(spec, grid, p_max, scheme.theta)
    if scheme.dt is not None:
        if scheme.dt > bound * (1 + 1e-12):
            raise ConfigurationError(f"dt={scheme.dt} violates the monotonicity bound {bound}")
        dt = scheme.dt
    else:
        dt = scheme.cfl_safety * bound
    if not math.isfinite(dt):
        dt = spec.horizon
    n_steps = max(1, int(math.ceil(spec.horizon / dt - 1e-12)))
    dt = spec.horizon / n_steps

    layer = np.asarray(spec.data(grid.points), dtype=float)
    march = [0.0]
    layers = [layer]
    norms = [float(np.max(np.abs(layer)))]
    blew_up = False
    blowup_s = None
    for k in range(n_steps):
        s = k * dt
        with np.errstate(over="ignore", invalid="ignore"):
            layer = step(layer, s, spec, grid, scheme, dt)
            norm = float(np.max(np.abs(layer)))
        bad = not np.all(np.isfinite(layer)) or norm > scheme.blowup_threshold
        if bad or (k + 1) % store_every == 0 or k + 1 == n_steps:
            march.append((k + 1) * dt)
            layers.append(layer)
            norms.append(norm if np.isfinite(norm) else math.inf)
        if bad:
            blew_up = True
            blowup_s = (k + 1) * dt
            logger.info("blow-up detected at marching time %.6g", blowup_s)
            break

    march = np.asarray(march)
    times = np.array([physical_time(spec, s) for s in march])
    info = {
        "scheme": {
            "dt": dt,
            "n_steps": n_steps,
            "cfl_bound": bound,
            "cfl_safety": scheme.cfl_safety,
            "theta": "local" if scheme.theta is None else scheme.theta,
            "p_max": p_max,
            "blowup_threshold": scheme.blowup_threshold,
        },
        "problem": spec.name,
    }
    return SolutionField(
        grid=grid,
        times=times,
        march_times=march,
        layers=np.stack(layers),
        norm_history=np.asarray(norms),
        blew_up=blew_up,
        blowup_time=None if blowup_s is None else physical_time(spec, blowup_s),
        blowup_march_time=blowup_s,
        orientation=spec.orientation,
        horizon=spec.horizon,
        info=info,
    )
