"""Monte-Carlo estimation of stochastic control costs.

Paths of ``dX = (b0 + B alpha) ds + sigma dW`` are simulated with
Euler-Maruyama under a feedback policy; the running cost is integrated at the
left endpoint of every step. Path ``i`` draws its Gaussian increments from a
Philox stream keyed by ``(seed, i)``, so estimates do not depend on the order
in which paths are produced and candidate policies share random numbers.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .core import (
    ConfigurationError,
    ControlAffineDynamics,
    GrowthConstants,
    RunningCost,
    audit_cost,
    audit_data,
    audit_dynamics,
)


class EstimationError(RuntimeError):
    """The Monte-Carlo estimate could not be formed."""


@dataclass(frozen=True)
class SdeSpec:
    dynamics: ControlAffineDynamics
    cost: RunningCost
    psi: Callable[[np.ndarray], np.ndarray]
    T: float
    constants: GrowthConstants
    dim: int = 1

    def validate(self, box: float = 5.0, n_samples: int = 10_000):
        audit_dynamics(self.dynamics, self.constants, self.dim, self.T, box, n_samples)
        audit_cost(self.cost, self.constants, self.dim, self.T, box, n_samples)
        audit_data(self.psi, self.constants, self.dim, box, n_samples)
        return self

    @property
    def deterministic(self) -> bool:
        return self.dynamics.sigma is None


# --- policies ----------------------------------------------------------------


@dataclass(frozen=True)
class LinearFeedback:
    """``alpha = gain(t) @ x`` with ``gain(t)`` of shape ``(k, N)``."""

    gain: Callable[[float], np.ndarray]
    params: tuple = ()

    def control(self, x, t):
        g = np.atleast_2d(np.asarray(self.gain(t), dtype=float))
        return x @ g.T

    def describe(self):
        return {"kind": "linear_feedback", "params": [float(v) for v in self.params]}


@dataclass(frozen=True)
class ConstantControl:
    alpha: tuple

    def control(self, x, t):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        return np.broadcast_to(a, x.shape[:-1] + a.shape)

    def describe(self):
        return {"kind": "constant", "alpha": [float(v) for v in np.atleast_1d(self.alpha)]}


@dataclass(frozen=True)
class GridOpenLoop:
    """Piecewise-constant open-loop control on equal time cells of ``[t0, T]``."""

    values: tuple
    t0: float
    T: float
    radius: float

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float).T).T
        if np.any(np.linalg.norm(vals, axis=-1) > self.radius * (1 + 1e-12)):
            raise ConfigurationError(f"open-loop values must satisfy |alpha| <= {self.radius}")

    def control(self, x, t):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        n_cells = len(vals)
        cell = min(int((t - self.t0) / (self.T - self.t0) * n_cells), n_cells - 1)
        return np.broadcast_to(vals[max(cell, 0)], x.shape[:-1] + vals.shape[1:])

    def describe(self):
        return {"kind": "open_loop", "values": np.asarray(self.values, dtype=float).tolist(), "radius": self.radius}


def piecewise_gain(gains: Sequence[float], t0: float, T: float) -> Callable[[float], np.ndarray]:
    """Scalar gain constant on each of ``len(gains)`` equal cells of ``[t0, T]``."""
    gains = np.asarray(gains, dtype=float)

    def gain(t):
        cell = min(max(int((t - t0) / (T - t0) * len(gains)), 0), len(gains) - 1)
        return np.array([[gains[cell]]])

    return gain


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 4000
    dt: float = 1e-2
    seed: int = 0
    truncation: float = 1e3

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be positive")
        if not (self.dt > 0 and self.truncation > 0):
            raise ConfigurationError("dt and truncation must be positive")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "n_paths": self.n_paths}


@dataclass
class Paths:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    divergent: np.ndarray


# --- simulation --------------------------------------------------------------


def _time_grid(t0, T, dt):
    if not t0 < T:
        raise ConfigurationError(f"t0={t0} must be smaller than T={T}")
    n = max(1, int(math.ceil((T - t0) / dt - 1e-9)))
    return np.linspace(t0, T, n + 1)


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(path_index)]))


@functools.lru_cache(maxsize=8)
def _noise_block(seed: int, n_paths: int, n_steps: int, m: int) -> np.ndarray:
    block = np.empty((n_paths, n_steps, m))
    for i in range(n_paths):
        block[i] = path_rng(seed, i).standard_normal((n_steps, m))
    block.setflags(write=False)
    return block


def _truncate(alpha, radius):
    # scaled so that huge controls do not overflow to an infinite norm
    with np.errstate(divide="ignore", invalid="ignore"):
        big = np.max(np.abs(alpha), axis=-1, keepdims=True)
        safe = np.where(big > 0, big, 1.0)
        norm = big * np.linalg.norm(alpha / safe, axis=-1, keepdims=True)
        scale = np.where(norm > radius, radius / norm, 1.0)
    return alpha * scale


def _noise_dim(spec: SdeSpec, x0):
    if spec.deterministic:
        return 0
    return np.asarray(spec.dynamics.sigma(x0[None, :], spec.T), dtype=float).shape[-1]


def _euler(spec, policy, x0, times, config, noise):
    dyn = spec.dynamics
    n_paths = noise.shape[0] if noise is not None else 1
    n_steps = len(times) - 1
    states = np.empty((n_paths, n_steps + 1, spec.dim))
    states[:, 0] = x0
    controls = None
    x = np.broadcast_to(x0, (n_paths, spec.dim)).copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            t, h = times[k], times[k + 1] - times[k]
            alpha = _truncate(np.asarray(policy.control(x, t), dtype=float), config.truncation)
            if controls is None:
                controls = np.empty((n_paths, n_steps, alpha.shape[-1]))
            controls[:, k] = alpha
            drift = dyn.drift0(x, t) + np.einsum("pij,pj->pi", dyn.control_matrix(x, t), alpha)
            x = x + drift * h
            if noise is not None:
                sig = np.asarray(dyn.sigma(states[:, k], t), dtype=float)
                x = x + math.sqrt(h) * np.einsum("pij,pj->pi", sig, noise[:, k])
            states[:, k + 1] = x
    divergent = ~np.all(np.isfinite(states.reshape(n_paths, -1)), axis=-1)
    return Paths(times, states, controls, divergent)


def simulate_paths(spec: SdeSpec, policy, x0, t0: float, config: McConfig) -> Paths:
    """All ``config.n_paths`` trajectories at once (a single one if deterministic)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    times = _time_grid(t0, spec.T, config.dt)
    m = _noise_dim(spec, x0)
    noise = None if m == 0 else _noise_block(int(config.seed), config.n_paths, len(times) - 1, m)
    return _euler(spec, policy, x0, times, config, noise)


def simulate_path(spec: SdeSpec, policy, x0, t0: float, config: McConfig, path_index: int = 0) -> Paths:
    """Trajectory number ``path_index`` alone; matches row ``path_index`` of :func:`simulate_paths`."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    times = _time_grid(t0, spec.T, config.dt)
    m = _noise_dim(spec, x0)
    noise = None if m == 0 else path_rng(config.seed, path_index).standard_normal((1, len(times) - 1, m))
    return _euler(spec, policy, x0, times, config, noise)


def _path_costs(spec: SdeSpec, paths: Paths) -> np.ndarray:
    times = paths.times
    running = np.zeros(paths.states.shape[0])
    for k in range(len(times) - 1):
        running += spec.cost(paths.states[:, k], times[k], paths.controls[:, k]) * (times[k + 1] - times[k])
    return running + np.asarray(spec.psi(paths.states[:, -1]), dtype=float)


def _summarise(values: np.ndarray, n_paths: int) -> McEstimate:
    if len(values) == 1:
        return McEstimate(float(values[0]), 0.0, n_paths)
    mean = math.fsum(values) / len(values)
    var = math.fsum((values - mean) ** 2) / (len(values) - 1)
    return McEstimate(mean, math.sqrt(var / len(values)), n_paths)


def estimate_cost(spec: SdeSpec, policy, x0, t0: float, config: McConfig) -> McEstimate:
    """Sample mean and standard error of the pathwise cost."""
    paths = simulate_paths(spec, policy, x0, t0, config)
    if np.any(paths.divergent):
        raise EstimationError(f"{int(np.sum(paths.divergent))} path(s) diverged")
    costs = _path_costs(spec, paths)
    if not np.all(np.isfinite(costs)):
        raise EstimationError("non-finite path cost")
    return _summarise(costs, config.n_paths)


# --- policy search -------------------------------------------------------------


@dataclass(frozen=True)
class ConstantFamily:
    """Exhaustive search over a finite list of constant controls."""

    candidates: tuple

    def members(self):
        return [ConstantControl(tuple(np.atleast_1d(c).tolist())) for c in self.candidates]


@dataclass(frozen=True)
class LinearGainFamily:
    """Scalar feedback gains, piecewise constant on ``n_cells`` time cells."""

    n_cells: int = 1
    lower: float = -10.0
    upper: float = 10.0
    initial: float = 0.0
    sweeps: int = 3

    def bounds(self):
        return [(self.lower, self.upper)] * self.n_cells

    def start(self):
        return np.full(self.n_cells, float(self.initial))

    def build(self, params, t0, T):
        return LinearFeedback(piecewise_gain(params, t0, T), tuple(float(v) for v in params))


@dataclass(frozen=True)
class OpenLoopFamily:
    """Scalar open-loop controls on ``n_cells`` time cells, truncated to ``|alpha| <= radius``."""

    n_cells: int = 4
    radius: float = 1.0
    sweeps: int = 3

    def bounds(self):
        return [(-self.radius, self.radius)] * self.n_cells

    def start(self):
        return np.zeros(self.n_cells)

    def build(self, params, t0, T):
        return GridOpenLoop(tuple(float(v) for v in params), t0, T, self.radius)


@dataclass
class SearchTrace:
    evaluations: list = field(default_factory=list)


def optimize_policy(spec: SdeSpec, family, x0, t0: float, config: McConfig, trace: SearchTrace | None = None):
    """Best member of ``family`` under common random numbers.

    Discrete families are searched exhaustively (first minimiser wins ties);
    parametric ones by coordinate descent with a bounded scalar search per
    coordinate. The result is never worse than any member that was evaluated.
    """
    if isinstance(family, ConstantFamily):
        if not family.candidates:
            raise ConfigurationError("policy family is empty")
        best = None
        for policy in family.members():
            est = estimate_cost(spec, policy, x0, t0, config)
            if trace is not None:
                trace.evaluations.append((policy.describe(), est.mean))
            if best is None or est.mean < best[1].mean:
                best = (policy, est)
        return best

    cache = {}

    def evaluate(params):
        key = tuple(float(v) for v in params)
        if key not in cache:
            policy = family.build(params, t0, spec.T)
            cache[key] = (policy, estimate_cost(spec, policy, x0, t0, config))
            if trace is not None:
                trace.evaluations.append((policy.describe(), cache[key][1].mean))
        return cache[key]

    params = family.start()
    best = evaluate(params)
    for _ in range(family.sweeps):
        improved = False
        for j, (lo, hi) in enumerate(family.bounds()):
            def objective(v, j=j):
                trial = params.copy()
                trial[j] = v
                return evaluate(trial)[1].mean

            res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-4 * max(1.0, hi - lo)})
            trial = params.copy()
            trial[j] = res.x
            candidate = evaluate(trial)
            if candidate[1].mean < best[1].mean:
                params, best, improved = trial, candidate, True
        if not improved:
            break
    return best


# --- moment bounds -----------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    empirical: float
    stderr: float
    bound: float
    constant: float
    control_energy: float
    passed: bool

    def to_dict(self):
        return {
            "empirical_sup_moment": self.empirical,
            "stderr": self.stderr,
            "bound": self.bound,
            "constant": self.constant,
            "control_energy": self.control_energy,
            "passed": self.passed,
        }


def moment_constant(c_bar: float) -> float:
    # 2<x,b> + Tr(s s^T) <= (c + 2c^2)(2 + 5|x|^2 + |a|^2) when |b| <= c(1+|x|+|a|), |s| <= c(1+|x|)
    return 5.0 * (c_bar + 2.0 * c_bar**2)


def moment_check(spec: SdeSpec, policy, x0, t0: float, config: McConfig) -> MomentReport:
    """Compare ``E sup_s |X_s|^2`` with ``(|x|^2 + C h + C E int |alpha|^2) e^{C h}``, ``h = T - t0``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    paths = simulate_paths(spec, policy, x0, t0, config)
    if np.any(paths.divergent):
        raise EstimationError("diverging paths in moment check")
    sup_sq = np.max(np.sum(paths.states**2, axis=-1), axis=-1)
    dts = np.diff(paths.times)
    energy = np.sum(np.sum(paths.controls**2, axis=-1) * dts, axis=-1)
    sup_est = _summarise(sup_sq, config.n_paths)
    energy_mean = math.fsum(energy) / len(energy)
    C = moment_constant(spec.constants.c_bar)
    horizon = spec.T - t0
    bound = (float(x0 @ x0) + C * horizon + C * energy_mean) * math.exp(C * horizon)
    passed = sup_est.mean - 3.0 * sup_est.stderr <= bound
    return MomentReport(sup_est.mean, sup_est.stderr, bound, C, energy_mean, bool(passed))


def increment_modulus(spec: SdeSpec, policy, x0, t0: float, config: McConfig, lags: Sequence[int] = (1, 2, 4, 8, 16)):
    """Empirical ``E|X_{s+h} - X_s|`` for several lags and its log-log slope in ``h``."""
    paths = simulate_paths(spec, policy, x0, t0, config)
    dt = float(np.mean(np.diff(paths.times)))
    means = []
    for lag in lags:
        diff = paths.states[:, lag:] - paths.states[:, :-lag]
        means.append(float(np.mean(np.linalg.norm(diff, axis=-1))))
    hs = np.asarray(lags) * dt
    slope = float(np.polyfit(np.log(hs), np.log(means), 1)[0])
    return hs, np.asarray(means), slope
