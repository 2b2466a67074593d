"""Deterministic scalar linear-quadratic benchmark.

Dynamics ``dX = alpha ds``, cost ``rho * int(alpha^2 + X^2) ds - X_T^2``. The
value function is ``phi(t) x^2`` with

    -phi' + phi^2 / rho = rho,    phi(T) = -1,

which stays finite on ``[0, T]`` when ``rho >= 1`` and blows up at
``T - log((1 + rho) / (1 - rho)) / 2`` otherwise (if that time is positive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import ConfigurationError, DomainError

BLOWUP_THRESHOLD = 1e8
RHO_ONE_TOL = 1e-8


class BlowUpDomainError(DomainError):
    """Requested time lies at or before the Riccati blow-up time."""


@dataclass(frozen=True)
class ScalarLQParams:
    rho: float
    T: float

    def __post_init__(self):
        if not (self.rho > 0 and self.T > 0):
            raise ConfigurationError(f"rho and T must be positive, got rho={self.rho}, T={self.T}")


@dataclass(frozen=True)
class RiccatiTrajectory:
    times: np.ndarray
    values: np.ndarray
    blew_up: bool
    t_min: float


def blowup_time(params: ScalarLQParams) -> float | None:
    rho, T = params.rho, params.T
    if rho >= 1.0:
        return None
    span = 0.5 * math.log((1.0 + rho) / (1.0 - rho))
    if T <= span:
        return None
    return T - span


def phi_closed(params: ScalarLQParams, t):
    """Closed-form Riccati solution; accepts scalars or arrays of times."""
    rho, T = params.rho, params.T
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr > T):
        raise DomainError(f"t must not exceed the horizon T={T}")
    tau = blowup_time(params)
    if tau is not None and np.any(t_arr <= tau):
        raise BlowUpDomainError(f"phi is undefined at or before the blow-up time {tau}")
    if abs(rho - 1.0) < RHO_ONE_TOL:
        out = -np.ones_like(t_arr)
    else:
        e = np.exp(2.0 * (T - t_arr))
        out = rho * ((rho - 1.0) * e - (rho + 1.0)) / ((rho - 1.0) * e + rho + 1.0)
    return float(out) if out.ndim == 0 else out


@numba.njit(cache=True)
def _rk4_backward(rho, T, dt, threshold):
    n = int(math.ceil(T / dt - 1e-9))
    times = np.empty(n + 1)
    values = np.empty(n + 1)
    times[0] = T
    values[0] = -1.0
    phi = -1.0
    t = T
    h = -dt
    last = 0
    blew = False
    for i in range(1, n + 1):
        if i == n:
            h = -t  # land exactly on t = 0
        k1 = phi * phi / rho - rho
        y = phi + 0.5 * h * k1
        k2 = y * y / rho - rho
        y = phi + 0.5 * h * k2
        k3 = y * y / rho - rho
        y = phi + h * k3
        k4 = y * y / rho - rho
        phi = phi + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        t = t + h
        if not (abs(phi) <= threshold):
            blew = True
            break
        times[i] = t
        values[i] = phi
        last = i
    return times[: last + 1], values[: last + 1], blew


def phi_rk4(params: ScalarLQParams, dt: float, threshold: float = BLOWUP_THRESHOLD) -> RiccatiTrajectory:
    """Integrate the Riccati equation backward from ``phi(T) = -1`` with RK4.

    Integration stops as soon as ``|phi|`` exceeds ``threshold``; ``t_min`` is
    then the last time at which the trajectory was still finite.
    """
    if not (dt > 0 and dt <= params.T / 10.0):
        raise DomainError(f"dt must lie in (0, T/10], got {dt}")
    times, values, blew = _rk4_backward(float(params.rho), float(params.T), float(dt), float(threshold))
    times = times[::-1].copy()
    values = values[::-1].copy()
    return RiccatiTrajectory(times=times, values=values, blew_up=bool(blew), t_min=float(times[0]))


def lq_value(params: ScalarLQParams, x, t):
    return phi_closed(params, t) * np.asarray(x, dtype=float) ** 2


def lq_optimal_feedback(params: ScalarLQParams, x, t):
    """Minimiser ``-phi(t) x / rho`` of the Hamiltonian."""
    return -phi_closed(params, t) * np.asarray(x, dtype=float) / params.rho


def phi_abs_max(params: ScalarLQParams) -> float:
    """``max |phi|`` over ``[0, T]``; phi is monotone, so the endpoints suffice."""
    if blowup_time(params) is not None:
        return math.inf
    return max(abs(phi_closed(params, 0.0)), 1.0)
