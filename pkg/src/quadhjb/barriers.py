"""Explicit sub- and supersolutions.

* quadratic barriers ``+-K exp(rho t)(1 + |x|^2)`` valid for ``t <= 1/rho``;
* the heat barrier ``phi(r, t)`` solving ``phi_t - r^2 phi_rr - r phi_r = 0``
  with data ``max(0, r - R)``, and the strict supersolution built from it;
* the rational barrier ``K [(|x| - R)^+]^2 / (1 - L t) + eta t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core import ConfigurationError, DomainError, GrowthConstants

QUAD_TOL = 1e-9
DEFAULT_ETA = 1e-3


@dataclass(frozen=True)
class QuadraticBarrier:
    K: float
    rho: float
    sign: int

    @property
    def tau(self) -> float:
        return 1.0 / self.rho

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        return self.sign * self.K * np.exp(self.rho * t) * (1.0 + np.sum(x * x, axis=-1))

    def gradient(self, x, t):
        x = np.asarray(x, dtype=float)
        return self.sign * 2.0 * self.K * np.exp(self.rho * t) * x

    def hessian(self, x, t):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        scale = self.sign * 2.0 * self.K * np.exp(self.rho * t)
        return np.broadcast_to(scale * np.eye(n), x.shape[:-1] + (n, n))

    def time_derivative(self, x, t):
        return self.rho * self.value(x, t)

    def __call__(self, x, t):
        return self.value(x, t)


def quadratic_barrier_constants(constants: GrowthConstants) -> tuple[QuadraticBarrier, QuadraticBarrier]:
    """Smallest ``(K, rho)`` for which the quadratic pair works on ``t <= 1/rho``.

    ``K = c_bar + 1`` and ``rho = 10 c + 12 c^2 + 2 c^2 K e / nu``; the factor
    ``e`` bounds ``exp(rho t)`` on the validity window.
    """
    c, nu = constants.c_bar, constants.nu
    K = c + 1.0
    rho = 10.0 * c + 12.0 * c * c + 2.0 * c * c * K * math.e / nu
    return QuadraticBarrier(K, rho, -1), QuadraticBarrier(K, rho, +1)


# --- heat barrier -----------------------------------------------------------


def chi_closed_form(s, t, R):
    """Erf form of the heat-kernel integral; used as an independent check."""
    s = np.asarray(s, dtype=float)
    if t == 0:
        return np.maximum(0.0, np.exp(s) - R)
    lnR = math.log(R)
    sd = math.sqrt(2.0 * t)
    first = np.exp(s + t) * special.ndtr((s + 2.0 * t - lnR) / sd)
    second = R * special.ndtr((s - lnR) / sd)
    return first - second


def chi(s: float, t: float, R: float) -> float:
    """``(4 pi t)^{-1/2} int_{ln R}^inf exp(-(s-y)^2/4t) (e^y - R) dy`` by quadrature."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    if t == 0:
        return max(0.0, math.exp(s) - R)
    # y = s + 2 sqrt(t) u turns the kernel into exp(-u^2) / sqrt(pi)
    lnR = math.log(R)
    scale = 2.0 * math.sqrt(t)
    lower = (lnR - s) / scale
    upper = max(lower, 0.0) + 20.0
    # Gaussian tail past `upper`: int exp(-u^2 + scale u + s) <= e^{s+t} erfc(upper - scale/2) / 2
    while math.exp(s + t) * 0.5 * math.erfc(upper - 0.5 * scale) > 1e-3 * QUAD_TOL:
        upper += 10.0
    if lower >= upper:
        return 0.0

    def integrand(u):
        return math.exp(-u * u) * (math.exp(s + scale * u) - R)

    value, _ = integrate.quad(integrand, lower, upper, epsabs=QUAD_TOL * 1e-2, epsrel=1e-13, limit=200)
    return max(value / math.sqrt(math.pi), 0.0)


def phi_heat(r: float, t: float, R: float) -> float:
    """Heat barrier in the original variable, ``phi(r, t) = chi(ln r, t)``."""
    if r < 0:
        raise DomainError(f"r must be nonnegative, got {r}")
    if r == 0:
        return 0.0
    return chi(math.log(r), t, R)


@dataclass(frozen=True)
class HeatBarrierParams:
    R: float
    horizon: float

    def __post_init__(self):
        if not (self.R > 0 and self.horizon > 0):
            raise ConfigurationError("R and horizon must be positive")

    def __call__(self, r, t):
        if t > self.horizon:
            raise DomainError(f"t={t} exceeds the horizon {self.horizon}")
        return phi_heat(r, t, self.R)


# --- strict supersolution ----------------------------------------------------


@dataclass(frozen=True)
class StrictSupersolutionParams:
    C: float
    L: float
    M: float
    eta: float
    mu: float
    nu: float
    R: float
    horizon: float
    c_bar: float
    c_hat: float

    def ledger(self) -> dict:
        """The constant inequalities with both sides, for reporting."""
        return {
            "M": (self.M, 16.0 * self.C**2 + 8.0 * self.C),
            "L": (self.L, 2.0 * self.C**3 * math.exp(self.horizon + 1.0) / (self.nu * (1.0 - self.mu))),
            "C": (self.C, max(self.c_bar, self.c_hat)),
        }

    def check(self):
        if not (0.0 < self.mu < 1.0):
            raise ConfigurationError(f"mu must lie in (0, 1), got {self.mu}")
        for name in ("eta", "nu", "R", "horizon"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name, (lhs, rhs) in self.ledger().items():
            if not lhs > rhs:
                raise ConfigurationError(f"constant {name}={lhs} must exceed {rhs}")
        return self


def strict_supersolution_constants(constants: GrowthConstants, horizon: float, mu: float = 0.5,
                                   R: float = 1.0, eta: float = DEFAULT_ETA, margin: float = 1.01):
    """Constants just above the required inequalities."""
    C = margin * max(constants.c_bar, constants.c_hat)
    M = margin * (16.0 * C * C + 8.0 * C)
    L = margin * 2.0 * C**3 * math.exp(horizon + 1.0) / (constants.nu * (1.0 - mu))
    return StrictSupersolutionParams(C=C, L=L, M=M, eta=eta, mu=mu, nu=constants.nu, R=R,
                                     horizon=horizon, c_bar=constants.c_bar, c_hat=constants.c_hat).check()


def strict_supersolution_value(params: StrictSupersolutionParams, x, t: float) -> float:
    """``phi(C(1+|x|^2) e^{L t}, M t) + eta t``."""
    params.check()
    if t < 0 or t > params.horizon or t * params.L > 1.0:
        raise DomainError(f"t={t} outside [0, min(horizon, 1/L)]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = params.C * (1.0 + float(x @ x)) * math.exp(params.L * t)
    return phi_heat(r, params.M * t, params.R) + params.eta * t


# --- rational barrier -------------------------------------------------------


@dataclass(frozen=True)
class RationalBarrier:
    K: float
    L: float
    R: float
    eta: float = DEFAULT_ETA

    def _check(self, t):
        if np.any(np.asarray(t) * self.L >= 1.0):
            raise DomainError(f"rational barrier is defined only for t < 1/L = {1.0 / self.L}")

    def value(self, x, t):
        self._check(t)
        x = np.asarray(x, dtype=float)
        excess = np.maximum(np.linalg.norm(x, axis=-1) - self.R, 0.0)
        return self.K * excess**2 / (1.0 - self.L * t) + self.eta * t

    def gradient(self, x, t):
        self._check(t)
        x = np.asarray(x, dtype=float)
        norm = np.linalg.norm(x, axis=-1)
        excess = np.maximum(norm - self.R, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm[..., None] > 0, x / norm[..., None], 0.0)
        return (2.0 * self.K * excess / (1.0 - self.L * t))[..., None] * unit

    def hessian(self, x, t):
        self._check(t)
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        norm = np.linalg.norm(x, axis=-1)[..., None, None]
        outside = norm > self.R
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm[..., 0] > 0, x / norm[..., 0], 0.0)
            ratio = np.where(outside, self.R / norm, 0.0)
        # D^2 ((|x| - R)^+)^2 = 2 [(1 - R/|x|) I + (R/|x|) u u^T] outside the ball
        core = (1.0 - ratio) * np.eye(n) + ratio * np.einsum("...i,...j->...ij", unit, unit)
        scale = 2.0 * self.K / (1.0 - self.L * t)
        return np.where(outside, scale * core, 0.0)

    def time_derivative(self, x, t):
        self._check(t)
        x = np.asarray(x, dtype=float)
        excess = np.maximum(np.linalg.norm(x, axis=-1) - self.R, 0.0)
        return self.K * self.L * excess**2 / (1.0 - self.L * t) ** 2 + self.eta

    def __call__(self, x, t):
        return self.value(x, t)


def rational_barrier_value(params: RationalBarrier, x, t):
    return params.value(x, t)
