"""Problem descriptions and closed-form Hamiltonian evaluation.

The equations handled here have the form

    w_t + F(x, t, Dw, D^2 w) = 0,      w(x, 0) = psi(x)         (initial)
   -w_t + F(x, t, Dw, D^2 w) = 0,      w(x, T) = psi(x)         (terminal)

where F is a sum of Hamiltonian terms. Every term is concave (inf over an
unbounded control set) or convex (sup over a control set) in the gradient,
and may carry a degenerate second-order part ``-Tr[a X]`` with ``a = s s^T``.

Coefficient fields are vectorised callables. A field of ``(x, t)`` receives
``x`` with shape ``(..., N)`` and a scalar ``t`` and returns an array whose
leading dimensions match ``x.shape[:-1]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.stats import qmc

Field = Callable[[np.ndarray, float], np.ndarray]

SYMMETRY_TOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ShapeError(ValueError):
    """Array dimensions are inconsistent with the problem dimension."""


class ConfigurationError(ValueError):
    """A configuration object violates its structural invariants."""


class ValidationError(ValueError):
    """A sampled audit of a growth or structure condition failed."""


class Orientation(str, enum.Enum):
    INITIAL = "initial"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class GrowthConstants:
    """Data bound ``c_bar``, control coercivity ``nu`` and solution growth ``c_hat``."""

    c_bar: float
    nu: float
    c_hat: float

    def __post_init__(self):
        for name in ("c_bar", "nu", "c_hat"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be a positive finite number, got {value}")


def constant_field(value) -> Field:
    """Return a field that is equal to ``value`` everywhere."""
    value = np.asarray(value, dtype=float)

    def _field(x, t):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(value, x.shape[:-1] + value.shape).copy()

    return _field


def _zero_vector_field(x, t):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape)


def _zero_scalar_field(x, t):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1])


@dataclass(frozen=True)
class ControlAffineDynamics:
    """Drift ``b0 + b_mat @ alpha`` and control-free diffusion ``sigma``.

    ``sigma`` may be ``None`` for first-order (deterministic) dynamics.
    """

    b_mat: Field
    b0: Field | None = None
    sigma: Field | None = None

    def drift0(self, x, t):
        return _zero_vector_field(x, t) if self.b0 is None else np.asarray(self.b0(x, t), dtype=float)

    def control_matrix(self, x, t):
        return np.asarray(self.b_mat(x, t), dtype=float)

    def diffusion(self, x, t):
        """Return ``sigma sigma^T`` with shape ``(..., N, N)``."""
        x = np.asarray(x, dtype=float)
        if self.sigma is None:
            n = x.shape[-1]
            return np.zeros(x.shape[:-1] + (n, n))
        s = np.asarray(self.sigma(x, t), dtype=float)
        return np.einsum("...ij,...kj->...ik", s, s)


@dataclass(frozen=True)
class RunningCost:
    """Running cost ``nu/2 |alpha|^2 + ell0(x, t)``."""

    nu: float
    ell0: Field | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}")

    def base(self, x, t):
        return _zero_scalar_field(x, t) if self.ell0 is None else np.asarray(self.ell0(x, t), dtype=float)

    def __call__(self, x, t, alpha):
        alpha = np.asarray(alpha, dtype=float)
        return 0.5 * self.nu * np.sum(alpha * alpha, axis=-1) + self.base(x, t)


def _check_shapes(x, p, X=None):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if p.ndim == 0:
        p = p[None]
    n = x.shape[-1]
    if p.shape[-1] != n:
        raise ShapeError(f"gradient has {p.shape[-1]} components, state has {n}")
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.ndim == 0 and n == 1:
            X = X.reshape(1, 1)
        if X.shape[-2:] != (n, n):
            raise ShapeError(f"Hessian has shape {X.shape[-2:]}, expected {(n, n)}")
    return x, p, X


def _trace_product(a, X):
    return np.einsum("...ik,...ki->...", a, X)


def _quadratic_parts(dynamics: ControlAffineDynamics, cost: RunningCost, x, t, p, X):
    x, p, X = _check_shapes(x, p, X)
    b0 = dynamics.drift0(x, t)
    B = dynamics.control_matrix(x, t)
    if b0.shape[-1] != x.shape[-1] or B.shape[-2] != x.shape[-1]:
        raise ShapeError("dynamics fields do not match the state dimension")
    linear = np.sum(b0 * p, axis=-1)
    bt_p = np.einsum("...ij,...i->...j", B, p)
    quad = np.sum(bt_p * bt_p, axis=-1) / (2.0 * cost.nu)
    second = _trace_product(dynamics.diffusion(x, t), X)
    return linear, cost.base(x, t), second, quad


@dataclass(frozen=True)
class InfQuadraticClosedForm:
    """``inf_alpha { <b, p> + l - Tr[s s^T X] }`` over ``alpha`` in R^k."""

    dynamics: ControlAffineDynamics
    cost: RunningCost

    def evaluate(self, x, t, p, X):
        return eval_inf_closed(self, x, t, p, X)

    def grad_bound(self, x, t, p_cap):
        return _closed_form_grad_bound(self.dynamics, self.cost, x, t, p_cap)

    def diffusion(self, x, t):
        return self.dynamics.diffusion(x, t)


@dataclass(frozen=True)
class SupQuadraticClosedForm:
    """``sup_alpha { -<b, p> - l - Tr[s s^T X] }`` over ``alpha`` in R^k."""

    dynamics: ControlAffineDynamics
    cost: RunningCost

    def evaluate(self, x, t, p, X):
        return eval_sup_closed(self, x, t, p, X)

    def grad_bound(self, x, t, p_cap):
        return _closed_form_grad_bound(self.dynamics, self.cost, x, t, p_cap)

    def diffusion(self, x, t):
        return self.dynamics.diffusion(x, t)


def _closed_form_grad_bound(dynamics, cost, x, t, p_cap):
    # |dF/dp| = |b0 +- B B^T p / nu| <= |b0| + |B|_2^2 |p| / nu
    x = np.asarray(x, dtype=float)
    b0 = dynamics.drift0(x, t)
    B = dynamics.control_matrix(x, t)
    spec_norm2 = np.linalg.norm(B, ord=2, axis=(-2, -1)) ** 2
    return np.linalg.norm(b0, axis=-1) + spec_norm2 * np.asarray(p_cap) / cost.nu


@dataclass(frozen=True)
class SupCompactGrid:
    """Finite-control sup term; ``g(x, t, beta)``, ``f(x, t, beta)``, ``c(x, t, beta)``."""

    beta_points: Sequence
    g: Callable
    f: Callable
    c: Callable | None = None

    def __post_init__(self):
        if len(self.beta_points) == 0:
            raise ConfigurationError("compact control grid must contain at least one point")

    def evaluate(self, x, t, p, X):
        return eval_sup_compact(self, x, t, p, X)

    def grad_bound(self, x, t, p_cap):
        x = np.asarray(x, dtype=float)
        norms = [np.linalg.norm(np.asarray(self.g(x, t, beta), dtype=float), axis=-1) for beta in self.beta_points]
        return np.max(np.stack(norms), axis=0)

    def diffusion(self, x, t):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (n, n))
        if self.c is None:
            return out
        # per-beta matrices; the largest diagonal entry matters for stability
        for beta in self.beta_points:
            cm = np.asarray(self.c(x, t, beta), dtype=float)
            out = np.maximum(out, np.einsum("...ij,...kj->...ik", cm, cm))
        return out


@dataclass(frozen=True)
class SigmaForm:
    """``sign * <Sigma(x, t) p, p>``."""

    Sigma: Field
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ConfigurationError("sign must be +1 or -1")

    def evaluate(self, x, t, p, X=None):
        return eval_sigma_form(self, x, t, p)

    def grad_bound(self, x, t, p_cap):
        S = np.asarray(self.Sigma(np.asarray(x, dtype=float), t), dtype=float)
        return 2.0 * np.linalg.norm(S, ord=2, axis=(-2, -1)) * np.asarray(p_cap)

    def diffusion(self, x, t):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.zeros(x.shape[:-1] + (n, n))


@dataclass(frozen=True)
class ScalarHForm:
    """``h(x) |p|^2`` with a scalar, possibly sign-changing ``h``."""

    h: Callable[[np.ndarray], np.ndarray]

    def evaluate(self, x, t, p, X=None):
        return eval_h_form(self, x, p)

    def grad_bound(self, x, t, p_cap):
        return 2.0 * np.abs(np.asarray(self.h(np.asarray(x, dtype=float)), dtype=float)) * np.asarray(p_cap)

    def diffusion(self, x, t):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.zeros(x.shape[:-1] + (n, n))


HamiltonianTerm = Union[InfQuadraticClosedForm, SupQuadraticClosedForm, SupCompactGrid, SigmaForm, ScalarHForm]


def inf_quadratic_bound(rho: float, gamma: float) -> float:
    """Lower bound ``-gamma^2 / (4 rho)`` of ``inf_a { rho |a|^2 + gamma |a| }``."""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    return -gamma * gamma / (4.0 * rho)


def inf_quadratic_exact(rho: float, gamma: float) -> float:
    """Exact minimum of ``rho r^2 + gamma r`` over ``r >= 0``."""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    return -gamma * gamma / (4.0 * rho) if gamma <= 0 else 0.0


def eval_inf_closed(term: InfQuadraticClosedForm, x, t, p, X):
    linear, ell0, second, quad = _quadratic_parts(term.dynamics, term.cost, x, t, p, X)
    return linear + ell0 - second - quad


def eval_sup_closed(term: SupQuadraticClosedForm, x, t, p, X):
    linear, ell0, second, quad = _quadratic_parts(term.dynamics, term.cost, x, t, p, X)
    return -linear - ell0 - second + quad


def eval_sup_compact(term: SupCompactGrid, x, t, p, X):
    x, p, X = _check_shapes(x, p, X)
    best = None
    for beta in term.beta_points:
        g = np.asarray(term.g(x, t, beta), dtype=float)
        f = np.asarray(term.f(x, t, beta), dtype=float)
        value = -np.sum(g * p, axis=-1) - f
        if term.c is not None:
            cm = np.asarray(term.c(x, t, beta), dtype=float)
            value = value - _trace_product(np.einsum("...ij,...kj->...ik", cm, cm), X)
        # strict comparison keeps the first maximiser on ties
        best = value if best is None else np.where(value > best, value, best)
    return best


def eval_sigma_form(term: SigmaForm, x, t, p):
    x, p, _ = _check_shapes(x, p)
    S = np.asarray(term.Sigma(x, t), dtype=float)
    if S.shape[-2:] != (x.shape[-1], x.shape[-1]):
        raise ShapeError(f"Sigma has shape {S.shape[-2:]}, expected square of size {x.shape[-1]}")
    if np.max(np.abs(S - np.swapaxes(S, -1, -2)), initial=0.0) > SYMMETRY_TOL:
        raise ValidationError("Sigma is not symmetric")
    return term.sign * np.einsum("...i,...ij,...j->...", p, S, p)


def eval_h_form(term: ScalarHForm, x, p):
    x, p, _ = _check_shapes(x, p)
    return np.asarray(term.h(x), dtype=float) * np.sum(p * p, axis=-1)


def mirror(term):
    """Swap inf and sup closed forms by reversing the control-free drift.

    ``eval_sup_closed(t, x, s, p, X) == -eval_inf_closed(mirror(t), x, s, -p, -X)``;
    the running cost is unchanged (``w -> -w`` negates the data instead).
    """
    b0 = term.dynamics.b0
    reversed_b0 = None if b0 is None else (lambda x, t: -np.asarray(b0(x, t), dtype=float))
    dyn = ControlAffineDynamics(term.dynamics.b_mat, reversed_b0, term.dynamics.sigma)
    if isinstance(term, SupQuadraticClosedForm):
        return InfQuadraticClosedForm(dyn, term.cost)
    if isinstance(term, InfQuadraticClosedForm):
        return SupQuadraticClosedForm(dyn, term.cost)
    raise TypeError(f"cannot mirror {type(term).__name__}")


@dataclass(frozen=True)
class ProblemSpec:
    """Hamiltonian terms plus data, orientation, horizon and growth constants."""

    terms: tuple
    data: Callable[[np.ndarray], np.ndarray]
    horizon: float
    constants: GrowthConstants
    dim: int = 1
    orientation: Orientation = Orientation.INITIAL
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        if not self.horizon > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if self.dim < 1:
            raise ConfigurationError("dimension must be a positive integer")

    def operator(self, x, t, p, X):
        return eval_full(self, x, t, p, X)

    def grad_bound(self, x, t, p_cap):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for term in self.terms:
            total = total + term.grad_bound(x, t, p_cap)
        return total

    def diffusion(self, x, t):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        total = np.zeros(x.shape[:-1] + (n, n))
        for term in self.terms:
            total = total + term.diffusion(x, t)
        return total

    def validate(self, box: float = 5.0, n_samples: int = 10_000):
        """Run the sampled growth audits; raises :class:`ValidationError`."""
        audit_data(self.data, self.constants, self.dim, box, n_samples)
        for term in self.terms:
            if isinstance(term, (InfQuadraticClosedForm, SupQuadraticClosedForm)):
                audit_dynamics(term.dynamics, self.constants, self.dim, self.horizon, box, n_samples)
                audit_cost(term.cost, self.constants, self.dim, self.horizon, box, n_samples)
            elif isinstance(term, SigmaForm):
                audit_sigma_form(term, self.dim, self.horizon, box, n_samples)
        return self


def eval_full(spec: ProblemSpec, x, t, p, X):
    """Sum of all term evaluations (the spatial operator ``F``)."""
    x, p, X = _check_shapes(x, p, X)
    total = np.zeros(np.broadcast_shapes(x.shape[:-1], p.shape[:-1]))
    for term in spec.terms:
        total = total + term.evaluate(x, t, p, X)
    if total.ndim == 0:
        return float(total)
    return total


# --- sampled audits -------------------------------------------------------


def sample_box(dim: int, box: float, n_samples: int, horizon: float | None = None, seed: int = 0):
    """Quasi-random points in ``[-box, box]^dim`` (and times in ``[0, horizon]``)."""
    d = dim + (1 if horizon is not None else 0)
    sampler = qmc.Halton(d=d, scramble=True, seed=seed)
    u = sampler.random(n_samples)
    xs = -box + 2.0 * box * u[:, :dim]
    if horizon is None:
        return xs, None
    return xs, horizon * u[:, dim]


def _time_buckets(xs, ts, n_buckets=8):
    # coefficient fields take a scalar time, so evaluate per time slab
    order = np.argsort(ts)
    for chunk in np.array_split(order, n_buckets):
        if len(chunk):
            yield xs[chunk], float(np.mean(ts[chunk]))


def audit_data(psi, constants: GrowthConstants, dim: int, box: float = 5.0, n_samples: int = 10_000):
    xs, _ = sample_box(dim, box, n_samples)
    values = np.asarray(psi(xs), dtype=float)
    bound = constants.c_bar * (1.0 + np.sum(xs * xs, axis=-1))
    ratio = np.abs(values) / bound
    if not np.all(np.isfinite(values)) or np.max(ratio) > 1.0:
        i = int(np.nanargmax(np.where(np.isfinite(ratio), ratio, np.inf)))
        raise ValidationError(f"data violates |psi| <= c_bar(1+|x|^2) at x={xs[i].tolist()}")
    return float(np.max(ratio))


def audit_dynamics(dyn: ControlAffineDynamics, constants, dim, horizon, box=5.0, n_samples=10_000):
    xs, ts = sample_box(dim, box, n_samples, horizon)
    c = constants.c_bar
    for x, t in _time_buckets(xs, ts):
        lin = c * (1.0 + np.linalg.norm(x, axis=-1))
        if np.any(np.linalg.norm(dyn.drift0(x, t), axis=-1) > lin * (1 + 1e-12)):
            raise ValidationError("drift b0 violates |b0| <= c_bar(1+|x|)")
        B = dyn.control_matrix(x, t)
        if np.any(np.linalg.norm(B, axis=(-2, -1)) > c * (1 + 1e-12)):
            raise ValidationError("control matrix violates |B| <= c_bar")
        if dyn.sigma is not None:
            s = np.asarray(dyn.sigma(x, t), dtype=float)
            if np.any(np.linalg.norm(s, axis=(-2, -1)) > lin * (1 + 1e-12)):
                raise ValidationError("diffusion violates |sigma| <= c_bar(1+|x|)")
    return True


def audit_cost(cost: RunningCost, constants, dim, horizon, box=5.0, n_samples=10_000):
    xs, ts = sample_box(dim, box, n_samples, horizon)
    for x, t in _time_buckets(xs, ts):
        floor = -constants.c_bar * (1.0 + np.sum(x * x, axis=-1))
        if np.any(cost.base(x, t) < floor * (1 + 1e-12)):
            raise ValidationError("running cost violates ell0 >= -c_bar(1+|x|^2)")
    return True


def audit_sigma_form(term: SigmaForm, dim, horizon, box=5.0, n_samples=10_000, c_bar=None):
    xs, ts = sample_box(dim, box, n_samples, horizon)
    for x, t in _time_buckets(xs, ts):
        S = np.asarray(term.Sigma(x, t), dtype=float)
        if np.max(np.abs(S - np.swapaxes(S, -1, -2)), initial=0.0) > SYMMETRY_TOL:
            raise ValidationError("Sigma is not symmetric on the audit sample")
        if c_bar is not None:
            eig = np.linalg.eigvalsh(S)
            if np.any(eig <= 0) or np.any(eig > c_bar):
                raise ValidationError("Sigma eigenvalues leave (0, c_bar]")
    return True
