"""Named problem presets.

Each preset bundles a validated :class:`ProblemSpec`, a default grid and
scheme, and whatever oracle is available (closed-form field, Riccati
parameters, or an SDE for Monte-Carlo cross-validation).

Diffusion convention: Hamiltonian terms carry ``-Tr[s s^T X]`` without a
factor one half, so an SDE with noise coefficient ``sigma`` enters the PDE
with ``s = sigma / sqrt(2)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    ConfigurationError,
    ControlAffineDynamics,
    GrowthConstants,
    InfQuadraticClosedForm,
    Orientation,
    ProblemSpec,
    RunningCost,
    ScalarHForm,
    SigmaForm,
    SupCompactGrid,
    SupQuadraticClosedForm,
    constant_field,
)
from .montecarlo import LinearGainFamily, LinearFeedback, SdeSpec
from .riccati import ScalarLQParams, blowup_time, lq_value, phi_abs_max, phi_closed
from .solver import Grid, SchemeConfig

SQRT2 = math.sqrt(2.0)


class UnknownPresetError(ConfigurationError):
    pass


@dataclass
class Preset:
    name: str
    spec: ProblemSpec
    grid: Grid
    scheme: SchemeConfig
    params: dict
    equation: str
    exact: Callable | None = None
    riccati: ScalarLQParams | None = None
    sde: SdeSpec | None = None
    policy_family: object = None
    optimal_policy: object = None
    x0: float = 1.0
    expect_blowup: bool = False
    notes: dict = field(default_factory=dict)

    def with_data(self, psi) -> "Preset":
        return dataclasses.replace(self, spec=dataclasses.replace(self.spec, data=psi), exact=None)


def _sq(x):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def _grid_1d(half_width, dx):
    return Grid.uniform(-half_width, half_width, dx)


# --- linear-quadratic --------------------------------------------------------


def _lq(rho=2.0, T=1.0, dx=0.05, L=4.0, p_max=None, name="lq"):
    params = ScalarLQParams(float(rho), float(T))
    rho = params.rho
    dyn = ControlAffineDynamics(b_mat=constant_field([[1.0]]))
    cost = RunningCost(2.0 * rho, lambda x, t: rho * _sq(x))
    c_hat = phi_abs_max(params)
    if not math.isfinite(c_hat):
        c_hat = 1.0  # no global bound; the gradient cap comes from p_max instead
    spec = ProblemSpec(
        terms=(SupQuadraticClosedForm(dyn, cost),),
        data=lambda x: -_sq(x),
        horizon=params.T,
        constants=GrowthConstants(c_bar=max(1.0, rho), nu=2.0 * rho, c_hat=c_hat),
        orientation=Orientation.TERMINAL,
        name=name,
    ).validate()
    tau = blowup_time(params)

    def exact(x, t):
        return lq_value(params, np.asarray(x, dtype=float)[..., 0], t)

    sde = SdeSpec(dyn, cost, lambda x: -_sq(x), params.T, spec.constants)
    policy = None
    if tau is None:
        policy = LinearFeedback(lambda t: np.array([[-phi_closed(params, t) / rho]]))
    return Preset(
        name=name,
        spec=spec,
        grid=_grid_1d(L, dx),
        scheme=SchemeConfig(p_max=p_max),
        params={"rho": rho, "T": params.T, "dx": dx, "L": L, "p_max": p_max},
        equation="-w_t + |w_x|^2/(4 rho) = rho x^2, w(x,T) = -x^2",
        exact=exact if tau is None else None,
        riccati=params,
        sde=sde,
        policy_family=LinearGainFamily(n_cells=1),
        optimal_policy=policy,
        x0=1.0,
        expect_blowup=tau is not None,
        notes={"blowup_time": tau},
    )


def lq(rho=2.0, T=1.0, dx=0.05, L=4.0, p_max=None):
    return _lq(rho, T, dx, L, p_max, "lq")


def lq_blowup(rho=0.5, T=2.0, dx=0.05, L=4.0, p_max=100.0):
    # the default cap 2 c_hat (1 + L) is far below the gradients near blow-up
    if not rho < 1.0:
        raise ConfigurationError("lq-blowup needs rho < 1")
    return _lq(rho, T, dx, L, p_max, "lq-blowup")


def stoch_lq(T=1.0, A=0.0, B=1.0, C=0.0, D=0.5, Q=1.0, R=1.0, dx=0.05, L=4.0, n_cells=4, x0=1.0):
    """Scalar ``dX = (A X + B a) ds + (C X + D) dW``, cost ``int Q X^2 + R a^2``, zero terminal cost."""
    A, B, C, D, Q, R = (float(v) for v in (A, B, C, D, Q, R))
    c_bar = max(1.0, abs(A), abs(B), abs(C), abs(D), Q)
    sigma_sde = lambda x, t: (C * np.asarray(x)[..., :1] + D)[..., None]
    sigma_pde = lambda x, t: sigma_sde(x, t) / SQRT2
    b0 = lambda x, t: A * np.asarray(x, dtype=float)
    ell0 = lambda x, t: Q * _sq(x)
    cost = RunningCost(2.0 * R, ell0)
    constants = GrowthConstants(c_bar=c_bar, nu=2.0 * R, c_hat=c_bar * (1.0 + T))
    pde_dyn = ControlAffineDynamics(b_mat=constant_field([[B]]), b0=b0, sigma=sigma_pde)
    spec = ProblemSpec(
        terms=(SupQuadraticClosedForm(pde_dyn, cost),),
        data=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        horizon=float(T),
        constants=constants,
        orientation=Orientation.TERMINAL,
        name="stoch-lq",
    ).validate()
    sde_dyn = ControlAffineDynamics(b_mat=constant_field([[B]]), b0=b0, sigma=sigma_sde)
    sde = SdeSpec(sde_dyn, cost, lambda x: np.zeros(np.asarray(x).shape[:-1]), float(T), constants).validate()
    return Preset(
        name="stoch-lq",
        spec=spec,
        grid=_grid_1d(L, dx),
        scheme=SchemeConfig(),
        params={"T": T, "A": A, "B": B, "C": C, "D": D, "Q": Q, "R": R, "dx": dx, "L": L},
        equation="-w_t - (Cx+D)^2 w_xx/2 - A x w_x + B^2 w_x^2/(4R) = Q x^2, w(x,T) = 0",
        sde=sde,
        policy_family=LinearGainFamily(n_cells=int(n_cells), lower=-5.0, upper=5.0),
        x0=float(x0),
    )


def finance(T=1.0, beta=0.4, delta=0.5, corr=0.3, kappa=0.5, m=0.3, dx=0.05, L=4.0):
    """``-w_t - beta^2 w_xx / 2 + F(x, w_x) = 0``, ``w(x, T) = 0``.

    ``F(x, p) = delta^2 p^2 / 2 - k(x) p - m(x)^2`` with ``k = a(x) - m(x) beta corr``,
    ``a(x) = -kappa x`` and ``m(x) = m tanh(x)``.
    """
    beta, delta, corr, kappa, m = (float(v) for v in (beta, delta, corr, kappa, m))

    def ratio(x):
        return m * np.tanh(np.asarray(x, dtype=float))

    def k(x, t):
        x = np.asarray(x, dtype=float)
        return -kappa * x - ratio(x) * beta * corr

    dyn = ControlAffineDynamics(
        b_mat=constant_field([[delta]]),
        b0=k,
        sigma=constant_field([[beta / SQRT2]]),
    )
    cost = RunningCost(1.0, lambda x, t: np.sum(ratio(x) ** 2, axis=-1))
    c_bar = max(1.0, kappa + m * abs(beta * corr), delta, beta, m * m)
    spec = ProblemSpec(
        terms=(SupQuadraticClosedForm(dyn, cost),),
        data=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        horizon=float(T),
        constants=GrowthConstants(c_bar=c_bar, nu=1.0, c_hat=c_bar),
        orientation=Orientation.TERMINAL,
        name="finance",
    ).validate()
    return Preset(
        name="finance",
        spec=spec,
        grid=_grid_1d(L, dx),
        scheme=SchemeConfig(),
        params={"T": T, "beta": beta, "delta": delta, "corr": corr, "kappa": kappa, "m": m, "dx": dx, "L": L},
        equation="-w_t - beta^2 w_xx/2 + delta^2 w_x^2/2 - k(x) w_x - m(x)^2 = 0, w(x,T) = 0",
    )


def risk_sensitive(eps=0.1, gamma=2.0, T=0.5, n_beta=21, dx=0.05, L=3.0, name="risk-sensitive"):
    """1-D risk-sensitive equation with ``c = 1``, ``g = -x + beta``, ``f = x^2/2``, ``beta in [-1, 1]``."""
    eps, gamma = float(eps), float(gamma)
    if eps < 0:
        raise ConfigurationError("eps must be nonnegative")
    sigma = None
    if eps > 0:
        sigma = constant_field([[math.sqrt(eps / (2.0 * gamma**2))]])
    dyn = ControlAffineDynamics(b_mat=constant_field([[-1.0]]), sigma=sigma)
    inf_term = InfQuadraticClosedForm(dyn, RunningCost(gamma**2))
    betas = tuple(np.linspace(-1.0, 1.0, int(n_beta)))
    game = SupCompactGrid(
        beta_points=betas,
        g=lambda x, t, b: -np.asarray(x, dtype=float) + b,
        f=lambda x, t, b: 0.5 * _sq(x),
    )
    spec = ProblemSpec(
        terms=(inf_term, game),
        data=lambda x: 0.5 * _sq(x),
        horizon=float(T),
        constants=GrowthConstants(c_bar=1.0, nu=gamma**2, c_hat=2.0),
        orientation=Orientation.TERMINAL,
        name=name,
    ).validate()
    return Preset(
        name=name,
        spec=spec,
        grid=_grid_1d(L, dx),
        scheme=SchemeConfig(),
        params={"eps": eps, "gamma": gamma, "T": T, "n_beta": int(n_beta), "dx": dx, "L": L},
        equation="-w_t - |w_x|^2/(2 gamma^2) + max_b{(x - b) w_x - x^2/2} - eps w_xx/(2 gamma^2) = 0, w(x,T) = x^2/2",
    )


def robust_limit(gamma=2.0, T=0.5, n_beta=21, dx=0.05, L=3.0):
    return risk_sensitive(0.0, gamma, T, n_beta, dx, L, name="robust-limit")


def sign_h(T=0.25, dx=0.02, L=3.0):
    # where h < 0 the data |x|^2/4 grows like |x|^2 / (4 - 4|h| t): finite up to t = 1
    h = lambda x: np.tanh(np.asarray(x, dtype=float)[..., 0]) ** 3
    spec = ProblemSpec(
        terms=(ScalarHForm(h),),
        data=lambda x: 0.25 * _sq(x),
        horizon=float(T),
        constants=GrowthConstants(c_bar=1.0, nu=1.0, c_hat=1.0),
        name="sign-h",
    ).validate()
    return Preset(
        name="sign-h",
        spec=spec,
        grid=_grid_1d(L, dx),
        scheme=SchemeConfig(),
        params={"T": T, "dx": dx, "L": L},
        equation="w_t + tanh(x)^3 |w_x|^2 = 0, w(x,0) = x^2/4",
    )


def _hopf_lax_exact(h):
    def exact(x, t):
        return _sq(x) / (1.0 + 4.0 * h * t)

    return exact


def sigma_form(sigma=0.5, dim=1, T=0.25, dx=0.05, L=3.0):
    """``w_t + <Sigma Dw, Dw> = 0`` with ``Sigma = sigma * I`` and ``w(x, 0) = |x|^2``."""
    sigma, dim = float(sigma), int(dim)
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    term = SigmaForm(constant_field(sigma * np.eye(dim)), sign=1)
    spec = ProblemSpec(
        terms=(term,),
        data=_sq,
        horizon=float(T),
        constants=GrowthConstants(c_bar=max(1.0, sigma), nu=1.0, c_hat=1.0),
        dim=dim,
        name="sigma-form",
    ).validate()
    return Preset(
        name="sigma-form",
        spec=spec,
        grid=Grid.uniform([-L] * dim, [L] * dim, dx),
        scheme=SchemeConfig(),
        params={"sigma": sigma, "dim": dim, "T": T, "dx": dx, "L": L},
        equation="w_t + <Sigma Dw, Dw> = 0, w(x,0) = |x|^2",
        exact=_hopf_lax_exact(sigma),
    )


def const_h(h=1.0, T=0.25, dx=0.02, L=3.0):
    h = float(h)
    if not h > 0:
        raise ConfigurationError("h must be positive")
    spec = ProblemSpec(
        terms=(ScalarHForm(lambda x: np.full(np.asarray(x).shape[:-1], h)),),
        data=_sq,
        horizon=float(T),
        constants=GrowthConstants(c_bar=1.0, nu=1.0, c_hat=1.0),
        name="const-h",
    ).validate()
    return Preset(
        name="const-h",
        spec=spec,
        grid=_grid_1d(L, dx),
        scheme=SchemeConfig(),
        params={"h": h, "T": T, "dx": dx, "L": L},
        equation="w_t + h |w_x|^2 = 0, w(x,0) = x^2",
        exact=_hopf_lax_exact(h),
    )


PRESETS = {
    "lq": lq,
    "lq-blowup": lq_blowup,
    "stoch-lq": stoch_lq,
    "finance": finance,
    "risk-sensitive": risk_sensitive,
    "robust-limit": robust_limit,
    "sign-h": sign_h,
    "sigma-form": sigma_form,
    "const-h": const_h,
}


def preset(name: str, **params) -> Preset:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for preset {name!r}: {exc}") from None
