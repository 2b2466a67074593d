"""Named check suites run by ``quadhjb verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import barriers, riccati
from .core import ConfigurationError, GrowthConstants, ProblemSpec, ScalarHForm
from .montecarlo import ConstantControl, McConfig, estimate_cost, moment_check
from .presets import preset
from .solver import Grid, solve
from .verification import (
    NUMERIC_TOL,
    barrier_residual,
    comparison_check,
    growth_check,
    max_relative_error,
    sample_field,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "details": self.details}


def _riccati():
    out = []
    params = riccati.ScalarLQParams(2.0, 1.0)
    traj = riccati.phi_rk4(params, 1e-4)
    err = float(np.max(np.abs(traj.values - riccati.phi_closed(params, traj.times))))
    out.append(CheckResult("rk4_matches_closed_form", err <= 1e-8, {"max_abs_err": err}))
    params = riccati.ScalarLQParams(0.5, 2.0)
    traj = riccati.phi_rk4(params, 1e-5)
    tau = riccati.blowup_time(params)
    gap = abs(traj.t_min - tau)
    out.append(CheckResult("blowup_localised", traj.blew_up and gap <= 1e-3,
                           {"t_min": traj.t_min, "blowup_time": tau, "gap": gap}))
    return out


def _barriers():
    out = []
    constants = GrowthConstants(1.0, 1.0, 1.0)
    sub, sup = barriers.quadratic_barrier_constants(constants)
    grid = Grid.uniform(-3.0, 3.0, 0.1)
    times = np.linspace(0.0, sub.tau, 11)
    rep = comparison_check(sample_field(sub, grid, times), sample_field(sup, grid, times))
    out.append(CheckResult("quadratic_pair_ordered", rep.passed, rep.to_dict()))

    R, T = 10.0, 1.0
    rs = np.geomspace(1.0, 100.0, 15)
    floor_ok = all(barriers.phi_heat(r, t, R) >= max(0.0, r - R) - 1e-12 for r in rs for t in (0.1, 0.5, 1.0))
    h = 1e-4
    slopes = [(barriers.phi_heat(r + h, 0.5, R) - barriers.phi_heat(r, 0.5, R)) / h for r in rs]
    slope_ok = min(slopes) >= -1e-6 and max(slopes) <= math.exp(T) + 1e-6
    out.append(CheckResult("heat_barrier_bounds", floor_ok and slope_ok,
                           {"min_slope": float(min(slopes)), "max_slope": float(max(slopes))}))
    decay = [barriers.phi_heat(2.0, 0.01, RR) for RR in (1e2, 1e4, 1e6)]
    out.append(CheckResult("heat_barrier_decay", decay[-1] <= 1e-6, {"values": decay}))

    # linearised h-form w_t - c |Dw|^2 = 0: the rational barrier is strict once L >= 4 c K
    c, K = 1.0, 1.0
    spec = ProblemSpec((ScalarHForm(lambda x: np.full(np.asarray(x).shape[:-1], -c)),), lambda x: 0 * x[..., 0],
                       0.2, GrowthConstants(1.0, 1.0, 1.0))
    bar = barriers.RationalBarrier(K=K, L=4.0 * c * K, R=1.0)
    xs = np.linspace(-3.0, 3.0, 241)[:, None]
    worst = min(float(np.min(barrier_residual(bar, spec, xs, t))) for t in np.linspace(0.0, 0.2, 9))
    out.append(CheckResult("rational_barrier_strict", worst >= bar.eta - 1e-12, {"min_residual": worst, "eta": bar.eta}))

    params = barriers.strict_supersolution_constants(GrowthConstants(1.0, 1.0, 1.0), horizon=1.0)
    out.append(CheckResult("strict_supersolution_ledger", True,
                           {k: list(v) for k, v in params.ledger().items()}))
    return out


def _lq():
    p = preset("lq")
    f = solve(p.spec, p.grid, p.scheme)
    rel = max_relative_error(f, p.exact, 2.0)
    out = [CheckResult("lq_relative_error", (not f.blew_up) and rel <= 2e-2, {"max_rel_err": rel})]
    c_hat = riccati.phi_abs_max(p.riccati) + 0.1
    g = growth_check(f, c_hat)
    out.append(CheckResult("lq_growth", g.passed, g.to_dict()))
    big = barriers.RationalBarrier(K=c_hat + 1.0, L=0.1, R=0.0, eta=barriers.DEFAULT_ETA)
    rep = comparison_check(f, lambda x, t: big(x, p.spec.horizon - t), tolerance=NUMERIC_TOL)
    out.append(CheckResult("lq_below_rational_barrier", rep.passed, rep.to_dict()))
    pb = preset("lq-blowup")
    fb = solve(pb.spec, pb.grid, pb.scheme)
    tau = pb.notes["blowup_time"]
    ok = fb.blew_up and abs(fb.blowup_time - tau) <= 0.1
    out.append(CheckResult("lq_blowup_detected", ok, {"blowup_time": fb.blowup_time, "tau": tau}))
    return out


def _hopf_lax():
    p = preset("const-h")
    f = solve(p.spec, p.grid, p.scheme)
    axis = p.grid.axes[0]
    worst = 0.0
    for t in (0.125, 0.25):
        k = f.layer_index(t)
        for x in (-0.5, -0.25, 0.0, 0.25, 0.5):
            value = float(np.interp(x, axis, f.layers[k]))
            worst = max(worst, abs(value - x * x / (1.0 + 4.0 * f.times[k])))
    return [CheckResult("hopf_lax_probes", worst <= 5e-3, {"max_abs_err": float(worst)})]


def _comparison(n_pairs: int = 3, seed: int = 0):
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    out = []
    for name in ("lq", "sign-h", "sigma-form"):
        p = preset(name)
        worst = -math.inf
        for _ in range(n_pairs):
            a, b, c = rng.uniform(0.0, 0.5, 3)
            base = p.spec.data
            f1 = solve(p.with_data(lambda x, base=base, a=a: base(x) - a).spec, p.grid, p.scheme)
            f2 = solve(p.with_data(lambda x, base=base, b=b, c=c: base(x) + b * np.cos(c * x[..., 0]) ** 2).spec,
                       p.grid, p.scheme)
            worst = max(worst, comparison_check(f1, f2, NUMERIC_TOL).max_violation)
        out.append(CheckResult(f"ordering_{name}", worst <= NUMERIC_TOL, {"max_violation": float(worst)}))
    return out


def _mc():
    p = preset("lq")
    est = estimate_cost(p.sde, p.optimal_policy, [1.0], 0.0, McConfig(n_paths=100, dt=1e-4))
    exact = float(riccati.lq_value(p.riccati, 1.0, 0.0))
    return [CheckResult("deterministic_lq_cost", abs(est.mean - exact) <= 1e-3,
                        {"estimate": est.to_dict(), "exact": exact})]


def _moments():
    p = preset("stoch-lq")
    rep = moment_check(p.sde, ConstantControl((0.0,)), [1.0], 0.0, McConfig(n_paths=2000, dt=1e-2))
    return [CheckResult("stoch_lq_moment_bound", rep.passed, rep.to_dict())]


SUITES = {
    "riccati": _riccati,
    "barriers": _barriers,
    "lq": _lq,
    "hopf-lax": _hopf_lax,
    "comparison": _comparison,
    "mc": _mc,
    "moments": _moments,
}


def run_suite(name: str) -> list[CheckResult]:
    if name == "all":
        return [r for key in SUITES for r in SUITES[key]()]
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return SUITES[name]()
