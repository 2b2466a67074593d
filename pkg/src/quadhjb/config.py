"""Scenario configuration: YAML documents naming a preset or an inline problem.

Inline problems give coefficients as expression strings in the symbols
``x`` (and ``y`` in 2-D), ``t`` and, for compact-control terms, ``beta``.
Expressions are parsed with sympy and compiled to numpy functions.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy
import yaml

from .core import (
    ConfigurationError,
    ControlAffineDynamics,
    GrowthConstants,
    InfQuadraticClosedForm,
    ProblemSpec,
    RunningCost,
    ScalarHForm,
    SigmaForm,
    SupCompactGrid,
    SupQuadraticClosedForm,
)
from .montecarlo import McConfig
from .presets import PRESETS, Preset, preset
from .solver import Grid, SchemeConfig

COMMANDS = ("solve", "riccati", "barrier", "mc", "verify")
SCHEME_KEYS = ("dt", "cfl_safety", "theta", "p_max", "blowup_threshold")
MC_KEYS = ("n_paths", "dt", "seed", "truncation")
RUN_PARAMS = ("x0", "moments")  # consumed by commands, never passed to preset builders


@dataclass
class ScenarioConfig:
    command: str = "solve"
    preset: str | None = None
    params: dict = field(default_factory=dict)
    inline: dict | None = None
    grid: dict = field(default_factory=dict)
    scheme: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    expect_blowup: bool | None = None
    policy: str = "auto"
    suite: str = "all"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.command in ("solve", "mc") and (self.preset is None) == (self.inline is None):
            raise ConfigurationError("exactly one of 'preset' and 'inline' must be given")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        for key in self.scheme:
            if key not in SCHEME_KEYS:
                raise ConfigurationError(f"unknown scheme key {key!r}")
        for key in self.mc:
            if key not in MC_KEYS:
                raise ConfigurationError(f"unknown mc key {key!r}")
        if "seed" in self.mc:
            seed = self.mc["seed"]
            if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
                raise ConfigurationError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ScenarioConfig":
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("config document must be a mapping")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.dumps())


def _floats(d: dict) -> dict:
    return {k: (float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v) for k, v in d.items()}


def scheme_config(cfg: ScenarioConfig, base: SchemeConfig) -> SchemeConfig:
    return dataclasses.replace(base, **_floats(cfg.scheme))


def mc_config(cfg: ScenarioConfig) -> McConfig:
    values = dict(cfg.mc)
    if "n_paths" in values:
        values["n_paths"] = int(values["n_paths"])
    for key in ("dt", "truncation"):
        if key in values:
            values[key] = float(values[key])
    return McConfig(**values)


def build_preset(cfg: ScenarioConfig) -> Preset:
    """Resolve the scenario to a :class:`Preset` with grid overrides applied."""
    if cfg.inline is not None:
        p = inline_preset(cfg.inline)
    else:
        params = {k: v for k, v in cfg.params.items() if k not in RUN_PARAMS}
        for key in ("dx", "L"):
            if key in cfg.grid:
                params[key] = cfg.grid[key]
        p = preset(cfg.preset, **params)
    return dataclasses.replace(p, scheme=scheme_config(cfg, p.scheme))


# --- inline problems ---------------------------------------------------------

_SYMBOLS = {name: sympy.Symbol(name, real=True) for name in ("x", "y", "t", "beta")}
_NUMPY = [{"Heaviside": lambda v: np.heaviside(v, 0.5)}, "numpy"]


def _compile(expr, dim: int, with_beta: bool = False):
    names = ["x", "y"][:dim]
    try:
        parsed = sympy.sympify(str(expr), locals=_SYMBOLS)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse expression {expr!r}: {exc}") from None
    allowed = {_SYMBOLS[n] for n in names} | {_SYMBOLS["t"]} | ({_SYMBOLS["beta"]} if with_beta else set())
    extra = parsed.free_symbols - allowed
    if extra:
        raise ConfigurationError(f"expression {expr!r} uses unknown symbols {sorted(map(str, extra))}")
    args = [_SYMBOLS[n] for n in names] + [_SYMBOLS["t"], _SYMBOLS["beta"]]
    fn = sympy.lambdify(args, parsed, modules=_NUMPY)

    def evaluate(x, t, beta=0.0):
        x = np.asarray(x, dtype=float)
        coords = [x[..., i] for i in range(dim)]
        out = np.asarray(fn(*coords, float(t), beta), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]).copy()

    return evaluate


def _vector_field(exprs, dim):
    parts = [_compile(e, dim) for e in exprs]
    if len(parts) != dim:
        raise ConfigurationError(f"vector field needs {dim} components")
    return lambda x, t: np.stack([f(x, t) for f in parts], axis=-1)


def _matrix_field(rows, dim, n_rows=None):
    rows = [list(r) for r in rows]
    if n_rows is not None and len(rows) != n_rows:
        raise ConfigurationError(f"matrix field needs {n_rows} rows")
    parts = [[_compile(e, dim) for e in r] for r in rows]
    return lambda x, t: np.stack([np.stack([f(x, t) for f in r], axis=-1) for r in parts], axis=-2)


def _term(d: dict, dim: int):
    kind = d.get("kind")
    if kind in ("inf_closed", "sup_closed"):
        dyn = ControlAffineDynamics(
            b_mat=_matrix_field(d["b_mat"], dim, dim),
            b0=_vector_field(d["b0"], dim) if "b0" in d else None,
            sigma=_matrix_field(d["sigma"], dim, dim) if "sigma" in d else None,
        )
        ell0 = _compile(d["ell0"], dim) if "ell0" in d else None
        cost = RunningCost(float(d["nu"]), ell0)
        return (InfQuadraticClosedForm if kind == "inf_closed" else SupQuadraticClosedForm)(dyn, cost)
    if kind == "sigma":
        return SigmaForm(_matrix_field(d["Sigma"], dim, dim), int(d.get("sign", 1)))
    if kind == "h":
        h = _compile(d["h"], dim)
        return ScalarHForm(lambda x: h(x, 0.0))
    if kind == "compact":
        g_parts = [_compile(e, dim, True) for e in d["g"]]
        f = _compile(d["f"], dim, True)
        return SupCompactGrid(
            beta_points=tuple(float(b) for b in d["beta"]),
            g=lambda x, t, b: np.stack([gi(x, t, b) for gi in g_parts], axis=-1),
            f=lambda x, t, b: f(x, t, b),
        )
    raise ConfigurationError(f"unknown term kind {kind!r}")


def inline_spec(d: dict) -> ProblemSpec:
    dim = int(d.get("dim", 1))
    data = _compile(d["data"], dim)
    consts = d.get("constants", {})
    spec = ProblemSpec(
        terms=tuple(_term(term, dim) for term in d.get("terms", [])),
        data=lambda x: data(x, 0.0),
        horizon=float(d["horizon"]),
        constants=GrowthConstants(float(consts.get("c_bar", 1.0)), float(consts.get("nu", 1.0)),
                                  float(consts.get("c_hat", 1.0))),
        dim=dim,
        orientation=d.get("orientation", "initial"),
        name=str(d.get("name", "inline")),
    )
    return spec.validate()


def inline_preset(d: dict) -> Preset:
    spec = inline_spec(d)
    half = float(d.get("L", 3.0))
    dx = float(d.get("dx", 0.05))
    if not (math.isfinite(dx) and dx > 0 and half > 0):
        raise ConfigurationError("dx and L must be positive")
    grid = Grid.uniform([-half] * spec.dim, [half] * spec.dim, dx)
    return Preset(name=spec.name, spec=spec, grid=grid, scheme=SchemeConfig(), params=dict(d),
                  equation="inline")
