import numpy as np
import pytest

from quadhjb.core import ConfigurationError, Orientation, ScalarHForm, eval_h_form
from quadhjb.presets import PRESETS, UnknownPresetError, preset
from quadhjb.riccati import phi_closed


@pytest.mark.parametrize("name", list(PRESETS))
def test_every_preset_builds_and_validates(name):
    p = preset(name)
    assert p.name == name
    assert p.equation
    assert p.spec.data(p.grid.points).shape == p.grid.n


def test_unknown_preset_and_bad_parameters():
    with pytest.raises(UnknownPresetError) as err:
        preset("nope")
    assert "lq" in str(err.value) and "sigma-form" in str(err.value)
    with pytest.raises(ConfigurationError):
        preset("lq", bogus=1)
    with pytest.raises(ConfigurationError):
        preset("lq-blowup", rho=2.0)


def test_lq_operator_matches_riccati_residual():
    p = preset("lq", rho=2.0, T=1.0)
    assert p.spec.orientation is Orientation.TERMINAL
    rho = 2.0
    x = np.linspace(-2, 2, 9)[:, None]
    for t in (0.0, 0.3, 0.9):
        phi = float(phi_closed(p.riccati, t))
        F = p.spec.operator(x, t, 2 * phi * x, np.full((len(x), 1, 1), 2 * phi))
        # -w_t + F = 0 with w_t = phi' x^2 and phi' = phi^2/rho - rho
        assert np.allclose(F, (phi**2 / rho - rho) * x[:, 0] ** 2, atol=1e-12)


def test_sign_h_vanishes_at_origin():
    p = preset("sign-h")
    (term,) = p.spec.terms
    assert isinstance(term, ScalarHForm)
    ps = np.linspace(-50, 50, 11)[:, None]
    assert np.all(eval_h_form(term, np.zeros((11, 1)), ps) == 0.0)


def test_risk_sensitive_eps_zero_is_robust_limit():
    a, b = preset("risk-sensitive", eps=0.0), preset("robust-limit")
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, (200, 1))
    p = rng.normal(size=(200, 1))
    X = rng.normal(size=(200, 1, 1))
    assert len(a.spec.terms) == len(b.spec.terms)
    for ta, tb in zip(a.spec.terms, b.spec.terms):
        assert type(ta) is type(tb)
    for t in (0.0, 0.2):
        assert np.array_equal(a.spec.operator(x, t, p, X), b.spec.operator(x, t, p, X))


def test_exact_oracles_solve_their_equations():
    for name in ("sigma-form", "const-h"):
        p = preset(name)
        x = np.linspace(-1, 1, 5)[:, None]
        assert np.allclose(p.exact(x, 0.0), p.spec.data(x))


def test_stoch_lq_noise_convention():
    p = preset("stoch-lq", D=0.5)
    x = np.array([[0.3]])
    a_pde = p.spec.diffusion(x, 0.0)
    sig = np.asarray(p.sde.dynamics.sigma(x, 0.0))
    # the PDE carries sigma sigma^T without the 1/2 factor
    assert np.allclose(2 * a_pde, sig @ np.swapaxes(sig, -1, -2))


def test_with_data_drops_exact():
    p = preset("lq")
    q = p.with_data(lambda x: np.zeros(x.shape[:-1]))
    assert q.exact is None and p.exact is not None
    assert q.spec.data(np.ones((1, 1)))[0] == 0.0
