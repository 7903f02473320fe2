import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontlab.model import (
    ConfigError,
    ModelParams,
    Nonlinearity,
    RoadFieldState,
    eval_reaction,
    make_params,
    parse_config_text,
    positive_zero_v0,
)

BASE = dict(alpha=0.5, a=1, mu=1, nu=1, t_final=10, X=600, Y=40, nx=256, ny=64, dt=0.01)


def test_make_params_derived():
    p = make_params(BASE)
    assert p.lambda_star == 0.5
    assert p.dx == pytest.approx(2 * 600 / 256)
    assert p.dy == pytest.approx(40 / 64)


def test_alpha_075_rates():
    p = make_params(dict(BASE, alpha=0.75, X=2000))
    assert p.lambda_star == pytest.approx(0.4)
    assert p.drift_exponent == pytest.approx(0.6)


def test_alpha_out_of_range():
    with pytest.raises(ConfigError, match="alpha out of range"):
        make_params(dict(BASE, alpha=1.5))


@pytest.mark.parametrize("key,value,msg", [
    ("mu", 0, "mu must be > 0"),
    ("nu", -1, "nu must be > 0"),
    ("Y", 20, r"Y >= 2\*sqrt\(a\)\*t_final \+ 10"),
    ("X", 100, r"X >= 4\*exp"),
    ("nx", 4, "nx >= 8"),
    ("dt", 0.5, "dt\\*a <= 0.25"),
])
def test_rejections_name_the_inequality(key, value, msg):
    with pytest.raises(ConfigError, match=msg):
        make_params(dict(BASE, **{key: value}))


def test_aliases_and_unknown_key():
    p = make_params(dict(alpha=0.5, domain_half_width=600, strip_height=40, t_final=10))
    assert p.X == 600 and p.Y == 40
    with pytest.raises(ConfigError, match="unknown parameter"):
        make_params(dict(BASE, bogus=1))


def test_config_text_roundtrip():
    text = "# experiment\nalpha = 0.5\nX: 600\nY = 40  # strip\nt_final = 10\n"
    p = make_params(parse_config_text(text))
    assert p.X == 600 and p.alpha == 0.5
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("alpha = 0.5\nalpha = 0.6\n")


def test_reaction_values():
    lg = Nonlinearity("logistic", 1.0)
    assert eval_reaction(lg, 0.0) == 0.0
    assert eval_reaction(lg, 1.0) == 0.0
    th = Nonlinearity("threshold", 1.0, 0.3)
    assert eval_reaction(th, 0.2) == 0.2


def test_positive_zero():
    assert positive_zero_v0(Nonlinearity("logistic", 1.0)) == pytest.approx(1.0, abs=1e-12)
    assert positive_zero_v0(Nonlinearity("logistic", 2.0)) == pytest.approx(2.0, abs=1e-12)
    # root of v = ((v - 0.3)/0.7)^3 above theta; high-precision findroot gives exactly 1
    th = Nonlinearity("threshold", 1.0, 0.3)
    v0 = positive_zero_v0(th)
    assert v0 == pytest.approx(1.0, abs=1e-12)
    assert abs(eval_reaction(th, v0)) <= 1e-10


NL = st.one_of(
    st.builds(Nonlinearity, st.just("logistic"), st.floats(0.2, 3.0)),
    st.builds(Nonlinearity, st.just("threshold"), st.floats(0.5, 2.0), st.floats(0.05, 0.9)),
)


@settings(max_examples=40, deadline=None)
@given(NL)
def test_kpp_envelope_and_convexity(nl):
    v0 = positive_zero_v0(nl)
    v = np.linspace(0.0, v0, 10_000)
    assert np.all(eval_reaction(nl, v) <= nl.a * v + 1e-12)
    s = np.linspace(0.0, 1.0, 2001)
    h = s[1] - s[0]
    g = nl.g(s)
    assert np.all((g[2:] - 2 * g[1:-1] + g[:-2]) / h**2 >= -1e-8)
    assert nl.g(0.0) == 0 and nl.dg(0.0) == 0
    assert abs(eval_reaction(nl, v0)) <= 1e-10


def test_threshold_g_one():
    th = Nonlinearity("threshold", 1.0, 0.4)
    assert th.g(1.0) == pytest.approx(1.0)
    assert th.g(0.39) == 0.0


def test_state_is_immutable_and_checks_bounds():
    p = make_params(BASE)
    s = RoadFieldState(0.0, np.ones(p.nx), np.ones((p.nx, p.ny)), p.dx, p.dy)
    with pytest.raises(ValueError):
        s.u[0] = 2.0
    s.check_bounds(p)
    bad = RoadFieldState(0.0, 1.1 * np.ones(p.nx), np.ones((p.nx, p.ny)), p.dx, p.dy)
    with pytest.raises(ValueError, match="state bound"):
        bad.check_bounds(p)


def test_params_replace_revalidates():
    p = make_params(BASE)
    with pytest.raises(ConfigError):
        p.replace(alpha=0.0)
    assert isinstance(p.replace(mu=2.0), ModelParams)
    assert math.isclose(p.replace(a=2.0, dt=0.01, X=1e9).lambda_star, 1.0)
