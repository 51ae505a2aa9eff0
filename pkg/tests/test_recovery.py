import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from contactperc.errors import ConfigurationError
from contactperc.recovery import (RecoverySpec, format_spec, lambda_c, mean_inverse,
                                  mean_inverse_quad, mean_inverse_shifted, parse_spec,
                                  q_value)


def test_parse_roundtrip():
    for text in ("point:1", "twopoint:1,2,0.5", "pareto:2", "shiftedexp:1.5"):
        spec = parse_spec(text)
        assert parse_spec(format_spec(spec)) == spec


@pytest.mark.parametrize("bad", ["point:0.5", "twopoint:2,1,0.5", "twopoint:1,2,1.0",
                                 "pareto:-1", "gauss:1", "point", "point:x", "shiftedexp:0"])
def test_parse_rejects(bad):
    with pytest.raises(ConfigurationError):
        parse_spec(bad)


def test_point_sample():
    assert RecoverySpec.point(1.0).sample(random.Random(1)) == 1.0
    assert RecoverySpec.point(3.0).sample(random.Random(1)) == 3.0


def test_two_point_sample_mean():
    spec = RecoverySpec.two_point(1.0, 2.0, 0.5)
    gen = np.random.default_rng(0)
    vals = spec.quantile_array(gen.random(10**5))
    assert abs(vals.mean() - 1.5) < 0.01


def test_pareto_inverse_moment_by_sampling():
    spec = RecoverySpec.pareto(2.0)
    vals = spec.quantile_array(np.random.default_rng(1).random(10**5))
    assert vals.min() >= 1.0
    assert abs((1.0 / vals).mean() - 2 / 3) < 0.005


def test_mean_inverse_values():
    assert mean_inverse(parse_spec("point:1")) == 1.0
    assert mean_inverse(parse_spec("twopoint:1,2,0.5")) == pytest.approx(0.75, abs=1e-15)
    assert mean_inverse(parse_spec("pareto:2")) == pytest.approx(2 / 3, abs=1e-14)
    # independent quadrature of u^-1 * 2 u^-3 on [1, inf)
    oracle, _ = integrate.quad(lambda u: 2.0 / u ** 4, 1.0, math.inf)
    assert mean_inverse_quad(parse_spec("pareto:2")) == pytest.approx(oracle, abs=1e-9)


def test_shifted_exp_quadrature_against_sampling():
    spec = parse_spec("shiftedexp:1.5")
    xs = 1.0 + np.random.default_rng(2).exponential(1 / 1.5, 10**6)
    mc = (1.0 / (xs + 0.3)).mean()
    se = (1.0 / (xs + 0.3)).std() / 1000
    assert abs(mean_inverse_shifted(spec, 0.3) - mc) < 4 * se


def test_mean_inverse_shifted():
    assert mean_inverse_shifted(parse_spec("point:1"), 0.5) == pytest.approx(2 / 3)
    tp = parse_spec("twopoint:1,2,0.5")
    assert mean_inverse_shifted(tp, 1.0) == pytest.approx(5 / 12, abs=1e-15)
    xs = tp.quantile_array(np.random.default_rng(3).random(10**6))
    vals = 1.0 / (xs + 1.0)
    assert abs(vals.mean() - 5 / 12) < 3 * vals.std() / 1000
    for text in ("point:2", "twopoint:1,3,0.2", "pareto:1.5", "shiftedexp:2"):
        spec = parse_spec(text)
        assert mean_inverse_shifted(spec, 0.0) == pytest.approx(mean_inverse(spec), abs=1e-9)
    with pytest.raises(ValueError):
        mean_inverse_shifted(tp, -0.1)


def test_lambda_c_values():
    assert lambda_c(parse_spec("point:1"), 1.0) == 1.0
    assert lambda_c(parse_spec("point:1"), 0.5) == 2.0
    assert lambda_c(parse_spec("twopoint:1,2,0.5"), 1.0) == pytest.approx(4 / 3)
    for p in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigurationError):
            lambda_c(parse_spec("point:1"), p)


def test_q_value():
    assert q_value(parse_spec("point:1"), 1.0, 1.0, 1) == pytest.approx(1 / 3)
    spec = parse_spec("point:1")
    lam = 2 * lambda_c(spec, 0.5)
    assert 2 * 50 * q_value(spec, 0.5, lam, 50) >= 1.5


@given(st.sampled_from(["point:1", "point:2.5", "twopoint:1,4,0.3", "pareto:3",
                        "shiftedexp:0.7"]),
       st.floats(0.05, 1.0), st.floats(0.01, 20.0), st.integers(1, 200))
def test_q_identity(text, p, lam, d):
    spec = parse_spec(text)
    a = lam / (2 * d)
    # q = p E[a / (xi + a)] = p (1 - E[xi / (xi + a)])
    direct = p * a * mean_inverse_shifted(spec, a)
    assert q_value(spec, p, lam, d) == pytest.approx(direct, abs=1e-12)
    assert 0.0 < q_value(spec, p, lam, d) < 1.0
