import math
import random

import numpy as np
import pytest
from scipy import linalg

from contactperc.ctmc import (FiniteInstance, build_generator, bundled_instances,
                              expected_extinction_time, extinction_prob_by, load_instance,
                              path_instance, save_instance, transient_distribution,
                              transient_distribution_ode)
from contactperc.errors import ConfigurationError


def _random_instance(rnd, n=10, lam=2.0):
    sites = [(i // 4, i % 4) for i in range(n)]
    index = set(sites)
    edges = [(a, b) for a in sites for b in ((a[0] + 1, a[1]), (a[0], a[1] + 1))
             if b in index and rnd.random() < 0.7]
    rates = [rnd.choice([1.0, 1.5, 3.0]) for _ in sites]
    return FiniteInstance(sites, edges, rates, lam, 2, initial=[sites[0]], T=1.0)


def test_pair_rates():
    Q = build_generator(path_instance(2, 2.0))
    # {a} -> {a, b} at lam/2d * 1 = 1
    assert Q[0b01, 0b11] == 1.0 and Q[0b01, 0b00] == 1.0
    assert Q[0].sum() == 0.0 and not Q[0].any()


def test_row_sums():
    rnd = random.Random(0)
    for _ in range(3):
        Q = build_generator(_random_instance(rnd))
        assert np.abs(Q.sum(axis=1)).max() < 1e-12


def test_pair_linear_system():
    # u = 1 + lam/4, v = 3/2 + lam/4 at lam = 2
    inst = path_instance(2, 2.0)
    assert abs(expected_extinction_time(inst, [(0,)]) - 1.5) < 1e-9
    assert abs(expected_extinction_time(inst, [(0,), (1,)]) - 2.0) < 1e-9
    for lam in (0.5, 1.0, 4.0):
        inst = path_instance(2, lam)
        assert expected_extinction_time(inst, [(0,)]) == pytest.approx(1 + lam / 4, abs=1e-12)
        assert expected_extinction_time(inst, [(0,), (1,)]) == pytest.approx(1.5 + lam / 4,
                                                                              abs=1e-12)


def test_single_site():
    inst = path_instance(1, 1.0)
    assert expected_extinction_time(inst, [(0,)]) == pytest.approx(1.0)
    assert extinction_prob_by(inst, [(0,)], 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-10)
    assert extinction_prob_by(inst, [(0,)], 0.0) == 0.0


def test_mean_time_monotone_in_lambda():
    rnd = random.Random(4)
    base = _random_instance(rnd, n=6)
    means = []
    for lam in (0.5, 1.0, 2.0, 4.0):
        inst = FiniteInstance(base.sites, base.open_edges, base.rates, lam, 2)
        means.append(expected_extinction_time(inst, [base.sites[0]]))
    assert all(a <= b for a, b in zip(means, means[1:]))


def test_transient_methods_agree():
    rnd = random.Random(1)
    inst = _random_instance(rnd, n=8)
    Q = build_generator(inst)
    init = [inst.sites[0], inst.sites[3]]
    for T in (0.3, 1.0, 2.5):
        uni = transient_distribution(inst, init, T, Q)
        ode = transient_distribution_ode(inst, init, T, Q)
        pi0 = np.zeros(Q.shape[0])
        pi0[inst.mask(init)] = 1.0
        expm = pi0 @ linalg.expm(Q * T)
        assert np.abs(uni - expm).max() < 1e-9
        assert np.abs(ode - expm).max() < 1e-9
        assert abs(uni.sum() - 1.0) < 1e-9


def test_long_time_extinction():
    inst = FiniteInstance([(0, 0), (0, 1), (1, 0), (1, 1)],
                          [((0, 0), (0, 1)), ((0, 0), (1, 0)), ((0, 1), (1, 1)),
                           ((1, 0), (1, 1))], [1, 1, 1, 1], 2.0, 2)
    assert extinction_prob_by(inst, [(0, 0)], 1e3) > 1 - 1e-6


def test_instance_validation():
    with pytest.raises(ConfigurationError):
        FiniteInstance([(i,) for i in range(13)], [], [1.0] * 13, 1.0, 1)
    with pytest.raises(ConfigurationError):
        FiniteInstance([(0,), (2,)], [((0,), (2,))], [1.0, 1.0], 1.0, 1)
    with pytest.raises(ConfigurationError):
        FiniteInstance([(0,)], [], [0.0], 1.0, 1)
    with pytest.raises(ConfigurationError):
        load_instance("/nonexistent/instance.json")


def test_roundtrip(tmp_path):
    inst = _random_instance(random.Random(2), n=5)
    save_instance(inst, tmp_path / "x.json")
    back = load_instance(tmp_path / "x.json")
    assert back.to_dict() == dict(inst.to_dict(), name="x")


def test_bundled_instances():
    insts = bundled_instances()
    assert len(insts) >= 5
    assert all(i.n <= 10 for i in insts)
    by_name = {i.name: i for i in insts}
    pd = by_name["pure_death"]
    assert extinction_prob_by(pd, pd.initial, pd.T) == pytest.approx(1 - math.exp(-pd.T),
                                                                     abs=1e-10)
    assert expected_extinction_time(by_name["pair"], by_name["pair"].initial) == \
        pytest.approx(1.5, abs=1e-9)
