import numpy as np
import pytest

from kpsh.constructions.potentials import LogDistance, Quadratic, RadialPower
from kpsh.constructions.sibony import (
    SibonyError,
    pair_weights,
    pole_truncation_sequence,
    sibony_integral,
    truncated_potential,
)
from kpsh.fields import GridDomain


@pytest.fixture(scope="module")
def truncation():
    dom = GridDomain.cube(2, 11, 0.5)
    r = np.sqrt((dom.points() ** 2).sum(axis=-1))
    V = r > np.exp(-2.0)
    return dom, r, V, pole_truncation_sequence(LogDistance(2), 0.1, [3, 4, 8, 40], 1, dom, V=V)


def test_eta_vanishes_near_the_pole(truncation):
    dom, r, _, tr = truncation
    core = r < np.exp(-3.1)
    assert core.any()
    assert np.all(tr.etas[0].nu[core] == 0)
    assert all(tr.zero_ok)


def test_eta_is_frozen_away_from_the_pole(truncation):
    dom, _, V, tr = truncation
    # chi_1 > -2 on V, which is above -N + eps for every N >= 3
    assert tr.stabilization_index == 0 and tr.predicted_index == 0
    exact = LogDistance(2).ddc(dom.complex_points()[V])
    for eta in tr.etas:
        assert np.array_equal(eta.nu[V], exact)


def test_truncations_are_positive(truncation):
    *_, tr = truncation
    assert min(tr.min_positivity) >= -1e-12


def test_truncated_potential_is_constant_inside():
    pot = truncated_potential(LogDistance(2), 5, 0.1)
    z = np.array([[1e-4, 0.0], [0.0, 2e-3j]])
    assert pot.value(z).tolist() == [-5.0, -5.0]


def test_pair_weights_trace():
    # n = 2: (i dz_j dzbar_j) ^ (i dz_l dzbar_l) is 2 vol-units off the diagonal and 0 on it
    W = pair_weights(2).real
    assert W[0, 0, 1, 1] == pytest.approx(W[1, 1, 0, 0])
    assert W[0, 0, 0, 0] == 0 and W[0, 0, 1, 1] > 0


@pytest.fixture(scope="module")
def report():
    return sibony_integral(RadialPower(2, 0.5), LogDistance(2), [4, 8, 16], 0.1, 1, M=8)


def test_integrals_stabilize(report):
    I = report.I
    assert report.stabilized_ok and report.monotone_ok
    assert abs(I[-1] - I[-2]) < 1e-3 * abs(I[-1])
    assert report.levels[0] < report.levels[-1]


def test_integrals_match_flux(report):
    assert report.flux_ok
    for v, f in zip(report.I, report.flux):
        assert v == pytest.approx(f, rel=0.05)


def test_exclusion_sweep_is_cauchy(report):
    assert report.cauchy_ok
    assert len(report.r_diffs) == 3


def test_omega_case_matches_flux():
    rep = sibony_integral(Quadratic(np.eye(2)), LogDistance(2), [3, 6], 0.1, 1, M=8)
    assert rep.flux_ok and rep.stabilized_ok
    assert rep.I[-1] > 0


@pytest.mark.parametrize("kwargs", [
    {"chi1": LogDistance(2, basis=[[1, 0]]), "p": 1},  # codim 1 < p + 1
    {"chi1": LogDistance(2), "p": 2},
    {"chi1": RadialPower(2, 0.5), "p": 1},
])
def test_rejects_bad_geometry(kwargs):
    with pytest.raises(SibonyError):
        sibony_integral(RadialPower(2, 0.5), N_list=[2], eps=0.1, **kwargs)


def test_rejects_bad_M():
    with pytest.raises(SibonyError):
        sibony_integral(RadialPower(2, 0.5), LogDistance(2), [2], 0.1, 1, M=6)
