import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpsh.fields import GridDomain, ScalarField, ddc_field, regularized_max
from kpsh.heat import (
    canonical_potentials,
    cos_bowl,
    cube_mask,
    heat_array,
    heat_smooth,
    smoothing_preserves_psh,
    wrapped,
)


@pytest.fixture(scope="module")
def torus():
    return GridDomain.torus(1, 32)


def random_field(d, seed=0):
    return ScalarField(d, np.random.default_rng(seed).standard_normal(d.shape))


def test_constant_is_fixed(torus):
    f = ScalarField(torus, np.full(torus.shape, 1.25))
    assert np.abs(heat_smooth(f, 0.3).values - 1.25).max() < 1e-14


@pytest.mark.parametrize("k", [(1, 0), (2, 3), (0, 5)])
def test_fourier_modes_decay_exactly(torus, k):
    x = torus.points()
    f = ScalarField(torus, np.cos(k[0] * x[..., 0] + k[1] * x[..., 1]))
    t = 0.05
    out = heat_smooth(f, t).values
    assert out == pytest.approx(np.exp(-t * (k[0] ** 2 + k[1] ** 2)) * f.values, abs=1e-13)


def test_t_zero_is_identity_and_negative_t_rejected(torus):
    f = random_field(torus)
    assert np.array_equal(heat_smooth(f, 0.0).values, f.values)
    with pytest.raises(ValueError):
        heat_smooth(f, -1e-3)


def test_box_fields_rejected():
    d = GridDomain.cube(1, 8)
    with pytest.raises(ValueError):
        heat_smooth(ScalarField(d, np.zeros(d.shape)), 0.1)


@settings(max_examples=20, deadline=None)
@given(s=st.floats(0, 0.5), t=st.floats(0, 0.5), seed=st.integers(0, 1000))
def test_semigroup_mean_and_maximum_principle(s, t, seed):
    d = GridDomain.torus(1, 16)
    f = random_field(d, seed)
    a = heat_smooth(heat_smooth(f, s), t).values
    b = heat_smooth(f, s + t).values
    assert np.abs(a - b).max() < 1e-10
    assert b.mean() == pytest.approx(f.values.mean(), abs=1e-12)
    assert b.max() <= f.values.max() + 1e-10


def test_heat_commutes_with_ddc():
    d = GridDomain.torus(2, 12)
    x = d.points()
    f = ScalarField(d, cos_bowl(x) + 0.3 * np.sin(x[..., 0] + 2 * x[..., 3]))
    lhs = ddc_field(heat_smooth(f, 1e-2)).values
    rhs = heat_array(ddc_field(f).values, d, 1e-2)
    assert np.abs(lhs - rhs).max() < 1e-8


def test_nonsmooth_max_converges_monotonically(torus):
    x = torus.points()
    s = np.array([0.4, 0.0])
    f = ScalarField(torus, np.maximum(cos_bowl(x, s), cos_bowl(x, -s)))
    dists = [np.abs(heat_smooth(f, t).values - f.values).max() for t in (1e-2, 1e-3, 1e-4)]
    assert dists[0] > dists[1] > dists[2]


def test_bowl_keeps_half_margin_on_a_fine_grid():
    d = GridDomain.torus(1, 64)
    phi = ScalarField(d, cos_bowl(d.points()))
    K = cube_mask(d, 0.8)
    # the bowl's margin on K is cos of the largest |x_a| there (up to O(h^2))
    eps = float(np.cos(np.abs(wrapped(d.points()[K])).max()))
    rep = smoothing_preserves_psh(phi, 1, [1e-4, 1e-3, 1e-2], K=K, eps=eps)
    assert rep.initial_margin == pytest.approx(eps, rel=1e-3)
    assert min(rep.min_margins) >= eps / 2
    assert rep.t_star == 1e-2 and rep.strict_ok


def test_margin_moves_linearly_in_t():
    d = GridDomain.torus(1, 64)
    phi = ScalarField(d, cos_bowl(d.points()))
    K = cube_mask(d, 0.8)
    rep = smoothing_preserves_psh(phi, 1, [1e-4, 1e-3], K=K)
    drift = [abs(m - rep.initial_margin) for m in rep.min_margins]
    assert drift[1] / drift[0] == pytest.approx(10.0, rel=0.05)


def test_regmax_of_bowls_stays_psh():
    d = GridDomain.torus(1, 32)
    x = d.points()
    s = np.array([0.3, 0.0])
    phi = regularized_max(ScalarField(d, cos_bowl(x, s)), ScalarField(d, cos_bowl(x, -s)), 0.5)
    rep = smoothing_preserves_psh(phi, 1, [1e-4, 1e-3], K=cube_mask(d, 0.5))
    assert rep.succeeded and min(rep.min_margins) >= 0


def test_constant_field_report_only():
    d = GridDomain.torus(1, 8)
    rep = smoothing_preserves_psh(ScalarField(d, np.zeros(d.shape)), 1, [1e-3])
    assert rep.min_margins == [0.0] and rep.strict_ok is None


def test_report_flags_failure():
    d = GridDomain.torus(1, 16)
    phi = ScalarField(d, -cos_bowl(d.points()))
    rep = smoothing_preserves_psh(phi, 1, [1e-3, 1e-2], K=cube_mask(d, 0.5))
    assert not rep.succeeded and rep.t_star is None
    assert rep.to_json()["succeeded"] is False


def test_canonical_potentials_are_strictly_psh():
    fields, K = canonical_potentials(n=2, points=12)
    assert set(fields) == {"bowl", "twist", "ridge"}
    for f in fields.values():
        rep = smoothing_preserves_psh(f, 1, [1e-3], K=K)
        assert rep.initial_margin > 0.5
