import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpsh import fields as F
from kpsh.constructions.potentials import Quadratic, RadialPower, abs2
from kpsh.forms import ComplexForm, positive_monomial
from kpsh.polynomials import RealPolynomial, random_polynomial
from kpsh.positivity import psh_margin, restricted_trace


def cube(n=2, points=9, half=1.0):
    return F.GridDomain.cube(n, points, half)


# -- grids ------------------------------------------------------------------------------

def test_grid_geometry():
    d = cube(1, 5, 1.0)
    assert d.spacing == (0.5, 0.5)
    assert d.points()[0, 0].tolist() == [-1.0, -1.0]
    assert d.points()[-1, -1].tolist() == [1.0, 1.0]
    z = d.complex_points()
    assert z[4, 2, 0] == 1 + 0j
    t = F.GridDomain.torus(1, 8)
    assert t.period == pytest.approx((2 * np.pi, 2 * np.pi))


def test_grid_validation():
    with pytest.raises(ValueError):
        F.GridDomain(1, (4, 4), (0.1, -0.1), (0, 0))
    with pytest.raises(ValueError):
        F.GridDomain(1, (4,), (0.1,), (0,))


def test_stencil_needs_room():
    d = F.GridDomain(1, (2, 2), (0.1, 0.1), (0.0, 0.0))
    with pytest.raises(F.StencilError):
        F.ddc_field(F.ScalarField(d, np.zeros((2, 2))))


# -- dd^c ---------------------------------------------------------------------------------

def test_ddc_of_abs2_is_twice_identity():
    H = F.ddc_field(abs2(2).on_grid(cube())).values
    assert np.abs(H - 2 * np.eye(2)).max() < 1e-12


def test_ddc_pluriharmonic_vanishes():
    d = cube()
    phi = F.ScalarField.from_function(d, lambda z: (z[..., 0] ** 2).real)
    assert np.abs(F.ddc_field(phi).values).max() < 1e-12


def test_ddc_product_example():
    d = F.GridDomain.cube(2, 5, 0.1, center=[1, 0, 1, 0])
    phi = F.ScalarField.from_function(d, lambda z: np.abs(z[..., 0]) ** 2 * np.abs(z[..., 1]) ** 2)
    H = F.ddc_field(phi).values[1, 1, 1, 1]
    assert H == pytest.approx(2 * np.ones((2, 2)), abs=1e-9)
    assert np.linalg.eigvalsh(H) == pytest.approx([0, 4], abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_ddc_exact_on_quadratics(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    S = rng.standard_normal((2, 2))
    Q = Quadratic(A + A.conj().T, S=S + S.T, c=rng.standard_normal(2))
    H = F.ddc_field(Q.on_grid(cube(2, 7))).values
    assert np.abs(H - Q.H).max() < 1e-10
    assert np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max() < 1e-12


def test_ddc_second_order_on_quartic():
    p = RealPolynomial(1, {(4, 0): 1.0, (2, 2): -0.5, (1, 3): 2.0})
    errs, hs = [], []
    for N in (16, 32):
        d = cube(1, N)
        errs.append(np.abs(F.ddc_field(p.on_grid(d)).values - p.ddc_real(d.interior().points())).max())
        hs.append(d.spacing[0])
    assert np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1]) == pytest.approx(2.0, abs=0.01)


def test_ddc_commutes_with_torus_shifts():
    d = F.GridDomain.torus(1, 12)
    phi = F.ScalarField(d, np.random.default_rng(0).standard_normal(d.shape))
    rolled = F.ScalarField(d, np.roll(phi.values, (3, -2), axis=(0, 1)))
    H, Hr = F.ddc_field(phi).values, F.ddc_field(rolled).values
    assert np.array_equal(np.roll(H, (3, -2), axis=(0, 1)), Hr)


# -- margins ----------------------------------------------------------------------------

@pytest.mark.parametrize("q", [1, 2])
def test_margin_field_abs2(q):
    m = F.psh_margin_field(abs2(2).on_grid(cube()), q)
    assert m.values == pytest.approx(2 * q)


def test_margin_field_indefinite():
    phi = Quadratic(np.diag([-2.0, 2.0, 4.0])).on_grid(cube(3, 3))
    assert F.psh_margin_field(phi, 2).values == pytest.approx(0.0, abs=1e-12)


def test_margin_field_of_regmax_is_nonnegative():
    d = cube(2, 11)
    a = Quadratic(np.diag([2.0, 1.0]), c=[0.3, 0]).on_grid(d)
    b = Quadratic(np.diag([1.0, 2.0]), c=[-0.3, 0]).on_grid(d)
    m = F.psh_margin_field(F.regularized_max(a, b, 0.2), 1)
    assert m.values.min() >= -1e-8


# -- d^c and d_c ------------------------------------------------------------------------------

def test_dc_of_linear_function():
    d = cube(2, 7)
    phi = F.ScalarField(d, d.points()[..., 0])
    dc, dcal, res = F.dc_and_dcal(phi, 1)
    assert set(k for k, v in dc.items() if np.abs(v).max() > 1e-12) == {(1,)}
    assert dc[(1,)] == pytest.approx(1.0)
    assert res < 1e-12


def test_dc_of_constant():
    d = cube(2, 7)
    dc, dcal, res = F.dc_and_dcal(F.ScalarField(d, np.full(d.shape, 3.0)), 2)
    assert all(np.abs(v).max() == 0 for v in dc.values())
    assert all(np.abs(v).max() == 0 for v in dcal.values())
    assert res == 0


@pytest.mark.parametrize("q", [1, 2])
def test_dcal_residual_is_second_order(q):
    p = random_polynomial(np.random.default_rng(5), 2, 3)
    res = [F.dc_and_dcal(p.on_grid(cube(2, N)), q)[2] for N in (9, 17)]
    assert res[0] / res[1] >= 3.5


# -- integral criterion -------------------------------------------------------------------

def test_integral_criterion_matches_integration_by_parts():
    d = cube(2, 15)
    bump = F.bump_field(d, np.zeros(4), 0.7)
    alpha = positive_monomial(2, [1])
    phi = abs2(2).on_grid(d)
    val = F.integral_criterion(phi, bump, alpha, 1)
    ref = F.integral_by_parts(phi, bump, alpha, 1)
    assert val > 0
    assert val == pytest.approx(ref, rel=1e-2)


def test_integral_criterion_pluriharmonic_is_zero():
    d = cube(2, 13)
    bump = F.bump_field(d, np.zeros(4), 0.6)
    phi = F.ScalarField.from_function(d, lambda z: (z[..., 0] * z[..., 1]).real)
    assert abs(F.integral_criterion(phi, bump, ComplexForm.scalar(2), 2)) < 1e-10


def test_integral_criterion_nonnegative_for_psh_with_random_bumps():
    d = cube(2, 12)
    phi = RadialPower(2, 2.0).on_grid(d)
    assert F.psh_margin_field(phi, 1).values.min() >= 0
    rng = np.random.default_rng(1)
    for _ in range(20):
        bump = F.bump_field(d, rng.uniform(-0.25, 0.25, 4), 0.35)
        alpha = positive_monomial(2, [int(rng.integers(2))])
        assert F.integral_criterion(phi, bump, alpha, 1) >= -1e-6


def test_integral_criterion_rejects_support_on_boundary():
    d = cube(2, 9)
    with pytest.raises(ValueError):
        F.integral_criterion(abs2(2).on_grid(d), F.bump_field(d, np.zeros(4), 1.5), positive_monomial(2, [0]), 1)


# -- planes -------------------------------------------------------------------------------

def test_planes_on_abs2():
    rep = F.plane_subharmonicity(abs2(3).on_grid(cube(3, 4)), 2, 50, seed=1)
    assert rep.sampled_min == pytest.approx(4.0) and rep.values == pytest.approx(4.0)


def test_plane_trace_example():
    H = F.ddc_field(Quadratic(np.diag([-1.0, 2.0, 3.0])).on_grid(cube(3, 3))).values[(0,) * 6]
    assert restricted_trace(H, np.eye(3)[:, :2]) == pytest.approx(1.0)


def test_planes_flag_non_psh():
    phi = Quadratic(np.diag([2.0, -2.0])).on_grid(cube(2, 5))
    rep = F.plane_subharmonicity(phi, 1, 20, seed=0)
    assert rep.refined_min == pytest.approx(-2.0, abs=1e-8)
    assert restricted_trace(np.diag([2.0, -2.0]), np.eye(2)[:, 1:]) == pytest.approx(-2.0)


def test_planes_converge_to_margin_at_a_point():
    H = np.array([[1.0, 0.5j, 0], [-0.5j, -0.5, 0.2], [0, 0.2, 2.0]])
    phi = Quadratic(H).on_grid(cube(3, 3))
    rep = F.plane_subharmonicity(phi, 2, 200, seed=3, at=(0,) * 6)
    assert rep.refined_min == pytest.approx(psh_margin(H, 2), abs=1e-8)
    assert rep.sampled_min >= rep.refined_min - 1e-12


# -- regularized maximum ----------------------------------------------------------------------

def test_regmax_examples():
    assert F.regularized_max(0.0, 5.0, 1.0) == 5.0
    assert F.regularized_max(2.0, 2.0, 1.0) == pytest.approx(2.0 + 3 / 16)
    with pytest.raises(ValueError):
        F.regularized_max(0.0, 1.0, 0.0)


@pytest.mark.parametrize("eps", [0.1, 1.0, 3.0])
def test_regmax_spline_matches_abs_at_the_band_edge(eps):
    assert F.regmax_spline(eps, eps, 0) == pytest.approx(eps, abs=1e-12)
    assert F.regmax_spline(eps, eps, 1) == pytest.approx(1.0, abs=1e-12)
    assert F.regmax_spline(eps, eps, 2) == pytest.approx(0.0, abs=1e-12)
    assert F.regmax_spline(-eps, eps, 1) == pytest.approx(-1.0, abs=1e-12)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(x=finite, y=finite, eps=st.floats(1e-3, 10))
def test_regmax_properties(x, y, eps):
    m = F.regularized_max(x, y, eps)
    assert m == F.regularized_max(y, x, eps)
    assert max(x, y) <= m + 1e-12 <= max(x, y) + 3 * eps / 16 + 1e-9
    if abs(x - y) >= eps:
        assert m == max(x, y)
    # monotone in each argument
    assert F.regularized_max(x + 0.01, y, eps) >= m - 1e-12


@settings(max_examples=100, deadline=None)
@given(t=st.floats(-5, 5), s=st.floats(-5, 5), eps=st.floats(0.05, 3), lam=st.floats(0, 1))
def test_kernel_is_convex(t, s, eps, lam):
    M = lambda u: F.regmax_kernel(u, eps, 0)
    assert M(lam * t + (1 - lam) * s) <= lam * M(t) + (1 - lam) * M(s) + 1e-9
    assert F.regmax_kernel(t, eps, 2) >= 0


def test_regmax_accepts_array_eps():
    out = F.regularized_max(np.zeros(3), np.array([0.0, 0.5, 2.0]), np.array([1.0, 1.0, 1.0]))
    assert out[2] == 2.0
    assert out[0] == pytest.approx(3 / 16)


# -- pseudonorm -----------------------------------------------------------------------------

def test_pseudonorm_of_constant():
    d = cube(1, 7)
    rep = F.greenwu_pseudonorm(F.ScalarField(d, np.full(d.shape, 2.0)))
    assert rep.value == pytest.approx(2.875)
    assert rep.derivative_sups == [0.0, 0.0, 0.0]
    assert rep.omitted_weight == 0.125


def test_pseudonorm_raw_derivatives_scale_linearly():
    d = F.GridDomain.torus(1, 16)
    f = F.ScalarField(d, np.sin(d.points()[..., 0]))
    a, b = F.greenwu_pseudonorm(f), F.greenwu_pseudonorm(F.ScalarField(d, 2 * f.values))
    assert b.sup == pytest.approx(2 * a.sup)
    assert b.derivative_sups == pytest.approx([2 * v for v in a.derivative_sups])
    assert b.value <= 2 * a.value + sum(2.0 ** -i for i in (1, 2, 3))
