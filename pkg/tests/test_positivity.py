import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpsh.forms import FormError, omega_power, omega_std, restrict_complex, simple_positive_form
from kpsh.positivity import (
    eigen_expansion,
    hermitian_eigenvalues,
    is_strongly_q_convex,
    jacobi_eigh,
    kyfan_min_trace,
    minimize_on_frames,
    nu_wedge_omega_k,
    orthonormalize,
    psh_margin,
    random_frames,
    strong_positivity_certificate,
    weak_positivity_test,
)


def rand_herm(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (A + A.conj().T) / 2


def rand_unitary(rng, n):
    return orthonormalize(rng.standard_normal((1, n, n)) + 1j * rng.standard_normal((1, n, n)))[0]


hermitians = st.builds(lambda seed, n: rand_herm(np.random.default_rng(seed), n),
                       st.integers(0, 2 ** 32 - 1), st.integers(2, 4))


# -- eigenvalues ----------------------------------------------------------------------

def test_spectrum_examples():
    assert hermitian_eigenvalues(np.diag([3.0, -1.0, 2.0])).values == pytest.approx([-1, 2, 3])
    assert hermitian_eigenvalues(2 * np.eye(3)).values == pytest.approx([2, 2, 2])
    assert hermitian_eigenvalues(np.array([[1, 1j], [-1j, 1]])).values == pytest.approx([0, 2], abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(H=hermitians)
def test_jacobi_reconstructs_and_matches_lapack(H):
    spec = hermitian_eigenvalues(H)
    assert np.all(np.diff(spec.values) >= 0)
    assert np.abs(spec.reconstruct() - H).max() <= 1e-10 * max(1.0, np.abs(H).max())
    U = spec.frame
    assert np.abs(U.conj().T @ U - np.eye(len(H))).max() < 1e-12
    assert spec.values == pytest.approx(np.linalg.eigvalsh(H), abs=1e-11)


def test_jacobi_is_deterministic():
    H = rand_herm(np.random.default_rng(3), 5)
    a, b = jacobi_eigh(H), jacobi_eigh(H.copy())
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_non_hermitian_rejected():
    with pytest.raises(FormError):
        hermitian_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


# -- margins --------------------------------------------------------------------------------

def test_margin_examples():
    assert psh_margin(np.diag([-1.0, 2.0, 3.0]), 2) == pytest.approx(1.0)
    assert psh_margin(np.diag([-3.0, 1.0, 1.0]), 2) == pytest.approx(-2.0)
    # q-convex without being omega^q-psh
    assert is_strongly_q_convex(np.diag([-10.0, 1.0, 1.0]), 2)
    assert psh_margin(np.diag([-10.0, 1.0, 1.0]), 2) == pytest.approx(-9.0)
    assert is_strongly_q_convex(np.eye(3), 1)
    assert not is_strongly_q_convex(np.diag([-1.0, 0.0, 5.0]), 2)


@pytest.mark.parametrize("q", [0, 4])
def test_q_out_of_range(q):
    with pytest.raises(ValueError):
        psh_margin(np.eye(3), q)


@settings(max_examples=50, deadline=None)
@given(H=hermitians, seed=st.integers(0, 2 ** 32 - 1), eps=st.floats(-2, 2))
def test_margin_invariants(H, seed, eps):
    n = len(H)
    U = rand_unitary(np.random.default_rng(seed), n)
    for q in range(1, n + 1):
        m = psh_margin(H, q)
        assert psh_margin(U.conj().T @ H @ U, q) == pytest.approx(m, abs=1e-9)
        assert psh_margin(H - eps * np.eye(n), q) == pytest.approx(m - q * eps, abs=1e-10)
        if m >= 0:
            assert all(psh_margin(H, r) >= -1e-12 for r in range(q, n + 1))
        if m > 0:
            assert is_strongly_q_convex(H, q)


# -- nu ^ omega^k ---------------------------------------------------------------------

def test_nu_wedge_omega_diag():
    eta = nu_wedge_omega_k(np.diag([2.0, 3.0]), 1)
    assert eta.positive_coefficient((0, 1)) == pytest.approx(5.0)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_nu_identity_gives_power_of_omega(k):
    # omega ^ omega^k = omega^{k+1}, all normalized coefficients k + 1 after dividing by k!
    eta = nu_wedge_omega_k(np.eye(3), k)
    assert eta.allclose(omega_power(np.eye(3), k + 1))
    normalized = eta / math.factorial(k)
    for I in [(0,), (0, 1), (0, 1, 2)][k:k + 1]:
        assert normalized.positive_coefficient(I) == pytest.approx(k + 1)


def test_nu_zero():
    assert nu_wedge_omega_k(np.zeros((3, 3)), 1).is_zero()


@settings(max_examples=20, deadline=None)
@given(H=hermitians, k=st.integers(0, 3))
def test_eigen_expansion_matches_direct(H, k):
    k = min(k, len(H) - 1)
    assert nu_wedge_omega_k(H, k).allclose(eigen_expansion(H, k), atol=1e-9)


# -- cones ------------------------------------------------------------------------------

def test_weak_test_finds_witness():
    eta = nu_wedge_omega_k(np.diag([-3.0, 1.0, 1.0]), 1)
    v = weak_positivity_test(eta)
    assert not v.positive and v.grade == "exact"
    assert v.margin == pytest.approx(-2.0)
    assert restrict_complex(eta, v.witness) == pytest.approx(v.margin, abs=1e-8)
    # the witness plane contains e_0
    assert np.linalg.norm(v.witness[0]) == pytest.approx(1.0)


def test_weak_test_sampled_witness_matches_margin():
    eta = nu_wedge_omega_k(np.diag([-3.0, 1.0, 1.0]), 1)
    v = weak_positivity_test(eta, trials=8, closed_form=False)
    assert v.grade == "sampled" and not v.positive
    assert v.margin == pytest.approx(-2.0, abs=1e-6)
    assert restrict_complex(eta, v.witness) == pytest.approx(v.margin, abs=1e-8)


def test_weak_examples():
    v = weak_positivity_test(omega_power(np.eye(3), 2))
    assert v.positive and v.margin == pytest.approx(2.0)
    v = weak_positivity_test(omega_power(np.eye(3), 2), trials=8, closed_form=False)
    assert v.positive and v.margin == pytest.approx(2.0, abs=1e-8)
    v = weak_positivity_test(0 * omega_std(3))
    assert v.positive and v.margin == 0.0


def test_strong_examples():
    v = strong_positivity_certificate(omega_std(3))
    assert v.positive and v.grade == "exact"
    assert v.details["terms"] == 3
    # boundary case: margin exactly zero is still certified
    v = strong_positivity_certificate(nu_wedge_omega_k(np.diag([1.0, 1.0, -1.0]), 1))
    assert v.positive and abs(v.margin) < 1e-12


def test_strong_nnls_recovers_known_combination():
    rng = np.random.default_rng(11)
    gens = []
    for _ in range(4):
        rows = orthonormalize(rng.standard_normal((1, 3, 3)) + 1j * rng.standard_normal((1, 3, 3)))[0].T[:2]
        gens.append(simple_positive_form(rows))
    weights = rng.uniform(0.2, 1.0, 4)
    eta = sum((g * w for g, w in zip(gens[1:], weights[1:])), gens[0] * weights[0])
    v = strong_positivity_certificate(eta, generators=gens, closed_form=False)
    assert v.positive and v.grade == "exact"
    assert v.details["residual"] < 1e-8


def test_strong_failure_is_inconclusive():
    eta = nu_wedge_omega_k(np.diag([-3.0, 1.0, 1.0]), 1)
    v = strong_positivity_certificate(eta, closed_form=False, dict_size=32)
    assert not v.positive
    assert v.details["inconclusive"] and v.grade == "sampled"


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 4), shift=st.floats(-0.5, 1.5))
def test_weak_positivity_iff_margin(seed, n, shift):
    rng = np.random.default_rng(seed)
    H = rand_herm(rng, n) + shift * np.eye(n)
    for q in range(2, n):
        eta = nu_wedge_omega_k(H, q - 1)
        v = weak_positivity_test(eta, trials=8, seed=seed, closed_form=False)
        m = psh_margin(H, q)
        f = math.factorial(q - 1)
        assert v.margin / f == pytest.approx(m, abs=1e-6)
        if abs(m) > 1e-6:
            assert v.positive == (m >= -1e-8)


# -- Ky Fan oracle ---------------------------------------------------------------------------

def test_kyfan_examples():
    assert kyfan_min_trace(np.diag([-1.0, 2.0, 3.0]), 2) == pytest.approx(1.0, abs=1e-9)
    for q in (1, 2, 3):
        assert kyfan_min_trace(np.eye(3), q) == pytest.approx(q, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), q=st.integers(1, 4))
def test_kyfan_matches_margin(seed, q):
    H = rand_herm(np.random.default_rng(seed), 4)
    assert kyfan_min_trace(H, q, trials=4, seed=seed) == pytest.approx(psh_margin(H, q), abs=1e-6)


def test_minimize_on_frames_keeps_orthonormality():
    rng = np.random.default_rng(0)
    H = rand_herm(rng, 4)
    starts = random_frames(rng, 3, 4, 2)
    frames, values, iters = minimize_on_frames(
        lambda P: np.einsum("...ji,jk,...ki->...", P.conj(), H, P).real, starts, max_iter=200)
    gram = np.einsum("...ji,...jk->...ik", frames.conj(), frames)
    assert np.abs(gram - np.eye(2)).max() < 1e-12
    assert values.min() >= psh_margin(H, 2) - 1e-9
    assert iters <= 200
