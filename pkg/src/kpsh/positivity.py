"""Pointwise spectral tests: eigenvalues of dd^c, omega^q-psh margins, cone tests."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .forms import (
    ComplexForm,
    FormError,
    check_hermitian,
    multi_indices,
    nu_form,
    omega_power,
    pp_matrix,
    restrict_complex_batch,
    simple_positive_form,
    wedge,
)

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 60


class ConsistencyError(RuntimeError):
    """Two internal computation routes disagree beyond tolerance."""


@dataclass(frozen=True)
class EigenSpectrum:
    values: np.ndarray  # ascending
    frame: np.ndarray   # unitary, columns are eigenvectors

    def reconstruct(self) -> np.ndarray:
        return (self.frame * self.values) @ self.frame.conj().T


@dataclass
class PositivityVerdict:
    positive: bool
    margin: float
    grade: str  # "exact" | "sampled"
    witness: np.ndarray | None = None
    method: str = ""
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "positive": bool(self.positive),
            "margin": float(self.margin),
            "grade": self.grade,
            "method": self.method,
            "witness": None,
        }
        if self.witness is not None:
            out["witness"] = [
                [[float(z.real), float(z.imag)] for z in col] for col in np.asarray(self.witness).T
            ]
        out.update({k: v for k, v in self.details.items() if _jsonable(v)})
        return out


def _jsonable(v) -> bool:
    return isinstance(v, (bool, int, float, str, list, type(None)))


# -- eigenvalues ----------------------------------------------------------------

def jacobi_eigh(A, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic complex Jacobi on a batch of Hermitian matrices ``(..., n, n)``.

    Pairs are swept in the fixed order (0,1), (0,2), ..., (n-2,n-1). A batch
    stops when its off-diagonal Frobenius norm is below
    ``tol * max(1, ||A||_F)``. Returns ascending values and eigenvector columns.
    """
    A = np.array(A, dtype=complex, copy=True)
    n = A.shape[-1]
    batch_shape = A.shape[:-2]
    A = A.reshape((-1, n, n))
    V = np.broadcast_to(np.eye(n, dtype=complex), A.shape).copy()
    scale = np.maximum(1.0, np.sqrt((np.abs(A) ** 2).sum(axis=(1, 2))))
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt((np.abs(A[:, offmask]) ** 2).sum(axis=1)) if n > 1 else np.zeros(len(A))
        if np.all(off < tol * scale):
            break
        for p, q in itertools.combinations(range(n), 2):
            apq = A[:, p, q]
            mag = np.abs(apq)
            active = mag > 0
            if not active.any():
                continue
            phase = np.where(active, apq / np.where(active, mag, 1.0), 1.0)
            app, aqq = A[:, p, p].real, A[:, q, q].real
            safe = np.where(active, mag, 1.0)
            tau = (aqq - app) / (2.0 * safe)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # U acts on coordinates (p, q): [[c, s e^{i phi}], [-s e^{-i phi}, c]]
            u_pq = s * phase
            u_qp = -s * np.conj(phase)
            colp, colq = A[:, :, p].copy(), A[:, :, q].copy()
            A[:, :, p] = colp * c[:, None] + colq * u_qp[:, None]
            A[:, :, q] = colp * u_pq[:, None] + colq * c[:, None]
            rowp, rowq = A[:, p, :].copy(), A[:, q, :].copy()
            A[:, p, :] = rowp * c[:, None] + rowq * np.conj(u_qp)[:, None]
            A[:, q, :] = rowp * np.conj(u_pq)[:, None] + rowq * c[:, None]
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
            vp, vq = V[:, :, p].copy(), V[:, :, q].copy()
            V[:, :, p] = vp * c[:, None] + vq * u_qp[:, None]
            V[:, :, q] = vp * u_pq[:, None] + vq * c[:, None]
    values = np.einsum("bii->bi", A).real
    order = np.argsort(values, axis=1, kind="stable")
    values = np.take_along_axis(values, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return values.reshape(batch_shape + (n,)), V.reshape(batch_shape + (n, n))


def eigenvalues_batch(H) -> np.ndarray:
    return jacobi_eigh(H)[0]


def hermitian_eigenvalues(H) -> EigenSpectrum:
    H = check_hermitian(H)
    values, frame = jacobi_eigh(H)
    return EigenSpectrum(values=values, frame=frame)


def _check_q(q: int, n: int) -> None:
    if not 1 <= q <= n:
        raise ValueError(f"q={q} out of range 1..{n}")


def psh_margin(H, q: int) -> float:
    """Sum of the ``q`` smallest eigenvalues; ``H`` is omega^q-psh iff this is >= 0."""
    H = check_hermitian(H)
    _check_q(q, H.shape[0])
    return float(hermitian_eigenvalues(H).values[:q].sum())


def psh_margin_batch(H, q: int) -> np.ndarray:
    H = np.asarray(H)
    _check_q(q, H.shape[-1])
    return eigenvalues_batch(H)[..., :q].sum(axis=-1)


def is_strongly_q_convex(H, q: int) -> bool:
    """At most ``q - 1`` eigenvalues are <= 0."""
    H = check_hermitian(H)
    _check_q(q, H.shape[0])
    return bool(hermitian_eigenvalues(H).values[q - 1] > 0)


# -- nu ^ omega^k ---------------------------------------------------------------

def eigen_expansion(nu, k: int) -> ComplexForm:
    """``nu ^ omega^k`` assembled from the eigen-coframe of ``nu``:

    ``k! sum_{|S|=k+1} (sum_{i in S} alpha_i) prod_{i in S} (i xi_i ^ conj(xi_i))``.
    """
    spec = hermitian_eigenvalues(nu)
    n = len(spec.values)
    coframe = spec.frame.T  # xi_i = sum_j U_ji dz_j
    total = ComplexForm.zero(n, k + 1, k + 1)
    for S in itertools.combinations(range(n), k + 1):
        weight = math.factorial(k) * spec.values[list(S)].sum()
        total = total + simple_positive_form(coframe[list(S)]) * weight
    return total


def nu_wedge_omega_k(nu, k: int, tol: float = 1e-9) -> ComplexForm:
    nu = check_hermitian(nu)
    n = nu.shape[0]
    if not 0 <= k <= n - 1:
        raise ValueError(f"k={k} out of range 0..{n - 1}")
    direct = wedge(nu_form(nu), omega_power(np.eye(n), k))
    expanded = eigen_expansion(nu, k)
    gap = (direct - expanded).max_abs()
    if gap > tol * max(1.0, direct.max_abs()):
        raise ConsistencyError(f"nu^omega^{k}: direct and eigenbasis routes differ by {gap:.3e}")
    return direct


def fit_nu_wedge_omega(eta: ComplexForm):
    """Least-squares fit ``eta = nu ^ omega^k`` with ``k = p - 1``.

    Returns ``(nu, k, relative_residual)``.
    """
    n, p = eta.n, eta.p
    if eta.p != eta.q or p < 1:
        raise FormError("expected a (p,p)-form with p >= 1")
    k = p - 1
    omk = omega_power(np.eye(n), k)
    basis = []
    for j in range(n):
        for l in range(j, n):
            E = np.zeros((n, n), dtype=complex)
            if j == l:
                E[j, j] = 1.0
                basis.append(E)
            else:
                E[j, l] = E[l, j] = 1.0
                basis.append(E.copy())
                E = np.zeros((n, n), dtype=complex)
                E[j, l], E[l, j] = 1j, -1j
                basis.append(E)
    _, target = pp_matrix(eta)
    cols = []
    for E in basis:
        _, M = pp_matrix(wedge(nu_form(E), omk))
        cols.append(np.concatenate([M.real.ravel(), M.imag.ravel()]))
    A = np.column_stack(cols)
    b = np.concatenate([target.real.ravel(), target.imag.ravel()])
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    nu = sum(c * E for c, E in zip(x, basis))
    resid = np.linalg.norm(A @ x - b) / max(1.0, np.linalg.norm(b))
    return nu, k, float(resid)


# -- Grassmannian search ----------------------------------------------------------

def random_frames(rng: np.random.Generator, count: int, n: int, p: int) -> np.ndarray:
    Z = rng.standard_normal((count, n, p)) + 1j * rng.standard_normal((count, n, p))
    return orthonormalize(Z)


def orthonormalize(P: np.ndarray) -> np.ndarray:
    """QR retraction with the sign convention ``diag(R) > 0``."""
    Q, R = np.linalg.qr(P)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return Q * phase[..., None, :]


def minimize_on_frames(f, starts: np.ndarray, *, grad=None, fd_step: float = 1e-6,
                       max_iter: int = 500, stop: float = 1e-12, step0: float = 0.1):
    """Projected-gradient descent over orthonormal frames, batched over starts.

    ``f`` maps frames ``(..., n, p)`` to values ``(...)``. Without ``grad`` the
    Euclidean gradient is taken by central differences on every real and
    imaginary entry. A step is accepted on sufficient decrease; steps double
    on success and halve on failure; a start stops when an accepted step
    improves by less than ``stop``.
    """
    P = np.array(starts, dtype=complex)
    B, n, p = P.shape
    fval = f(P)
    step = np.full(B, step0)
    active = np.ones(B, dtype=bool)
    iters = 0
    while active.any() and iters < max_iter:
        iters += 1
        idx = np.nonzero(active)[0]
        Pa = P[idx]
        if grad is None:
            G = _fd_gradient(f, Pa, fd_step)
        else:
            G = grad(Pa)
        S = Pa.conj().transpose(0, 2, 1) @ G
        xi = G - Pa @ ((S + S.conj().transpose(0, 2, 1)) / 2)
        trial = orthonormalize(Pa - step[idx, None, None] * xi)
        ft = f(trial)
        # sufficient decrease with constant 1/2 caps steps at the exact line-search length,
        # which keeps stiff modes from oscillating at the edge of stability
        sq = (np.abs(xi) ** 2).sum(axis=(1, 2))
        better = ft <= fval[idx] - 0.5 * step[idx] * sq
        better &= ft < fval[idx]
        gain = fval[idx] - ft
        acc = idx[better]
        P[acc] = trial[better]
        fval[acc] = ft[better]
        step[acc] = np.minimum(step[acc] * 2.0, 10.0)
        rej = idx[~better]
        step[rej] *= 0.5
        done = np.zeros(len(idx), dtype=bool)
        done |= better & (gain < stop)
        done |= step[idx] < 1e-14
        active[idx[done]] = False
    return P, fval, iters


def _fd_gradient(f, P: np.ndarray, h: float) -> np.ndarray:
    B, n, p = P.shape
    m = n * p
    E = np.eye(m).reshape(m, n, p)
    pert = np.concatenate([E, 1j * E])  # (2m, n, p)
    plus = P[:, None] + h * pert[None]
    minus = P[:, None] - h * pert[None]
    fp = f(plus.reshape(-1, n, p)).reshape(B, 2 * m)
    fm = f(minus.reshape(-1, n, p)).reshape(B, 2 * m)
    d = (fp - fm) / (2 * h)
    return (d[:, :m] + 1j * d[:, m:]).reshape(B, n, p)


def _verdict_from_min(margin: float, witness, tol: float, grade: str, method: str, **details):
    return PositivityVerdict(
        positive=bool(margin >= -tol),
        margin=float(margin),
        grade=grade,
        witness=witness,
        method=method,
        details=details,
    )


def weak_positivity_test(eta: ComplexForm, trials: int = 64, tol: float = 1e-9, seed: int = 0,
                         closed_form: bool = True, max_iter: int = 500) -> PositivityVerdict:
    """Minimize the restriction of ``eta`` over complex p-planes.

    ``p = 1`` and forms of shape ``nu ^ omega^k`` are decided exactly (the
    latter only with ``closed_form``). Otherwise the verdict is "sampled": a
    positive answer only means no violating plane was found.
    """
    if eta.p != eta.q:
        raise FormError("weak positivity is defined for (p,p)-forms")
    if not eta.is_real(1e-10):
        raise FormError("weak positivity needs a real form")
    n, p = eta.n, eta.p
    if p == 0:
        c = eta.coefficient((), ()).real
        return _verdict_from_min(c, None, tol, "exact", "scalar")
    if eta.is_zero():
        return _verdict_from_min(0.0, np.eye(n, p, dtype=complex), tol, "exact", "zero")
    if p == 1 or closed_form:
        nu, k, resid = fit_nu_wedge_omega(eta)
        if resid < 1e-10:
            nu = (nu + nu.conj().T) / 2
            spec = hermitian_eigenvalues(nu)
            margin = math.factorial(k) * spec.values[: k + 1].sum()
            # restriction to span(P) is k! tr(P^T nu conj(P)), minimized by conj(eigenvectors)
            witness = spec.frame[:, : k + 1].conj()
            return _verdict_from_min(margin, witness, tol, "exact", "eigenvalues", fit_residual=resid)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    starts = random_frames(rng, trials, n, p)
    frames, values, iters = minimize_on_frames(
        lambda F: restrict_complex_batch(eta, F), starts, max_iter=max_iter
    )
    best = int(np.argmin(values))
    return _verdict_from_min(values[best], frames[best], tol, "sampled", "projected-gradient",
                             trials=trials, iterations=iters)


def strong_positivity_certificate(eta: ComplexForm, dict_size: int = 256, tol: float = 1e-8,
                                  seed: int = 0, generators=None,
                                  closed_form: bool = True) -> PositivityVerdict:
    """Try to write ``eta`` as a nonnegative sum of simple strongly positive forms.

    A failed decomposition is reported as inconclusive (``positive`` False,
    ``details['inconclusive']`` True), never as a proof of non-positivity.
    """
    if eta.p != eta.q or not eta.is_real(1e-10):
        raise FormError("strong positivity needs a real (p,p)-form")
    n, p = eta.n, eta.p
    if p == 0:
        c = eta.coefficient((), ()).real
        return _verdict_from_min(c, None, tol, "exact", "scalar")
    if p == 1 or closed_form:
        nu, k, resid = fit_nu_wedge_omega(eta)
        if resid < 1e-10:
            nu = (nu + nu.conj().T) / 2
            spec = hermitian_eigenvalues(nu)
            sums = [(spec.values[list(S)].sum(), S) for S in itertools.combinations(range(n), k + 1)]
            margin = math.factorial(k) * spec.values[: k + 1].sum()
            ok = margin >= -tol
            decomposition = [
                {"weight": float(math.factorial(k) * w), "indices": list(S)} for w, S in sums
            ] if ok else []
            witness = None if ok else spec.frame[:, : k + 1].conj()
            v = _verdict_from_min(margin, witness, tol, "exact", "eigen-expansion",
                                  terms=len(decomposition), decomposition=decomposition,
                                  inconclusive=False)
            return v
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dictionary = list(generators or [])
    for I in multi_indices(n, p):
        rows = np.zeros((p, n), dtype=complex)
        rows[np.arange(p), list(I)] = 1.0
        dictionary.append(simple_positive_form(rows))
    while len(dictionary) < dict_size + len(generators or []):
        dictionary.append(simple_positive_form(_random_rows(rng, p, n)))
    idx, target = pp_matrix(eta)
    cols = []
    for g in dictionary:
        _, M = pp_matrix(g)
        cols.append(np.concatenate([M.real.ravel(), M.imag.ravel()]))
    A = np.column_stack(cols)
    b = np.concatenate([target.real.ravel(), target.imag.ravel()])
    weights, rnorm = nnls(A, b, maxiter=50 * A.shape[1])
    certified = rnorm < tol
    return PositivityVerdict(
        positive=bool(certified),
        margin=0.0 if certified else float("nan"),
        grade="exact" if certified else "sampled",
        witness=None,
        method="nnls",
        details={"residual": float(rnorm), "terms": int((weights > 0).sum()),
                 "dictionary": len(dictionary), "inconclusive": not certified,
                 "weights": [float(w) for w in weights]},
    )


def _random_rows(rng, p, n):
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q = orthonormalize(Z[None])[0]
    return Q.T[:p]


def kyfan_min_trace(H, q: int, trials: int = 8, seed: int = 0, max_iter: int = 5000) -> float:
    """Minimum of ``Re tr(P^* H P)`` over orthonormal q-frames, by Riemannian descent.

    Independent of the eigensolver: only matrix products and QR are used.
    """
    H = check_hermitian(H)
    n = H.shape[0]
    _check_q(q, n)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    starts = random_frames(rng, trials, n, q)
    _, values = _trace_descent(H, starts, max_iter)
    return float(values.min())


def _trace_descent(H, starts, max_iter=5000):
    def f(P):
        return np.einsum("...ji,jk,...ki->...", P.conj(), H, P).real

    def g(P):
        return 2.0 * np.einsum("jk,...kl->...jl", H, P)

    scale = max(1.0, float(np.abs(H).max()))
    frames, values, _ = minimize_on_frames(f, starts, grad=g, max_iter=max_iter,
                                           stop=1e-16 * scale, step0=0.25 / scale)
    return frames, values


def restricted_trace(H, P) -> np.ndarray:
    """Trace of the (1,1)-form ``i sum h_jk dz_j ^ dzbar_k`` restricted to ``span(P)``.

    Equals ``Re tr(P^T H conj(P))`` for orthonormal frames ``(..., n, q)``.
    """
    return np.einsum("...ji,...jk,...ki->...", P, H, P.conj()).real


def min_restricted_trace(H, starts, max_iter: int = 5000):
    """Refine planes by descent; returns (frames, values)."""
    frames, values = _trace_descent(np.asarray(H), np.asarray(starts).conj(), max_iter)
    return frames.conj(), values
