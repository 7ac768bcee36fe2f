"""Constant-coefficient complex differential forms on C^n.

A (p, q)-form is stored sparsely over the basis ``dz_I ^ dzbar_J`` with
``I``, ``J`` strictly increasing index tuples (all holomorphic factors first).
Real coordinates are interleaved, ``(x_0, y_0, x_1, y_1, ...)``, with
``dz_j = dx_j + i dy_j``.

Conventions::

    omega_std = i sum_j dz_j ^ dzbar_j          (matrix Id)
    nu        = i sum_jk h_jk dz_j ^ dzbar_k    (h Hermitian)
    vol       = prod_j (i dz_j ^ dzbar_j)       so omega_std^n = n! vol

The positive (p, p) monomial ``(i dz_1 ^ dzbar_1) ^ ... ^ (i dz_p ^ dzbar_p)``
equals ``i^(p^2) dz_I ^ dzbar_I`` in the stored basis.
"""
from __future__ import annotations

import itertools
import math
from typing import Iterable, Mapping

import numpy as np

PRUNE = 1e-15

Key = tuple[tuple[int, ...], tuple[int, ...]]


class FormError(ValueError):
    """Raised on dimension, degree or reality mismatches."""


def _perm_sign(seq: Iterable[int]) -> int:
    """Sign of the permutation sorting ``seq``; 0 if it has a repeat."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    inversions = 0
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                inversions += 1
    return -1 if inversions % 2 else 1


def positive_factor(p: int) -> complex:
    """Coefficient ``i^(p^2)`` of the positive (p, p) monomial in the stored basis."""
    return 1j ** (p * p % 4)


def multi_indices(n: int, p: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(n), p))


class ComplexForm:
    """Immutable sparse (p, q)-form with complex constant coefficients."""

    __slots__ = ("n", "p", "q", "_coeffs")

    def __init__(self, n: int, p: int, q: int, coeffs: Mapping[Key, complex] | None = None):
        if not (0 <= p <= n and 0 <= q <= n):
            raise FormError(f"bidegree ({p},{q}) invalid for n={n}")
        clean: dict[Key, complex] = {}
        for (I, J), c in (coeffs or {}).items():
            I, J = tuple(int(i) for i in I), tuple(int(j) for j in J)
            if len(I) != p or len(J) != q:
                raise FormError(f"index pair {(I, J)} does not have bidegree ({p},{q})")
            if any(i < 0 or i >= n for i in I + J):
                raise FormError(f"index out of range in {(I, J)}")
            if list(I) != sorted(set(I)) or list(J) != sorted(set(J)):
                raise FormError(f"indices must be strictly increasing: {(I, J)}")
            c = complex(c)
            if abs(c) > PRUNE:
                clean[(I, J)] = clean.get((I, J), 0) + c
        self.n, self.p, self.q = n, p, q
        self._coeffs = {k: v for k, v in clean.items() if abs(v) > PRUNE}

    # -- construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, n: int, p: int, q: int) -> "ComplexForm":
        return cls(n, p, q)

    @classmethod
    def scalar(cls, n: int, c: complex = 1.0) -> "ComplexForm":
        return cls(n, 0, 0, {((), ()): c})

    @classmethod
    def dz(cls, n: int, j: int) -> "ComplexForm":
        return cls(n, 1, 0, {((j,), ()): 1.0})

    @classmethod
    def dzbar(cls, n: int, j: int) -> "ComplexForm":
        return cls(n, 0, 1, {((), (j,)): 1.0})

    @classmethod
    def holomorphic_covector(cls, u) -> "ComplexForm":
        """The (1,0)-form ``sum_j u_j dz_j``."""
        u = np.asarray(u, dtype=complex)
        return cls(len(u), 1, 0, {((j,), ()): u[j] for j in range(len(u))})

    # -- mapping-like access ----------------------------------------------------
    @property
    def coeffs(self) -> dict[Key, complex]:
        return dict(self._coeffs)

    def items(self):
        return self._coeffs.items()

    def coefficient(self, I, J) -> complex:
        return self._coeffs.get((tuple(I), tuple(J)), 0j)

    def positive_coefficient(self, I) -> complex:
        """Coefficient of ``dz_I ^ dzbar_I`` relative to the positive monomial."""
        return self.coefficient(I, I) / positive_factor(len(I))

    @property
    def degree(self) -> int:
        return self.p + self.q

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self._coeffs.values())

    def max_abs(self) -> float:
        return max((abs(c) for c in self._coeffs.values()), default=0.0)

    # -- arithmetic ------------------------------------------------------------
    def _check_same(self, other: "ComplexForm") -> None:
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise FormError(
                f"cannot add ({self.p},{self.q}) on C^{self.n} and ({other.p},{other.q}) on C^{other.n}"
            )

    def __add__(self, other: "ComplexForm") -> "ComplexForm":
        self._check_same(other)
        out = dict(self._coeffs)
        for k, v in other._coeffs.items():
            out[k] = out.get(k, 0) + v
        return ComplexForm(self.n, self.p, self.q, out)

    def __neg__(self) -> "ComplexForm":
        return ComplexForm(self.n, self.p, self.q, {k: -v for k, v in self._coeffs.items()})

    def __sub__(self, other: "ComplexForm") -> "ComplexForm":
        return self + (-other)

    def __mul__(self, c) -> "ComplexForm":
        if isinstance(c, ComplexForm):
            return wedge(self, c)
        return ComplexForm(self.n, self.p, self.q, {k: v * c for k, v in self._coeffs.items()})

    __rmul__ = __mul__

    def __truediv__(self, c) -> "ComplexForm":
        return self * (1.0 / c)

    def __xor__(self, other: "ComplexForm") -> "ComplexForm":
        return wedge(self, other)

    def conjugate(self) -> "ComplexForm":
        # conj(c dz_I ^ dzbar_J) = conj(c) (-1)^{|I||J|} dz_J ^ dzbar_I
        sign = -1 if (self.p * self.q) % 2 else 1
        return ComplexForm(
            self.n, self.q, self.p, {(J, I): sign * np.conj(c) for (I, J), c in self._coeffs.items()}
        )

    def is_real(self, tol: float = 1e-12) -> bool:
        if self.p != self.q:
            return self.is_zero(tol)
        diff = self - self.conjugate()
        return diff.max_abs() <= tol * max(1.0, self.max_abs())

    def allclose(self, other: "ComplexForm", atol: float = 1e-12) -> bool:
        self._check_same(other)
        return (self - other).max_abs() <= atol

    def __repr__(self) -> str:
        return f"ComplexForm(n={self.n}, p={self.p}, q={self.q}, terms={len(self._coeffs)})"

    # -- serialization -----------------------------------------------------------
    def to_json(self) -> dict:
        entries = [
            {"I": list(I), "J": list(J), "re": float(c.real), "im": float(c.imag)}
            for (I, J), c in sorted(self._coeffs.items())
        ]
        return {"n": self.n, "p": self.p, "q": self.q, "entries": entries}

    @classmethod
    def from_json(cls, data: Mapping) -> "ComplexForm":
        coeffs = {}
        for e in data["entries"]:
            key = (tuple(e["I"]), tuple(e["J"]))
            coeffs[key] = coeffs.get(key, 0) + complex(e.get("re", 0.0), e.get("im", 0.0))
        return cls(int(data["n"]), int(data["p"]), int(data["q"]), coeffs)


def wedge(a: ComplexForm, b: ComplexForm) -> ComplexForm:
    """Exterior product with the basis ordering ``dz_I ^ dzbar_J``."""
    if a.n != b.n:
        raise FormError(f"dimension mismatch: C^{a.n} vs C^{b.n}")
    n = a.n
    if a.p + b.p > n or a.q + b.q > n:
        raise FormError(f"degree overflow: ({a.p}+{b.p}, {a.q}+{b.q}) on C^{n}")
    out: dict[Key, complex] = {}
    cross = -1 if (a.q * b.p) % 2 else 1
    for (I, J), c1 in a.items():
        for (K, L), c2 in b.items():
            s1 = _perm_sign(I + K)
            if s1 == 0:
                continue
            s2 = _perm_sign(J + L)
            if s2 == 0:
                continue
            key = (tuple(sorted(I + K)), tuple(sorted(J + L)))
            out[key] = out.get(key, 0) + cross * s1 * s2 * c1 * c2
    return ComplexForm(n, a.p + b.p, a.q + b.q, out)


def wedge_all(forms: Iterable[ComplexForm], n: int) -> ComplexForm:
    result = ComplexForm.scalar(n)
    for f in forms:
        result = wedge(result, f)
    return result


def check_hermitian(H, tol: float = 1e-12) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise FormError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > tol * scale:
        raise FormError("matrix is not Hermitian")
    return H


def nu_form(H) -> ComplexForm:
    """The real (1,1)-form ``i sum h_jk dz_j ^ dzbar_k``."""
    H = check_hermitian(H)
    n = H.shape[0]
    return ComplexForm(n, 1, 1, {((j,), (k,)): 1j * H[j, k] for j in range(n) for k in range(n)})


def omega_std(n: int) -> ComplexForm:
    return nu_form(np.eye(n))


def omega_power(omega, k: int, normalized: bool = False) -> ComplexForm:
    """``omega^k`` (divided by ``k!`` when ``normalized``) for a Kähler matrix ``omega``."""
    omega = check_hermitian(omega)
    n = omega.shape[0]
    if not 0 <= k <= n:
        raise FormError(f"power k={k} out of range for n={n}")
    if np.linalg.eigvalsh(omega).min() <= 0:
        raise FormError("omega must be positive definite")
    base = nu_form(omega)
    result = ComplexForm.scalar(n)
    for _ in range(k):
        result = wedge(result, base)
    if normalized:
        result = result / math.factorial(k)
    return result


def volume_form(n: int) -> ComplexForm:
    return ComplexForm(n, n, n, {(tuple(range(n)), tuple(range(n))): positive_factor(n)})


def positive_monomial(n: int, indices: Iterable[int]) -> ComplexForm:
    """``prod_{j in indices} (i dz_j ^ dzbar_j)``."""
    return wedge_all((nu_form(_unit_matrix(n, j)) for j in indices), n)


def _unit_matrix(n: int, j: int) -> np.ndarray:
    E = np.zeros((n, n), dtype=complex)
    E[j, j] = 1.0
    return E


def simple_positive_form(covectors) -> ComplexForm:
    """``prod_a (i xi_a ^ conj(xi_a))`` for (1,0)-covectors given as rows."""
    rows = np.atleast_2d(np.asarray(covectors, dtype=complex))
    n = rows.shape[1]
    factors = []
    for u in rows:
        xi = ComplexForm.holomorphic_covector(u)
        factors.append(wedge(xi, xi.conjugate()) * 1j)
    return wedge_all(factors, n)


# -- restrictions ---------------------------------------------------------------

def check_complex_frame(P, tol: float = 1e-12) -> np.ndarray:
    P = np.asarray(P, dtype=complex)
    if P.ndim == 1:
        P = P[:, None]
    gram = P.conj().T @ P
    if np.abs(gram - np.eye(P.shape[1])).max() > tol:
        raise FormError("complex frame columns are not orthonormal")
    return P


def check_real_frame(V, tol: float = 1e-12) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] % 2:
        raise FormError("real frames live in R^{2n}")
    gram = V.T @ V
    if np.abs(gram - np.eye(V.shape[1])).max() > tol:
        raise FormError("real frame columns are not orthonormal")
    return V


def pp_matrix(eta: ComplexForm) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Coefficient matrix ``C[I, J]`` of a (p, p)-form over ``multi_indices(n, p)``."""
    if eta.p != eta.q:
        raise FormError(f"expected a (p,p)-form, got ({eta.p},{eta.q})")
    idx = multi_indices(eta.n, eta.p)
    pos = {I: r for r, I in enumerate(idx)}
    C = np.zeros((len(idx), len(idx)), dtype=complex)
    for (I, J), c in eta.items():
        C[pos[I], pos[J]] = c
    return idx, C


def minors(P: np.ndarray, idx: list[tuple[int, ...]]) -> np.ndarray:
    """Maximal minors ``det P[I, :]`` for a batch of frames ``(..., n, p)``."""
    P = np.asarray(P, dtype=complex)
    p = P.shape[-1]
    if p == 0:
        return np.ones(P.shape[:-2] + (1,), dtype=complex)
    rows = np.asarray(idx, dtype=int)
    sub = P[..., rows, :]  # (..., m, p, p)
    return np.linalg.det(sub)


def restrict_complex_batch(eta: ComplexForm, frames) -> np.ndarray:
    """Vectorized ``restrict_complex`` over frames of shape ``(..., n, p)``."""
    idx, C = pp_matrix(eta)
    m = minors(frames, idx)
    val = np.einsum("...i,ij,...j->...", m, C, m.conj()) / positive_factor(eta.p)
    return val.real


def restrict_complex(eta: ComplexForm, P) -> float:
    """Density of a real (p, p)-form on ``span(P)`` relative to the plane's volume.

    Normalized so the positive monomial built from an orthonormal coframe takes
    the value 1 on its dual frame.
    """
    if not eta.is_real(1e-10):
        raise FormError("restrict_complex needs a real form")
    P = check_complex_frame(P)
    if P.shape[1] != eta.p or P.shape[0] != eta.n:
        raise FormError(f"frame of shape {P.shape} does not match a ({eta.p},{eta.p})-form on C^{eta.n}")
    return float(restrict_complex_batch(eta, P))


# -- real expansion -----------------------------------------------------------------

RealKey = tuple[int, ...]


def to_real(form: ComplexForm) -> dict[RealKey, complex]:
    """Expand in the real basis ``dx_{a_1} ^ ... ^ dx_{a_k}`` (interleaved axes)."""
    out: dict[RealKey, complex] = {}
    for (I, J), c in form.items():
        factors = [((2 * j, 1.0), (2 * j + 1, 1j)) for j in I]
        factors += [((2 * j, 1.0), (2 * j + 1, -1j)) for j in J]
        for choice in itertools.product(*factors) if factors else [()]:
            axes = [a for a, _ in choice]
            s = _perm_sign(axes)
            if s == 0:
                continue
            w = c * s
            for _, f in choice:
                w *= f
            key = tuple(sorted(axes))
            out[key] = out.get(key, 0) + w
    return {k: v for k, v in out.items() if abs(v) > PRUNE}


def restrict_real_batch(rho: ComplexForm, frames) -> np.ndarray:
    """``rho`` evaluated on real frames ``(..., 2n, k)``, per unit Kähler volume.

    The metric of ``omega_std`` is twice the Euclidean one, so Euclidean
    orthonormal columns are rescaled by ``1/sqrt(2)`` before evaluation.
    """
    frames = np.asarray(frames, dtype=float)
    k = rho.degree
    if frames.shape[-1] != k or frames.shape[-2] != 2 * rho.n:
        raise FormError(f"frames of shape {frames.shape[-2:]} do not fit a {k}-form on R^{2 * rho.n}")
    terms = to_real(rho)
    if not terms:
        return np.zeros(frames.shape[:-2])
    keys = np.array(list(terms.keys()), dtype=int)
    coef = np.array(list(terms.values()))
    if np.abs(coef.imag).max() > 1e-12 * max(1.0, np.abs(coef).max()):
        raise FormError("restrict_real needs a real form")
    sub = frames[..., keys, :]  # (..., T, k, k)
    dets = np.linalg.det(sub) if k else np.ones(sub.shape[:-2])
    return (dets @ coef.real) * 2.0 ** (-k / 2)


def restrict_real(rho: ComplexForm, V) -> float:
    V = check_real_frame(V)
    return float(restrict_real_batch(rho, V))


def complex_to_real_frame(P) -> np.ndarray:
    """Columns ``(u_1, i u_1, u_2, i u_2, ...)`` written as interleaved real vectors."""
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    if P.shape[0] == 1 and P.shape[1] > 1:
        P = P.T
    cols = []
    for u in P.T:
        for w in (u, 1j * u):
            v = np.empty(2 * len(w))
            v[0::2], v[1::2] = w.real, w.imag
            cols.append(v)
    return np.column_stack(cols)


def poincare_pair(a: ComplexForm, b: ComplexForm) -> float:
    """Coefficient of ``a ^ b`` relative to ``vol`` for complementary real forms."""
    if a.n != b.n or a.p != a.q or b.p != b.q or a.p + b.p != a.n:
        raise FormError(f"bidegrees ({a.p},{a.q}) and ({b.p},{b.q}) are not complementary on C^{a.n}")
    top = wedge(a, b)
    c = top.positive_coefficient(tuple(range(a.n)))
    return float(c.real)


# -- real exterior algebra on sampled fields -------------------------------------
# A real field form is a dict mapping sorted axis tuples to arrays of equal shape.

def real_wedge(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            s = _perm_sign(ka + kb)
            if s == 0:
                continue
            key = tuple(sorted(ka + kb))
            term = s * va * vb
            out[key] = out[key] + term if key in out else term
    return out


def real_interior(vec, form: dict) -> dict:
    """Contraction ``iota_v form`` with ``vec`` of shape ``(..., 2n)``."""
    out: dict = {}
    for key, val in form.items():
        for pos, axis in enumerate(key):
            sub = key[:pos] + key[pos + 1:]
            term = (-1) ** pos * vec[..., axis] * val
            out[sub] = out[sub] + term if sub in out else term
    return out


def real_omega_power(n: int, k: int, normalized: bool = False) -> dict:
    """``omega_std^k`` as a real form with scalar coefficients, ``omega_std = 2 sum dx_j ^ dy_j``."""
    omega = {(2 * j, 2 * j + 1): 2.0 for j in range(n)}
    result: dict = {(): 1.0}
    for _ in range(k):
        result = real_wedge(result, omega)
    if normalized:
        result = {key: v / math.factorial(k) for key, v in result.items()}
    return result
