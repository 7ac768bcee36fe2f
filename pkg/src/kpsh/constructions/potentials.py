"""Analytic potentials on C^n with exact first and second derivatives.

Every potential evaluates on complex points ``z`` of shape ``(..., n)``:

* ``value(z)``: real values,
* ``dz(z)``: the complex gradient ``d phi / d z_j``,
* ``ddc(z)``: the Hermitian matrix ``H_jk = 2 d^2 phi / dz_j dzbar_k`` of ``dd^c phi``.

JSON round-trips through ``to_json`` / ``potential_from_json``.
"""
from __future__ import annotations

import numpy as np

from ..fields import GridDomain, ScalarField, regmax_kernel, regularized_max


def _c(arr):
    return np.asarray(arr, dtype=complex)


def _matrix_json(M):
    M = _c(M)
    return {"re": M.real.tolist(), "im": M.imag.tolist()}


def _matrix_from_json(d):
    if isinstance(d, dict):
        return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d.get("im", 0.0), dtype=float)
    return _c(d)


class PotentialSpec:
    kind = "abstract"
    n: int

    def value(self, z) -> np.ndarray:
        raise NotImplementedError

    def dz(self, z) -> np.ndarray:
        raise NotImplementedError

    def ddc(self, z) -> np.ndarray:
        raise NotImplementedError

    def singular(self, z) -> np.ndarray:
        """Points where the potential is not smooth (the declared singular set)."""
        return np.zeros(np.shape(z)[:-1], dtype=bool)

    def real_gradient(self, z) -> np.ndarray:
        """Euclidean gradient in interleaved real axes, from ``d/dz = (d/dx - i d/dy) / 2``."""
        g = self.dz(z)
        out = np.empty(g.shape[:-1] + (2 * g.shape[-1],))
        out[..., 0::2] = 2 * g.real
        out[..., 1::2] = -2 * g.imag
        return out

    def on_grid(self, domain: GridDomain, mask=None) -> ScalarField:
        if domain.n != self.n:
            raise ValueError(f"potential on C^{self.n} sampled on a C^{domain.n} grid")
        with np.errstate(divide="ignore", invalid="ignore"):
            return ScalarField(domain, self.value(domain.complex_points()), mask)

    def to_json(self) -> dict:
        raise NotImplementedError

    def __add__(self, other):
        return Sum([self, other])

    def __mul__(self, c):
        return Sum([self], [float(c)])

    __rmul__ = __mul__

    def shifted(self, c: float):
        """``phi + c``."""
        return Sum([self, Quadratic.constant(self.n, c)])


class Quadratic(PotentialSpec):
    """``1/2 sum H_jk z_j zbar_k + Re(z^T S z) + Re(c . z) + const``; ``dd^c`` is ``H``."""

    kind = "quadratic"

    def __init__(self, H, S=None, c=None, const: float = 0.0):
        self.H = _c(H)
        n = self.H.shape[0]
        if self.H.shape != (n, n) or not np.allclose(self.H, self.H.conj().T, atol=1e-12):
            raise ValueError("H must be a Hermitian matrix")
        self.n = n
        self.S = np.zeros((n, n), dtype=complex) if S is None else _c(S)
        if not np.allclose(self.S, self.S.T):
            raise ValueError("S must be complex symmetric")
        self.c = np.zeros(n, dtype=complex) if c is None else _c(c)
        self.const = float(const)

    @classmethod
    def constant(cls, n: int, c: float) -> "Quadratic":
        return cls(np.zeros((n, n)), const=c)

    def value(self, z):
        z = _c(z)
        herm = 0.5 * np.einsum("...j,jk,...k->...", z, self.H, z.conj()).real
        holo = np.einsum("...j,jk,...k->...", z, self.S, z).real
        return herm + holo + (z @ self.c).real + self.const

    def dz(self, z):
        z = _c(z)
        return 0.5 * z.conj() @ self.H.T + z @ self.S.T + 0.5 * self.c

    def ddc(self, z):
        shape = np.shape(z)[:-1]
        return np.broadcast_to(self.H, shape + (self.n, self.n)).copy()

    def to_json(self):
        return {"kind": self.kind, "H": _matrix_json(self.H), "S": _matrix_json(self.S),
                "c": _matrix_json(self.c), "const": self.const}


def _projector(n: int, basis) -> np.ndarray:
    """Orthogonal projector onto the complement of ``span(basis)``."""
    if basis is None:
        return np.eye(n, dtype=complex)
    Q = np.atleast_2d(_c(basis))
    if Q.shape[0] != n:
        Q = Q.T
    if Q.size == 0:
        return np.eye(n, dtype=complex)
    Q, _ = np.linalg.qr(Q)
    return np.eye(n) - Q @ Q.conj().T


class _Radial(PotentialSpec):
    """``g(u)`` with ``u = |Pi (z - center)|^2``, the squared distance to an affine subspace."""

    def __init__(self, n: int, center=None, basis=None):
        self.n = int(n)
        self.center = np.zeros(self.n, dtype=complex) if center is None else _c(center)
        self.basis = None if basis is None else np.atleast_2d(_c(basis))
        self.Pi = _projector(self.n, self.basis)
        self.codim = int(round(np.trace(self.Pi).real))

    def _uv(self, z):
        w = _c(z) - self.center
        v = w @ self.Pi.T
        u = np.einsum("...j,...j->...", w.conj(), v).real
        return np.maximum(u, 0.0), v

    def _g(self, u, order):
        raise NotImplementedError

    def value(self, z):
        u, _ = self._uv(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._g(u, 0)

    def dz(self, z):
        u, v = self._uv(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._g(u, 1)[..., None] * v.conj()

    def ddc(self, z):
        u, v = self._uv(z)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g1 = self._g(u, 1)[..., None, None]
            g2 = self._g(u, 2)[..., None, None]
            return 2 * (g1 * self.Pi.T + g2 * v.conj()[..., :, None] * v[..., None, :])

    def singular(self, z):
        u, _ = self._uv(z)
        return u <= 0

    def _geometry_json(self):
        out = {"n": self.n, "center": _matrix_json(self.center)}
        if self.basis is not None:
            out["basis"] = _matrix_json(self.basis)
        return out


class RadialPower(_Radial):
    """``coef * (u - offset)_+^beta``: ``|z - c|^{2 beta}`` for the default offset 0."""

    kind = "radial-power"

    def __init__(self, n: int, beta: float, coef: float = 1.0, center=None, basis=None,
                 offset: float = 0.0):
        super().__init__(n, center, basis)
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.beta, self.coef, self.offset = float(beta), float(coef), float(offset)

    def _g(self, u, order):
        s = u - self.offset
        pos = s > 0
        sp = np.where(pos, s, 1.0)
        b = self.beta
        if order == 0:
            out = sp ** b
        elif order == 1:
            out = b * sp ** (b - 1)
        else:
            out = b * (b - 1) * sp ** (b - 2)
        # outside the support every term vanishes (beta > 2 keeps it C^2 there)
        return self.coef * np.where(pos, out, 0.0)

    def singular(self, z):
        if self.offset == 0 and self.beta < 1:
            return super().singular(z)
        return np.zeros(np.shape(z)[:-1], dtype=bool)

    def to_json(self):
        return {"kind": self.kind, "beta": self.beta, "coef": self.coef, "offset": self.offset,
                **self._geometry_json()}


class LogDistance(_Radial):
    """``lam * log dist(z, Z)``: psh with a pole along the affine subspace ``Z``."""

    kind = "log-distance"

    def __init__(self, n: int, lam: float = 1.0, center=None, basis=None):
        super().__init__(n, center, basis)
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        self.lam = float(lam)

    def _g(self, u, order):
        if order == 0:
            return 0.5 * self.lam * np.log(u)
        if order == 1:
            return 0.5 * self.lam / u
        return -0.5 * self.lam / u ** 2

    def to_json(self):
        return {"kind": self.kind, "lambda": self.lam, **self._geometry_json()}


class Sum(PotentialSpec):
    kind = "composite"

    def __init__(self, terms, weights=None):
        self.terms = list(terms)
        if not self.terms:
            raise ValueError("empty sum")
        self.n = self.terms[0].n
        if any(t.n != self.n for t in self.terms):
            raise ValueError("terms live in different dimensions")
        self.weights = [1.0] * len(self.terms) if weights is None else [float(w) for w in weights]

    def _combine(self, method, z):
        return sum(w * getattr(t, method)(z) for w, t in zip(self.weights, self.terms))

    def value(self, z):
        return self._combine("value", z)

    def dz(self, z):
        return self._combine("dz", z)

    def ddc(self, z):
        return self._combine("ddc", z)

    def singular(self, z):
        out = self.terms[0].singular(z)
        for t in self.terms[1:]:
            out = out | t.singular(z)
        return out

    def to_json(self):
        return {"kind": self.kind, "op": "sum", "weights": self.weights,
                "terms": [t.to_json() for t in self.terms]}


class RegMax(PotentialSpec):
    """``max_eps(a, b)`` with the quartic-spline kernel; each branch is kept exactly outside the band."""

    kind = "composite"

    def __init__(self, a: PotentialSpec, b: PotentialSpec, eps: float):
        if a.n != b.n:
            raise ValueError("arguments live in different dimensions")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.a, self.b, self.eps, self.n = a, b, float(eps), a.n

    def _t(self, z):
        with np.errstate(invalid="ignore"):
            return self.a.value(z) - self.b.value(z)

    def branches(self, z):
        """Masks ``(a wins, b wins)`` outside the band ``|a - b| < eps``."""
        t = self._t(z)
        return t >= self.eps, t <= -self.eps

    def value(self, z):
        return regularized_max(self.a.value(z), self.b.value(z), self.eps)

    def dz(self, z):
        t = self._t(z)
        ga, gb = self.a.dz(z), self.b.dz(z)
        with np.errstate(invalid="ignore"):
            m1 = regmax_kernel(np.where(np.isfinite(t), t, 0.0), self.eps, 1)[..., None]
            blend = 0.5 * (1 + m1) * ga + 0.5 * (1 - m1) * gb
        a_win = (t >= self.eps)[..., None]
        b_win = (t <= -self.eps)[..., None]
        return np.where(a_win, ga, np.where(b_win, gb, blend))

    def ddc(self, z):
        t = self._t(z)
        Ha, Hb = self.a.ddc(z), self.b.ddc(z)
        ga, gb = self.a.dz(z), self.b.dz(z)
        with np.errstate(invalid="ignore"):
            ts = np.where(np.isfinite(t), t, 0.0)
            m1 = regmax_kernel(ts, self.eps, 1)[..., None, None]
            m2 = regmax_kernel(ts, self.eps, 2)[..., None, None]
            d = ga - gb
            blend = 0.5 * (1 + m1) * Ha + 0.5 * (1 - m1) * Hb + m2 * d[..., :, None] * d.conj()[..., None, :]
        a_win = (t >= self.eps)[..., None, None]
        b_win = (t <= -self.eps)[..., None, None]
        return np.where(a_win, Ha, np.where(b_win, Hb, blend))

    def singular(self, z):
        a_win, b_win = self.branches(z)
        return np.where(a_win, self.a.singular(z), np.where(b_win, self.b.singular(z),
                                                              self.a.singular(z) | self.b.singular(z)))

    def to_json(self):
        return {"kind": self.kind, "op": "regmax", "eps": self.eps,
                "terms": [self.a.to_json(), self.b.to_json()]}


def potential_from_json(d: dict) -> PotentialSpec:
    kind = d.get("kind")
    if kind == "quadratic":
        return Quadratic(_matrix_from_json(d["H"]),
                         _matrix_from_json(d["S"]) if "S" in d else None,
                         _matrix_from_json(d["c"]) if "c" in d else None,
                         d.get("const", 0.0))
    geom = {}
    if kind in ("radial-power", "log-distance"):
        geom = {"center": _matrix_from_json(d["center"]) if "center" in d else None,
                "basis": _matrix_from_json(d["basis"]) if "basis" in d else None}
    if kind == "radial-power":
        return RadialPower(d["n"], d["beta"], d.get("coef", 1.0), offset=d.get("offset", 0.0), **geom)
    if kind == "log-distance":
        return LogDistance(d["n"], d.get("lambda", 1.0), **geom)
    if kind == "composite":
        terms = [potential_from_json(t) for t in d["terms"]]
        if d.get("op", "sum") == "sum":
            return Sum(terms, d.get("weights"))
        if d["op"] == "regmax":
            if len(terms) != 2:
                raise ValueError("regmax takes two terms")
            return RegMax(terms[0], terms[1], d["eps"])
        raise ValueError(f"unknown composite op {d['op']!r}")
    raise ValueError(f"unknown potential kind {kind!r}")


def abs2(n: int) -> Quadratic:
    """``|z|^2``."""
    return Quadratic(2 * np.eye(n))


NAMED = {
    "abs2": abs2,
    "pluriharmonic": lambda n: Quadratic(np.zeros((n, n)), S=np.eye(n)),
    "log": lambda n: LogDistance(n),
}
