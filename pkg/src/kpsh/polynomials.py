"""Real polynomials on R^{2n} with exact derivatives, used as finite-difference oracles."""
from __future__ import annotations

import itertools

import numpy as np

from .fields import GridDomain, ScalarField, hessian_to_ddc


class RealPolynomial:
    """``sum_e c_e x^e`` in interleaved real coordinates ``(x_0, y_0, ...)``."""

    def __init__(self, n: int, terms: dict):
        self.n = n
        self.terms = {tuple(int(k) for k in e): float(c) for e, c in terms.items() if c != 0}
        if any(len(e) != 2 * n for e in self.terms):
            raise ValueError(f"exponents need {2 * n} entries")

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def _eval(self, x, terms):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for e, c in terms.items():
            mono = c
            for a, k in enumerate(e):
                if k:
                    mono = mono * x[..., a] ** k
            out = out + mono
        return out

    def derivative(self, axis: int) -> "RealPolynomial":
        terms = {}
        for e, c in self.terms.items():
            if e[axis]:
                f = list(e)
                f[axis] -= 1
                terms[tuple(f)] = terms.get(tuple(f), 0.0) + c * e[axis]
        return RealPolynomial(self.n, terms)

    def value_real(self, x):
        return self._eval(x, self.terms)

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        x = np.empty(z.shape[:-1] + (2 * self.n,))
        x[..., 0::2], x[..., 1::2] = z.real, z.imag
        return self.value_real(x)

    def ddc_real(self, x) -> np.ndarray:
        D = {}
        for a in range(2 * self.n):
            da = self.derivative(a)
            for b in range(a, 2 * self.n):
                v = da.derivative(b).value_real(x)
                D[(a, b)] = np.broadcast_to(v, np.shape(x)[:-1])
        return hessian_to_ddc(D, self.n)

    def on_grid(self, domain: GridDomain) -> ScalarField:
        return ScalarField(domain, self.value_real(domain.points()))


def random_polynomial(rng: np.random.Generator, n: int, degree: int, homogeneous: bool = False) -> RealPolynomial:
    """Gaussian coefficients on all monomials of total degree ``<= degree`` (or ``== degree``)."""
    terms = {}
    for e in itertools.product(range(degree + 1), repeat=2 * n):
        s = sum(e)
        if s > degree or (homogeneous and s != degree):
            continue
        terms[e] = rng.standard_normal()
    return RealPolynomial(n, terms)
