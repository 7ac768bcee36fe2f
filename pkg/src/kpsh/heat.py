"""Heat flow on the flat torus ``(R / 2 pi Z)^{2n}`` by Fourier multipliers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import GridDomain, ScalarField, ddc_field, psh_margin_values, regularized_max


def _check_torus(domain: GridDomain) -> None:
    if domain.topology != "torus":
        raise ValueError("heat flow needs a torus domain")


def _symbol(domain: GridDomain, t: float) -> np.ndarray:
    """``exp(-t |k|^2)`` on the rfft mode grid; ``k`` are the physical wavenumbers."""
    ks = [2 * np.pi * np.fft.fftfreq(s, d=h) for s, h in zip(domain.shape[:-1], domain.spacing[:-1])]
    ks.append(2 * np.pi * np.fft.rfftfreq(domain.shape[-1], d=domain.spacing[-1]))
    k2 = sum(np.meshgrid(*[k ** 2 for k in ks], indexing="ij", sparse=True))
    return np.exp(-t * k2)


def heat_array(values: np.ndarray, domain: GridDomain, t: float) -> np.ndarray:
    """Apply the heat semigroup over the leading ``2n`` axes of ``values``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return np.array(values, copy=True)
    axes = tuple(range(2 * domain.n))
    sym = _symbol(domain, t)
    sym = sym.reshape(sym.shape + (1,) * (values.ndim - len(axes)))
    if np.iscomplexobj(values):
        return heat_array(values.real, domain, t) + 1j * heat_array(values.imag, domain, t)
    spec = np.fft.rfftn(values, axes=axes)
    return np.fft.irfftn(spec * sym, s=domain.shape, axes=axes)


def heat_smooth(phi: ScalarField, t: float) -> ScalarField:
    """``phi_t = exp(t Delta) phi``; ``t = 0`` returns an identical copy."""
    _check_torus(phi.domain)
    return ScalarField(phi.domain, heat_array(phi.values, phi.domain, t), phi.mask)


@dataclass
class SmoothingReport:
    q: int
    t_list: list[float]
    min_margins: list[float]
    initial_margin: float
    eps: float | None
    t_star: float | None
    strict_ok: bool | None
    rows: list[dict] = field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return self.t_star is not None

    def to_json(self) -> dict:
        return {"q": self.q, "t_list": self.t_list, "min_margins": self.min_margins,
                "initial_margin": self.initial_margin, "eps": self.eps, "t_star": self.t_star,
                "strict_ok": self.strict_ok, "succeeded": self.succeeded}


def smoothing_preserves_psh(phi: ScalarField, q: int, t_list, K=None, eps: float | None = None) -> SmoothingReport:
    """Minimum of the ``q``-margin field of ``phi_t`` on ``K`` for each ``t``.

    ``t_star`` is the largest tested ``t`` such that every tested ``t' <= t``
    keeps the margin non-negative. With ``eps`` given, ``strict_ok`` records
    whether the smallest ``t`` keeps a strict margin of ``eps / 2`` (field
    ``>= q eps / 2``).
    """
    _check_torus(phi.domain)
    K = phi.effective_mask() if K is None else np.asarray(K, dtype=bool)
    ts = sorted(float(t) for t in t_list)

    def margin_on_K(f):
        return float(psh_margin_values(ddc_field(f).values[K], q).min())

    initial = margin_on_K(phi)
    mins = [margin_on_K(heat_smooth(phi, t)) for t in ts]
    t_star = None
    for t, m in zip(ts, mins):
        if m < 0:
            break
        t_star = t
    strict_ok = None
    if eps is not None and ts:
        strict_ok = mins[0] >= q * eps / 2
    rows = [{"t": t, "min_margin": m} for t, m in zip(ts, mins)]
    return SmoothingReport(q, ts, mins, initial, eps, t_star, strict_ok, rows)


# -- canonical potentials ------------------------------------------------------------

def wrapped(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % (2 * np.pi) - np.pi


def cube_mask(domain: GridDomain, half_width: float = 0.8) -> np.ndarray:
    """Points of the torus within ``half_width`` of the origin in every coordinate."""
    x = domain.points()
    return np.all(np.abs(wrapped(x)) <= half_width + 1e-12, axis=-1)


def cos_bowl(x: np.ndarray, shift=None) -> np.ndarray:
    """``sum_a (1 - cos(x_a - s_a))``; strictly psh where every ``|x_a - s_a| < pi/2``."""
    s = np.zeros(x.shape[-1]) if shift is None else np.asarray(shift, dtype=float)
    return (1 - np.cos(x - s)).sum(axis=-1)


def canonical_potentials(n: int = 2, points: int = 32, twist: float = 0.3, eps: float = 0.5):
    """Three periodic potentials that are strictly psh on the cube ``|x_a| <= 0.8``.

    ``bowl`` is diagonal, ``twist`` adds a non-diagonal term
    ``1 - cos(x_0 + x_2)`` and ``ridge`` is the regularized maximum of two
    shifted bowls (C^2 but not C^3 along its band).
    """
    dom = GridDomain.torus(n, points)
    x = dom.points()
    shift = np.zeros(2 * n)
    shift[0] = twist
    out = {
        "bowl": ScalarField(dom, cos_bowl(x)),
        "twist": ScalarField(dom, cos_bowl(x) + 0.5 * (1 - np.cos(x[..., 0] + x[..., 2 % (2 * n)]))),
        "ridge": regularized_max(ScalarField(dom, cos_bowl(x, shift)), ScalarField(dom, cos_bowl(x, -shift)), eps),
    }
    return out, cube_mask(dom)
