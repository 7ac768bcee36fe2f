"""Sampled functions on flat Kähler grids and their finite-difference calculus.

Grid axes are the real coordinates ``(x_0, y_0, x_1, y_1, ...)``. Box domains
lose a margin of cells to every stencil; torus domains wrap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .forms import (
    ComplexForm,
    FormError,
    omega_power,
    real_interior,
    real_omega_power,
    real_wedge,
    wedge,
)
from .positivity import jacobi_eigh, min_restricted_trace, random_frames, restricted_trace


class StencilError(ValueError):
    """The grid is too small for the requested stencil."""


@dataclass(frozen=True)
class GridDomain:
    n: int
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]
    topology: str = "box"

    def __post_init__(self):
        for name in ("shape", "spacing", "origin"):
            val = tuple(getattr(self, name))
            object.__setattr__(self, name, val)
            if len(val) != 2 * self.n:
                raise ValueError(f"{name} needs {2 * self.n} entries, got {len(val)}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacing must be positive")
        if self.topology not in ("box", "torus"):
            raise ValueError(f"unknown topology {self.topology!r}")

    @classmethod
    def cube(cls, n: int, points: int, half_width: float = 1.0, topology: str = "box",
             center=None) -> "GridDomain":
        """Uniform grid on ``[-L, L]^{2n}`` (box, endpoints included) or ``[0, 2L)`` periodic."""
        center = np.zeros(2 * n) if center is None else np.asarray(center, dtype=float)
        if topology == "torus":
            h = 2 * half_width / points
            origin = center - half_width
        else:
            h = 2 * half_width / (points - 1)
            origin = center - half_width
        return cls(n, (points,) * (2 * n), (h,) * (2 * n), tuple(origin), topology)

    @classmethod
    def torus(cls, n: int, points: int) -> "GridDomain":
        """The flat torus ``(R / 2 pi Z)^{2n}`` sampled at ``points`` per axis."""
        h = 2 * math.pi / points
        return cls(n, (points,) * (2 * n), (h,) * (2 * n), (0.0,) * (2 * n), "torus")

    @property
    def period(self) -> tuple[float, ...]:
        return tuple(s * h for s, h in zip(self.shape, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(s) for o, h, s in zip(self.origin, self.spacing, self.shape)]

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack(self.coords(), axis=-1)

    def complex_points(self) -> np.ndarray:
        x = self.points()
        return x[..., 0::2] + 1j * x[..., 1::2]

    def interior(self, margin: int = 1) -> "GridDomain":
        if self.topology == "torus" or margin == 0:
            return self
        if any(s <= 2 * margin for s in self.shape):
            raise StencilError(f"grid {self.shape} too small for a margin of {margin}")
        return replace(
            self,
            shape=tuple(s - 2 * margin for s in self.shape),
            origin=tuple(o + margin * h for o, h in zip(self.origin, self.spacing)),
        )

    def header(self) -> str:
        parts = [str(self.n)]
        parts += [str(s) for s in self.shape]
        parts += [repr(h) for h in self.spacing]
        parts += [repr(o) for o in self.origin]
        parts.append(self.topology)
        return ", ".join(parts)

    def to_json(self) -> dict:
        return {"n": self.n, "shape": list(self.shape), "spacing": list(self.spacing),
                "origin": list(self.origin), "topology": self.topology}


@dataclass(frozen=True)
class ScalarField:
    domain: GridDomain
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.domain.shape:
            raise ValueError(f"values of shape {vals.shape} do not match grid {self.domain.shape}")
        object.__setattr__(self, "values", vals)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != vals.shape:
                raise ValueError("mask shape mismatch")
            object.__setattr__(self, "mask", m)

    @classmethod
    def from_function(cls, domain: GridDomain, fn, mask=None) -> "ScalarField":
        """Sample ``fn(z)`` where ``z`` is the complex coordinate array ``(..., n)``."""
        return cls(domain, np.asarray(fn(domain.complex_points()), dtype=float), mask)

    def effective_mask(self) -> np.ndarray:
        return np.ones(self.values.shape, dtype=bool) if self.mask is None else self.mask

    def min(self) -> float:
        return float(self.values[self.effective_mask()].min())

    def max(self) -> float:
        return float(self.values[self.effective_mask()].max())


@dataclass(frozen=True)
class HermitianField:
    domain: GridDomain
    values: np.ndarray  # (*shape, n, n)

    def eigenvalues(self) -> np.ndarray:
        return jacobi_eigh(self.values)[0]


# -- stencils ---------------------------------------------------------------------

def _shift(values: np.ndarray, offsets: dict[int, int], margin: int, topology: str) -> np.ndarray:
    """``values`` at ``index + offsets`` restricted to the margin-``margin`` interior."""
    if topology == "torus":
        out = values
        for axis, o in offsets.items():
            if o:
                out = np.roll(out, -o, axis=axis)
        return out
    sl = []
    for axis, s in enumerate(values.shape):
        o = offsets.get(axis, 0)
        sl.append(slice(margin + o, s - margin + o))
    return values[tuple(sl)]


def _check_margin(domain: GridDomain, margin: int) -> None:
    if domain.topology == "box" and any(s <= 2 * margin for s in domain.shape):
        raise StencilError(f"grid {domain.shape} too small for a stencil of half-width {margin}")


def second_derivatives(phi: ScalarField) -> dict[tuple[int, int], np.ndarray]:
    """Central second differences ``D[a, b]`` (a <= b) on the one-cell interior."""
    d = phi.domain
    _check_margin(d, 1)
    v, top, h = phi.values, d.topology, d.spacing
    na = 2 * d.n
    center = _shift(v, {}, 1, top)
    out = {}
    for a in range(na):
        out[(a, a)] = (_shift(v, {a: 1}, 1, top) - 2 * center + _shift(v, {a: -1}, 1, top)) / h[a] ** 2
        for b in range(a + 1, na):
            pp = _shift(v, {a: 1, b: 1}, 1, top)
            pm = _shift(v, {a: 1, b: -1}, 1, top)
            mp = _shift(v, {a: -1, b: 1}, 1, top)
            mm = _shift(v, {a: -1, b: -1}, 1, top)
            out[(a, b)] = (pp - pm - mp + mm) / (4 * h[a] * h[b])
    return out


def hessian_to_ddc(D: dict[tuple[int, int], np.ndarray], n: int) -> np.ndarray:
    """Assemble ``H_jk = 2 d^2/dz_j dzbar_k`` from real second derivatives."""
    def get(a, b):
        return D[(a, b)] if a <= b else D[(b, a)]

    shape = next(iter(D.values())).shape
    H = np.empty(shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            re = get(xj, xk) + get(yj, yk)
            im = get(xj, yk) - get(yj, xk)
            H[..., j, k] = 0.5 * (re + 1j * im)
    return H


def ddc_field(phi: ScalarField) -> HermitianField:
    """Finite-difference ``dd^c phi`` as a Hermitian matrix field."""
    D = second_derivatives(phi)
    return HermitianField(phi.domain.interior(1), hessian_to_ddc(D, phi.domain.n))


def psh_margin_values(H: np.ndarray, q: int) -> np.ndarray:
    n = H.shape[-1]
    if not 1 <= q <= n:
        raise ValueError(f"q={q} out of range 1..{n}")
    return jacobi_eigh(H)[0][..., :q].sum(axis=-1)


def _interior_mask(phi: ScalarField, margin: int) -> np.ndarray | None:
    if phi.mask is None:
        return None
    if phi.domain.topology == "torus":
        return phi.mask
    return _shift(phi.mask, {}, margin, "box")


def psh_margin_field(phi: ScalarField, q: int) -> ScalarField:
    """Pointwise sum of the ``q`` smallest eigenvalues of ``dd^c phi``."""
    H = ddc_field(phi)
    return ScalarField(H.domain, psh_margin_values(H.values, q), _interior_mask(phi, 1))


# -- d^c and d_c -------------------------------------------------------------------

def gradient(phi: ScalarField, order: int = 2) -> np.ndarray:
    """Central-difference gradient ``(..., 2n)`` on the interior of margin ``order // 2``."""
    d = phi.domain
    m = order // 2
    _check_margin(d, m)
    v, top, h = phi.values, d.topology, d.spacing
    comps = []
    for a in range(2 * d.n):
        if order == 2:
            g = (_shift(v, {a: 1}, m, top) - _shift(v, {a: -1}, m, top)) / (2 * h[a])
        elif order == 4:
            g = (-_shift(v, {a: 2}, m, top) + 8 * _shift(v, {a: 1}, m, top)
                 - 8 * _shift(v, {a: -1}, m, top) + _shift(v, {a: -2}, m, top)) / (12 * h[a])
        else:
            raise ValueError("order must be 2 or 4")
        comps.append(g)
    return np.stack(comps, axis=-1)


def _crop(arr: np.ndarray, margin: int, nd: int) -> np.ndarray:
    if margin == 0:
        return arr
    return arr[tuple(slice(margin, s - margin) for s in arr.shape[:nd])]


def dc_from_gradient(g: np.ndarray, n: int) -> dict:
    """``d^c phi = omega lrcorner (d phi)^sharp = sum_j (phi_{x_j} dy_j - phi_{y_j} dx_j)``."""
    sharp = 0.5 * g  # Kähler metric of omega_std is twice the Euclidean one
    return real_interior(sharp, {key: c for key, c in real_omega_power(n, 1).items()})


def dc_and_dcal(phi: ScalarField, q: int):
    """``d^c phi`` and the calibrated differential ``d_c phi`` two ways.

    Route A contracts ``omega^q / q!`` with ``(d phi)^sharp`` from the compact
    central stencil. Route B evaluates ``d^c phi ^ omega^{q-1} / (q-1)!`` with a
    fourth-order gradient. Their largest pointwise disagreement is the
    second-order truncation of route A.

    Returns ``(dc, dcal, residual)`` on the margin-2 interior; forms are dicts
    from real axis tuples to arrays.
    """
    d = phi.domain
    n = d.n
    if not 1 <= q <= n:
        raise ValueError(f"q={q} out of range 1..{n}")
    margin = 0 if d.topology == "torus" else 2
    _check_margin(d, 2)
    nd = 2 * n
    g2 = _crop(gradient(phi, 2), margin - 1 if margin else 0, nd)
    g4 = gradient(phi, 4)
    dc = dc_from_gradient(g2, n)
    calib = real_omega_power(n, q, normalized=True)
    route_a = real_interior(0.5 * g2, calib)
    low = real_omega_power(n, q - 1, normalized=True)
    route_b = real_wedge(dc_from_gradient(g4, n), low)
    keys = set(route_a) | set(route_b)
    zero = np.zeros(g2.shape[:-1])
    residual = 0.0
    for key in keys:
        diff = np.abs(route_a.get(key, zero) - route_b.get(key, zero))
        if diff.size:
            residual = max(residual, float(diff.max()))
    return dc, route_a, residual


# -- integral criterion ---------------------------------------------------------------

def bump_field(domain: GridDomain, center, radius: float) -> ScalarField:
    """Smooth bump ``exp(1 - 1 / (1 - r^2/R^2))`` supported in the ball of radius ``radius``."""
    x = domain.points() - np.asarray(center, dtype=float)
    s = (x ** 2).sum(axis=-1) / radius ** 2
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(s < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return ScalarField(domain, vals)


def pairing_weights(n: int, q: int, test_form: ComplexForm) -> np.ndarray:
    """``w[j, k] = <omega^{q-1} ^ (i dz_j ^ dzbar_k) ^ test_form, vol>``."""
    om = omega_power(np.eye(n), q - 1)
    w = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[j, k] = 1.0
            top = wedge(wedge(om, ComplexForm(n, 1, 1, {((j,), (k,)): 1j})), test_form)
            w[j, k] = top.positive_coefficient(tuple(range(n)))
    return w


def integral_criterion(phi: ScalarField, bump: ScalarField, test_form: ComplexForm, q: int,
                       return_parts: bool = False):
    """``int phi omega^{q-1} ^ dd^c(bump * test_form)`` by the trapezoid rule.

    ``test_form`` is a constant strongly positive (n-q, n-q)-form; the bump must
    vanish within two cells of a box boundary. Forms are integrated against
    ``vol = 2^n dx_0 dy_0 ...``.
    """
    d = phi.domain
    n = d.n
    if test_form.p != n - q or test_form.q != n - q:
        raise FormError(f"test form must be ({n - q},{n - q})")
    if bump.domain != d:
        raise ValueError("bump and phi live on different grids")
    if d.topology == "box":
        edge = np.ones(d.shape, dtype=bool)
        edge[tuple(slice(2, s - 2) for s in d.shape)] = False
        if np.any(bump.values[edge] != 0):
            raise ValueError("bump support touches the boundary margin")
    w = pairing_weights(n, q, test_form)
    Hb = ddc_field(bump).values
    density = np.einsum("...jk,jk->...", Hb, w).real
    phi_in = _shift(phi.values, {}, 1, d.topology) if d.topology == "box" else phi.values
    weight = d.cell_volume * 2.0 ** n
    value = float((phi_in * density).sum() * weight)
    if return_parts:
        return value, density, weight
    return value


def integral_by_parts(phi: ScalarField, bump: ScalarField, test_form: ComplexForm, q: int) -> float:
    """``int dd^c phi ^ omega^{q-1} ^ bump * test_form`` on the same grid (oracle side)."""
    d = phi.domain
    w = pairing_weights(d.n, q, test_form)
    H = ddc_field(phi).values
    density = np.einsum("...jk,jk->...", H, w).real
    b_in = _shift(bump.values, {}, 1, d.topology) if d.topology == "box" else bump.values
    return float((b_in * density).sum() * d.cell_volume * 2.0 ** d.n)


# -- restriction to complex planes ------------------------------------------------------

@dataclass
class PlaneReport:
    q: int
    samples: int
    sampled_min: float
    refined_min: float
    argmin_index: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {"q": self.q, "samples": self.samples, "sampled_min": self.sampled_min,
                "refined_min": self.refined_min, "argmin_index": list(self.argmin_index)}


def plane_subharmonicity(phi: ScalarField, q: int, planes: int, seed: int = 0, at=None,
                         refine: int = 4) -> PlaneReport:
    """Restricted Laplacians of ``phi`` on random affine complex q-planes.

    Each sample draws an interior point (or uses the index ``at``) and an
    orthonormal q-frame ``P``; the value is the trace of ``dd^c phi`` restricted
    to ``span(P)``. The ``refine`` lowest samples are polished by descent on the
    Grassmannian at their base points.
    """
    H = ddc_field(phi)
    n = phi.domain.n
    if not 1 <= q <= n:
        raise ValueError(f"q={q} out of range 1..{n}")
    grid_shape = H.values.shape[:-2]
    if int(np.prod(grid_shape)) == 0:
        raise StencilError("no interior points")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if at is None:
        flat = rng.integers(0, int(np.prod(grid_shape)), size=planes)
    else:
        flat = np.full(planes, np.ravel_multi_index(tuple(at), grid_shape))
    Hs = H.values.reshape((-1, n, n))[flat]
    frames = random_frames(rng, planes, n, q)
    vals = restricted_trace(Hs, frames)
    order = np.argsort(vals, kind="stable")[: max(refine, 0)]
    refined = float(vals.min())
    for i in order:
        _, v = min_restricted_trace(Hs[i], frames[i][None])
        refined = min(refined, float(v.min()))
    best = int(np.argmin(vals))
    return PlaneReport(q=q, samples=planes, sampled_min=float(vals.min()), refined_min=refined,
                       argmin_index=tuple(int(i) for i in np.unravel_index(flat[best], grid_shape)),
                       values=vals)


# -- regularized maximum --------------------------------------------------------------------

def _m_eps(t, eps):
    return np.where(np.abs(t) >= eps, np.abs(t), regmax_spline(t, eps, 0))


def regmax_spline(t, eps: float, order: int = 0):
    """The quartic branch of ``M_eps`` and its derivatives, valid on ``|t| <= eps``."""
    t = np.asarray(t, dtype=float)
    if order == 0:
        return -t ** 4 / (8 * eps ** 3) + 3 * t ** 2 / (4 * eps) + 3 * eps / 8
    if order == 1:
        return -t ** 3 / (2 * eps ** 3) + 3 * t / (2 * eps)
    if order == 2:
        return 3 / (2 * eps) - 3 * t ** 2 / (2 * eps ** 3)
    raise ValueError("order must be 0, 1 or 2")


def regmax_kernel(t, eps: float, order: int = 0):
    """``M_eps`` and its first two derivatives (C^2 quartic spline, ``|t|`` outside the band)."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < eps
    if order == 0:
        return _m_eps(t, eps)
    if order == 1:
        return np.where(inside, regmax_spline(t, eps, 1), np.sign(t))
    if order == 2:
        return np.where(inside, regmax_spline(t, eps, 2), 0.0)
    raise ValueError("order must be 0, 1 or 2")


def regularized_max(f, g, eps):
    """Smooth convex maximum, equal to ``max(f, g)`` wherever ``|f - g| >= eps``.

    Accepts scalars, arrays or ScalarFields on a shared grid; ``eps`` may be
    an array broadcasting against them.
    """
    if np.any(np.asarray(eps) <= 0):
        raise ValueError("eps must be positive")
    if isinstance(f, ScalarField) or isinstance(g, ScalarField):
        dom = f.domain if isinstance(f, ScalarField) else g.domain
        fv = f.values if isinstance(f, ScalarField) else f
        gv = g.values if isinstance(g, ScalarField) else g
        mask = f.mask if isinstance(f, ScalarField) else None
        return ScalarField(dom, regularized_max(fv, gv, eps), mask)
    x = np.asarray(f, dtype=float)
    y = np.asarray(g, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        t = x - y
        smooth = ((x + y) + _m_eps(t, eps)) / 2
        out = np.where(np.abs(t) >= eps, np.maximum(x, y), smooth)
    if out.ndim == 0:
        return float(out)
    return out


# -- Green-Wu pseudonorm -----------------------------------------------------------------------

@dataclass
class PseudonormReport:
    value: float
    sup: float
    derivative_sups: list[float]
    order: int
    omitted_weight: float

    def to_json(self) -> dict:
        return {"value": self.value, "sup": self.sup, "derivative_sups": self.derivative_sups,
                "order": self.order, "omitted_weight": self.omitted_weight}


def greenwu_pseudonorm(f: ScalarField, K=None, order: int = 3) -> PseudonormReport:
    """``sup_K |f| + sum_{i=1}^{m} 2^{-i} max(1, D_i)``, truncated at order ``m``.

    ``D_i`` is the sup over ``K`` of the Frobenius norm of the order-i tensor of
    iterated central differences. Each order consumes one cell of margin on box
    grids; nothing beyond order ``m`` is estimated, only its weight ``2^{-m}``.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    d = f.domain
    K = np.ones(d.shape, dtype=bool) if K is None else np.asarray(K, dtype=bool)
    if not K.any():
        raise ValueError("K is empty")
    sup = float(np.abs(f.values[K]).max())
    total = sup
    sups = []
    tensor = f.values[None]  # leading axis enumerates tensor components
    for i in range(1, order + 1):
        comps = []
        for comp in tensor:
            for a in range(2 * d.n):
                comps.append((_shift(comp, {a: 1}, 1, d.topology) - _shift(comp, {a: -1}, 1, d.topology))
                             / (2 * d.spacing[a]))
        tensor = np.stack(comps)
        Ki = K if d.topology == "torus" else _crop(K, i, 2 * d.n)
        if Ki.size == 0 or not Ki.any():
            raise StencilError(f"K has no points where order-{i} differences are defined")
        frob = np.sqrt((tensor ** 2).sum(axis=0))
        Di = float(frob[Ki].max())
        sups.append(Di)
        total += 2.0 ** (-i) * max(1.0, Di)
    return PseudonormReport(value=total, sup=sup, derivative_sups=sups, order=order,
                            omitted_weight=2.0 ** (-order))
