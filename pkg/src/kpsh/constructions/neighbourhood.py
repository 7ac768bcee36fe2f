"""Explicit potentials near a ball, a product chart or a subvariety."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..fields import (
    GridDomain,
    ScalarField,
    ddc_field,
    gradient,
    psh_margin_field,
    regularized_max,
)
from ..positivity import jacobi_eigh
from .potentials import LogDistance, PotentialSpec, Quadratic, RegMax


class ConstructionError(ValueError):
    """A construction precondition does not hold on the sampled region."""


@dataclass(frozen=True)
class Subvariety:
    """An affine subspace ``center + span(basis)`` of C^n; no basis means a point."""

    n: int
    center: tuple = ()
    basis: np.ndarray | None = None

    @property
    def dim(self) -> int:
        if self.basis is None:
            return 0
        return int(np.linalg.matrix_rank(np.atleast_2d(self.basis)))

    @property
    def codim(self) -> int:
        return self.n - self.dim

    def center_array(self) -> np.ndarray:
        return np.zeros(self.n, dtype=complex) if not len(self.center) else np.asarray(self.center, dtype=complex)

    def log_distance(self, lam: float = 1.0) -> LogDistance:
        return LogDistance(self.n, lam, center=self.center_array(), basis=self.basis)

    def distance(self, z) -> np.ndarray:
        return np.exp(self.log_distance().value(z))


# -- ball into a torus -----------------------------------------------------------------

@dataclass
class TorusEmbedding:
    potential: RegMax
    A: float
    domain: GridDomain
    checks: dict


def _ball_mask(domain: GridDomain, radius: float) -> np.ndarray:
    return (domain.points() ** 2).sum(axis=-1) <= radius ** 2 * (1 + 1e-12)


def torus_embedding_potential(phi: PotentialSpec, R: float, eps: float, C: float,
                              points: int = 17, slack: float = 1e-6) -> TorusEmbedding:
    """``max_eps(phi, A|x|^2 - A - eps)`` with the smallest admissible ``A``.

    ``A R^2 - A - eps > C + eps`` forces ``A > (C + 2 eps) / (R^2 - 1)``. The
    result agrees with ``phi`` on the unit ball and is the flat quadratic
    wherever ``V - phi >= eps``; both facts are checked cell by cell on a
    ``points``-per-axis grid of the ball of radius ``R``.
    """
    if R <= 1:
        raise ConstructionError("R must exceed 1")
    if eps <= 0:
        raise ConstructionError("eps must be positive")
    n = phi.n
    dom = GridDomain.cube(n, points, R)
    ball = _ball_mask(dom, R)
    z = dom.complex_points()
    pv = phi.value(z)
    if pv[ball].min() < -1e-12 or pv[ball].max() > C + 1e-12:
        raise ConstructionError(f"phi leaves [0, {C}] on the ball: range [{pv[ball].min()}, {pv[ball].max()}]")
    A = (C + 2 * eps) / (R ** 2 - 1) * (1 + slack)
    V = Quadratic(2 * A * np.eye(n), const=-A - eps)
    tilde = RegMax(phi, V, eps)
    vv = V.value(z)
    tv = tilde.value(z)
    unit = _ball_mask(dom, 1.0)
    flat = ball & (vv - pv >= eps)
    H = tilde.ddc(z)
    flat_H = np.broadcast_to(2 * A * np.eye(n), H.shape)
    # FD check on cells whose whole stencil sits in the flat region
    flat_box = vv - pv >= eps
    flat_in = ndimage.binary_erosion(flat_box, structure=np.ones((3,) * (2 * n)))[(slice(1, -1),) * (2 * n)]
    fd = ddc_field(ScalarField(dom, tv)).values
    lam_min = jacobi_eigh(H[ball])[0][:, 0]
    checks = {
        "A": A,
        "identity_on_unit_ball": bool(np.array_equal(tv[unit], pv[unit])),
        "unit_ball_cells": int(unit.sum()),
        "flat_cells": int(flat.sum()),
        "flat_values_exact": bool(np.array_equal(tv[flat], vv[flat])),
        "flat_hessian_exact": bool(np.array_equal(H[flat], flat_H[flat])),
        "flat_fd_cells": int(flat_in.sum()),
        "flat_fd_error": float(np.abs(fd[flat_in] - 2 * A * np.eye(n)).max()) if flat_in.any() else 0.0,
        "boundary_gap": float((vv - pv)[ball & ~_ball_mask(dom, R - dom.spacing[0])].min())
        if (ball & ~_ball_mask(dom, R - dom.spacing[0])).any() else float("nan"),
        "min_eigenvalue": float(lam_min.min()),
        "positive_definite": bool(lam_min.min() > 0),
    }
    return TorusEmbedding(tilde, A, dom, checks)


# -- product chart ------------------------------------------------------------------------

@dataclass
class ProductResult:
    field: ScalarField
    r_max: float
    margin: ScalarField
    ratios: dict
    expansion_residual: float
    radii: np.ndarray = field(repr=False)


def product_domain(z_dom: GridDomain, b_dom: GridDomain) -> GridDomain:
    if z_dom.topology != "box" or b_dom.topology != "box":
        raise ValueError("product charts use box grids")
    return GridDomain(z_dom.n + b_dom.n, z_dom.shape + b_dom.shape, z_dom.spacing + b_dom.spacing,
                      z_dom.origin + b_dom.origin, "box")


def theta_ratios(theta: ScalarField) -> dict:
    """Measured ``max |d theta| / theta`` and ``max |dd^c theta| / theta`` on the interior."""
    th = theta.values[(slice(1, -1),) * (2 * theta.domain.n)]
    if th.min() <= 0:
        raise ConstructionError("theta must be positive on the working compact")
    g = gradient(theta)
    lam = ddc_field(theta).eigenvalues()
    mask = theta.effective_mask()[(slice(1, -1),) * (2 * theta.domain.n)]
    r1 = np.sqrt((g ** 2).sum(axis=-1)) / th
    r2 = np.abs(lam).max(axis=-1) / th
    return {"C1": float(r1[mask].max()), "C2": float(r2[mask].max())}


def product_expansion(theta: ScalarField, b_dom: GridDomain) -> np.ndarray:
    """``theta * omega_B + dd^c theta |b|^2`` plus the two cross terms, from FD derivatives of theta.

    Lives on the margin-1 interior of the product grid, matching ``ddc_field``.
    """
    nz, nb = theta.domain.n, b_dom.n
    sl = (slice(1, -1),)
    th = theta.values[sl * (2 * nz)]
    g = gradient(theta)
    dth = 0.5 * (g[..., 0::2] - 1j * g[..., 1::2])  # d theta / d z_j
    Hz = ddc_field(theta).values
    b = b_dom.complex_points()[sl * (2 * nb)]
    b2 = (np.abs(b) ** 2).sum(axis=-1)
    zs, bs = th.shape, b2.shape
    n = nz + nb
    H = np.zeros(zs + bs + (n, n), dtype=complex)
    ez = (...,) + (None,) * (2 * nb)
    H[..., :nz, :nz] = Hz[(slice(None),) * (2 * nz) + (None,) * (2 * nb)] * b2[..., None, None]
    H[..., nz:, nz:] = 2 * th[ez][..., None, None] * np.eye(nb)
    cross = 2 * dth[(slice(None),) * (2 * nz) + (None,) * (2 * nb)][..., :, None] * b[..., None, :]
    H[..., :nz, nz:] = cross
    H[..., nz:, :nz] = np.conj(np.swapaxes(cross, -1, -2))
    return H


def local_product_potential(theta: ScalarField, C1: float, C2: float, b_grid: GridDomain, q: int,
                            check_ratios: bool = True) -> ProductResult:
    """``phi(z, b) = theta(z) |b|^2`` on ``Z x B`` and the largest ball in ``b`` where it is strictly
    ``omega^q``-psh on the grid."""
    nz = theta.domain.n
    if nz > q - 1:
        raise ConstructionError(f"dim Z = {nz} exceeds q - 1 = {q - 1}")
    ratios = theta_ratios(theta)
    if check_ratios and (ratios["C1"] > C1 or ratios["C2"] > C2):
        raise ConstructionError(f"measured ratios {ratios} exceed C1={C1}, C2={C2}")
    dom = product_domain(theta.domain, b_grid)
    b = b_grid.complex_points()
    b2 = (np.abs(b) ** 2).sum(axis=-1)
    vals = theta.values[(...,) + (None,) * (2 * b_grid.n)] * b2
    phi = ScalarField(dom, vals)
    margin = psh_margin_field(phi, q)
    H = ddc_field(phi).values
    residual = float(np.abs(H - product_expansion(theta, b_grid)).max())
    bn = np.sqrt(b2[(slice(1, -1),) * (2 * b_grid.n)])
    bn = np.broadcast_to(bn, margin.values.shape)
    bad = margin.values <= 0
    r_max = float(bn[bad].min()) if bad.any() else float(bn.max())
    return ProductResult(phi, r_max, margin, ratios, residual, np.unique(bn))


# -- gluing ---------------------------------------------------------------------------------

def smooth_step(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        g = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1 - s, 1.0)), 0.0)
    return f / (f + g)


def smooth_cutoff(domain: GridDomain, r_in: float, r_out: float, center=None) -> ScalarField:
    """``1`` on the ball of radius ``r_in``, ``0`` outside ``r_out``, smooth in between."""
    c = np.zeros(2 * domain.n) if center is None else np.asarray(center, dtype=float)
    r = np.sqrt(((domain.points() - c) ** 2).sum(axis=-1))
    return ScalarField(domain, 1.0 - smooth_step((r - r_in) / (r_out - r_in)))


@dataclass
class GlueResult:
    C: float
    glued: ScalarField
    overlap: np.ndarray
    norm: float
    min_margin: float
    ok: bool

    def to_json(self) -> dict:
        return {"C": self.C, "norm": self.norm, "min_margin": self.min_margin, "ok": self.ok,
                "overlap_cells": int(self.overlap.sum())}


def overlap_region(xi: ScalarField) -> np.ndarray:
    """Interior cells whose ``dd^c`` stencil sees a non-constant ``xi``."""
    nd = 2 * xi.domain.n
    lo = ndimage.minimum_filter(xi.values, size=3, mode="nearest")
    hi = ndimage.maximum_filter(xi.values, size=3, mode="nearest")
    return (hi > lo)[(slice(1, -1),) * nd]


def glue_constant(phi0: ScalarField, phi1: ScalarField, xi: ScalarField, eps: float, q: int,
                  tol: float = 1e-8, slack: float = 1e-3) -> GlueResult:
    """``C phi0 + xi phi1`` with ``C = (1 + slack) max_X(-alpha_min(dd^c(xi phi1))) / eps``, at least 1.

    ``X`` is where ``xi`` varies. ``phi0`` must be strictly psh with margin
    ``eps`` there (margin field ``>= q eps``), which makes the sum psh on ``X``;
    elsewhere it is ``C phi0`` or ``C phi0 + phi1``.
    """
    if eps <= 0:
        raise ConstructionError("eps must be positive")
    X = overlap_region(xi)
    m0 = psh_margin_field(phi0, q).values
    if X.any() and m0[X].min() < q * eps * (1 - 1e-12):
        raise ConstructionError(f"phi0 margin {m0[X].min() / q} < eps = {eps} on the overlap")
    prod = ScalarField(xi.domain, xi.values * phi1.values)
    lam = ddc_field(prod).eigenvalues()[..., 0]
    norm = float(max(0.0, (-lam[X]).max())) if X.any() else 0.0
    C = max(1.0, (1 + slack) * norm / eps)
    glued = ScalarField(phi0.domain, C * phi0.values + prod.values)
    mg = psh_margin_field(glued, q).values
    mn = float(mg.min())
    return GlueResult(C, glued, X, norm, mn, mn >= -tol)


# -- exhaustion with a pole ----------------------------------------------------------------------

@dataclass
class Exhaustion:
    psi: ScalarField
    C_phi: float
    masks: dict
    checks: dict


def exhaustion_potential(phi: ScalarField, Z: Subvariety, lam: float, A: float, B: float, eps: float,
                         q: int, tol: float = 1e-8, deltas=(0.3, 0.5, 1.0)) -> Exhaustion:
    """``psi = max_{eps/3}(phi - B, chi_1 - A)`` with ``chi_1 = C_phi phi + lam log dist(., Z)``.

    ``C_phi`` rescales ``phi`` until its margin field exceeds ``q`` on the
    working set ``W = {chi_1 <= A}`` (kept at 1 when it already does). Grid
    cells within two cells of ``Z`` are flagged as pole cells.
    """
    d = phi.domain
    n = d.n
    if Z.n != n:
        raise ConstructionError("Z and the grid live in different dimensions")
    if Z.dim > q - 1:
        raise ConstructionError(f"dim Z = {Z.dim} exceeds q - 1 = {q - 1}")
    z = d.complex_points()
    chi = Z.log_distance(lam).value(z)
    dist = Z.distance(z)
    h = max(d.spacing)
    pole = dist < 2 * h
    margin = psh_margin_field(phi, q).values
    inner = (slice(1, -1),) * (2 * n)
    # the rescaling only needs to hold on W, which depends on C_phi; iterate once from C_phi = 1
    C_phi = 1.0
    for _ in range(2):
        W = C_phi * phi.values + chi <= A
        mW = margin[W[inner]]
        if mW.size and mW.min() <= q:
            C_phi = max(C_phi, q * (1 + 1e-3) / mW.min()) if mW.min() > 0 else float("inf")
    if not np.isfinite(C_phi):
        raise ConstructionError("phi is not strictly psh on the working set")
    chi1 = C_phi * phi.values + chi
    W = chi1 <= A
    if not W.any():
        raise ConstructionError("working set W is empty")
    if (phi.values[W] >= B - eps).any():
        raise ConstructionError(f"phi < B - eps fails on W (max phi = {phi.values[W].max()}, B - eps = {B - eps})")
    a = phi.values - B
    b = chi1 - A
    with np.errstate(invalid="ignore"):
        t = a - b
    e3 = eps / 3
    psi_vals = regularized_max(a, b, e3)
    near = t >= e3
    far = t <= -e3
    keep = ~ndimage.binary_dilation(pole, structure=np.ones((3,) * (2 * n)))
    psi = ScalarField(d, psi_vals, keep)
    m_psi = psh_margin_field(ScalarField(d, psi_vals), q).values
    check_region = keep[inner]
    interior_W = ndimage.binary_erosion(W, structure=ndimage.generate_binary_structure(2 * n, 1))
    frontier = W & ~interior_W
    sublevels = {}
    for delta in deltas:
        sub = psi_vals <= -delta
        sublevels[float(delta)] = bool(not (sub & ~interior_W).any())
    checks = {
        "C_phi": C_phi,
        "near_exact": bool(np.array_equal(psi_vals[near], a[near])),
        "far_exact": bool(np.array_equal(psi_vals[far], b[far])),
        "nonpositive_on_W": bool(psi_vals[W].max() <= 0),
        "frontier_max_abs": float(np.abs(psi_vals[frontier]).max()) if frontier.any() else 0.0,
        "sublevels_inside_W": sublevels,
        "min_margin": float(m_psi[check_region].min()),
        "psh_ok": bool(m_psi[check_region].min() >= -tol),
        "pole_cells": int(pole.sum()),
    }
    masks = {"W": W, "near": near, "far": far, "pole": pole, "band": ~(near | far)}
    return Exhaustion(psi, C_phi, masks, checks)
