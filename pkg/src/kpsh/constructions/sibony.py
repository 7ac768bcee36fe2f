"""Truncating a pole and integrating a singular closed positive form against it.

``phi_N = max_eps(-N, chi_1)`` is constant near the pole, so
``eta_N = dd^c phi_N ^ omega^{p-1}`` vanishes there and agrees with
``dd^c chi_1 ^ omega^{p-1}`` wherever ``chi_1 > -N + eps``. For
``theta = dd^c rho ^ omega^{n-p-1}`` the integrals ``int_U theta ^ eta_N``
stay bounded as ``N`` grows: Stokes turns them into a flux through ``dU``,
which stops depending on ``N`` once the band leaves ``dU``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fields import GridDomain, ScalarField, dc_from_gradient, psh_margin_values
from ..forms import ComplexForm, omega_power, real_omega_power, real_wedge, wedge
from .potentials import LogDistance, PotentialSpec, Quadratic, RegMax


class SibonyError(ValueError):
    pass


# -- truncation ------------------------------------------------------------------------

@dataclass
class EtaField:
    """``eta = nu ^ omega^{p-1}`` stored through the Hermitian matrix of ``nu`` per grid point."""

    domain: GridDomain
    nu: np.ndarray
    p: int

    def positivity_margin(self) -> np.ndarray:
        """Minimum over complex p-planes of the restriction, divided by ``(p-1)!``."""
        return psh_margin_values(self.nu, self.p)


@dataclass
class Truncation:
    N_list: list[int]
    eps: float
    potentials: list[RegMax]
    phis: list[ScalarField]
    etas: list[EtaField]
    zero_ok: list[bool]
    stabilization_index: int | None
    predicted_index: int | None
    min_positivity: list[float]
    rows: list[dict] = field(default_factory=list)


def truncated_potential(chi1: PotentialSpec, N: float, eps: float) -> RegMax:
    return RegMax(Quadratic.constant(chi1.n, -float(N)), chi1, eps)


def pole_truncation_sequence(chi1: PotentialSpec, eps: float, N_list, p: int, domain: GridDomain,
                             V=None) -> Truncation:
    """``phi_N``, ``eta_N`` on ``domain`` with the support and stabilization checks.

    ``V`` is a mask avoiding the pole (default: cells where ``chi_1`` is finite
    and above ``-min(N_list)``). ``stabilization_index`` is the first position
    in ``N_list`` after which ``eta_N`` on ``V`` no longer changes bit for bit;
    ``predicted_index`` is the first ``N`` with ``min_V chi_1 >= -N + eps``.
    """
    if eps <= 0:
        raise SibonyError("eps must be positive")
    Ns = [int(N) for N in N_list]
    if not 1 <= p <= chi1.n:
        raise SibonyError(f"p={p} out of range")
    z = domain.complex_points()
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = chi1.value(z)
    if V is None:
        V = np.isfinite(chi) & (chi > -min(Ns))
    V = np.asarray(V, dtype=bool)
    pots, phis, etas, zero_ok, mins, rows = [], [], [], [], [], []
    for N in Ns:
        pot = truncated_potential(chi1, N, eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            phis.append(ScalarField(domain, pot.value(z)))
            H = pot.ddc(z)
        eta = EtaField(domain, H, p)
        dead = chi < -N - eps
        zero_ok.append(bool(np.all(H[dead] == 0)))
        finite = np.all(np.isfinite(H), axis=(-2, -1))
        mins.append(float(eta.positivity_margin()[finite].min()) if finite.any() else 0.0)
        pots.append(pot)
        etas.append(eta)
    stab = None
    for i in range(len(Ns)):
        if all(np.array_equal(etas[j].nu[V], etas[i].nu[V]) for j in range(i, len(Ns))):
            stab = i
            break
    predicted = None
    if V.any():
        lo = float(chi[V].min())
        predicted = next((i for i, N in enumerate(Ns) if lo >= -N + eps), None)
    for i, N in enumerate(Ns):
        rows.append({"N": N, "zero_ok": zero_ok[i], "min_positivity": mins[i]})
    return Truncation(Ns, eps, pots, phis, etas, zero_ok, stab, predicted, mins, rows)


# -- quadrature ----------------------------------------------------------------------------

def pair_weights(n: int) -> np.ndarray:
    """``W[j,k,l,m]``: coefficient of ``(i dz_j dzbar_k) ^ (i dz_l dzbar_m) ^ omega^{n-2}`` against vol."""
    om = omega_power(np.eye(n), n - 2)
    W = np.zeros((n,) * 4, dtype=complex)
    for j in range(n):
        for k in range(n):
            a = ComplexForm(n, 1, 1, {((j,), (k,)): 1j})
            for l in range(n):
                for m in range(n):
                    b = ComplexForm(n, 1, 1, {((l,), (m,)): 1j})
                    W[j, k, l, m] = wedge(wedge(a, b), om).positive_coefficient(tuple(range(n)))
    return W


def real_two_form(A: np.ndarray) -> dict:
    """Real expansion of ``i sum A_jk dz_j ^ dzbar_k`` for a Hermitian field ``A``."""
    n = A.shape[-1]
    out: dict = {}

    def add(a, b, c):
        if a == b:
            return
        key, s = ((a, b), 1) if a < b else ((b, a), -1)
        out[key] = out[key] + s * c if key in out else s * c

    for j in range(n):
        for k in range(n):
            c = A[..., j, k]
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            # i (dx_j + i dy_j) ^ (dx_k - i dy_k)
            add(xj, xk, 1j * c)
            add(xj, yk, c)
            add(yj, xk, -c)
            add(yj, yk, 1j * c)
    return {k: v.real for k, v in out.items()}


def _shell_points(n: int, s: float, M: int, center) -> tuple[np.ndarray, float]:
    """Midpoints of an ``M^{2n}`` grid on ``[-s, s]^{2n}`` outside ``[-s/2, s/2]^{2n}``."""
    h = 2 * s / M
    ax = -s + h * (np.arange(M) + 0.5)
    grids = np.meshgrid(*([ax] * (2 * n)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    outer = np.abs(pts).max(axis=-1) > s / 2
    pts = pts[outer] + center
    return pts[:, 0::2] + 1j * pts[:, 1::2], h ** (2 * n)


def _density(theta_rho: PotentialSpec, pot: PotentialSpec, z, W) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        A = theta_rho.ddc(z)
        B = pot.ddc(z)
    return np.einsum("...jk,...lm,jklm->...", A, B, W).real


def shell_integrals(theta_rho, pot, L: float, M: int, levels: int, center, W) -> np.ndarray:
    """Integral of ``theta ^ eta`` over each dyadic shell, in units where ``vol = 2^n dx``."""
    n = theta_rho.n
    vals = []
    for lev in range(levels):
        zs, cell = _shell_points(n, L * 2.0 ** (-lev), M, center)
        dens = _density(theta_rho, pot, zs, W)
        vals.append(math.fsum(dens) * cell * 2.0 ** n)
    return np.array(vals)


def box_flux(theta_rho: PotentialSpec, pot: PotentialSpec, L: float, p: int, center, g: int = 24) -> float:
    """``int_{dU} dd^c rho ^ d^c phi ^ omega^{n-2}`` over the faces of ``U = center + [-L, L]^{2n}``.

    With ``tau = sum_a tau_a dx_(all but a)``, Stokes gives
    ``int_U d tau = sum_a (-1)^a (int_{x_a = L} - int_{x_a = -L}) tau_a``.
    Faces use a ``g``-point Gauss-Legendre rule per axis.
    """
    n = theta_rho.n
    nodes, weights = np.polynomial.legendre.leggauss(g)
    nodes, weights = nodes * L, weights * L
    total = 0.0
    om = real_omega_power(n, n - 2)
    for a in range(2 * n):
        others = [b for b in range(2 * n) if b != a]
        mesh = np.meshgrid(*([nodes] * (2 * n - 1)), indexing="ij")
        wmesh = np.meshgrid(*([weights] * (2 * n - 1)), indexing="ij")
        wt = np.prod(np.stack([w.ravel() for w in wmesh]), axis=0)
        key = tuple(others)
        for side in (1.0, -1.0):
            x = np.zeros((wt.size, 2 * n))
            for b, m in zip(others, mesh):
                x[:, b] = m.ravel()
            x[:, a] = side * L
            x = x + center
            z = x[:, 0::2] + 1j * x[:, 1::2]
            theta2 = real_two_form(theta_rho.ddc(z))
            dc = dc_from_gradient(pot.real_gradient(z), n)
            tau = real_wedge(real_wedge(theta2, dc), om)
            coef = tau.get(key)
            if coef is None:
                continue
            total += (-1) ** a * side * math.fsum(coef * wt)
    return total


@dataclass
class SibonyReport:
    N_list: list[int]
    I: list[float]
    quad_err: list[float]
    flux: list[float]
    levels: list[int]
    stabilization_index: int | None
    monotone_ok: bool
    stabilized_ok: bool
    flux_ok: bool
    r_values: list[float]
    I_r: list[float]
    r_diffs: list[float]
    cauchy_ok: bool
    tol: float
    rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone_ok and self.stabilized_ok and self.flux_ok and self.cauchy_ok

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in (
            "N_list", "I", "quad_err", "flux", "levels", "stabilization_index", "monotone_ok",
            "stabilized_ok", "flux_ok", "r_values", "I_r", "r_diffs", "cauchy_ok", "tol")} | {
            "passed": self.passed}


def sibony_integral(theta_rho: PotentialSpec, chi1: PotentialSpec, N_list, eps: float, p: int,
                    L: float = 1.0, tol: float = 1e-3, M: int = 16, r_ks=(3, 4, 5, 6),
                    max_levels: int = 64, flux_tol: float = 0.05) -> SibonyReport:
    """``I_N = int_U theta ^ eta_N`` on the box ``U = [-L, L]^{2n}`` around the pole of ``chi1``.

    ``theta = dd^c theta_rho ^ omega^{n-p-1}``. The box is cut into dyadic
    shells ``[-s, s]^{2n} \\ [-s/2, s/2]^{2n}``, each integrated by the
    midpoint rule on ``M`` cells per axis; shells are added until one lies
    entirely where ``eta_N`` vanishes. The quadrature error is estimated by
    repeating with ``M / 2``. The exclusion sweep integrates ``eta`` for the
    largest ``N`` over ``U`` minus the box of half-width ``L 2^{-k}``.
    """
    n = chi1.n
    if M % 4:
        raise SibonyError("M must be divisible by 4")
    if not isinstance(chi1, LogDistance):
        raise SibonyError("chi1 must carry its pole geometry (a log-distance potential)")
    if chi1.codim < p + 1:
        raise SibonyError(f"codim Z = {chi1.codim} < p + 1 = {p + 1}")
    if not 1 <= p <= n - 1:
        raise SibonyError(f"p={p} out of range 1..{n - 1}")
    if chi1.basis is not None:
        raise SibonyError("the shell quadrature handles point poles only")
    center = np.empty(2 * n)
    center[0::2], center[1::2] = chi1.center.real, chi1.center.imag
    W = pair_weights(n)
    Ns = [int(N) for N in N_list]
    I, errs, flux, levels = [], [], [], []
    shells_last = None
    for N in Ns:
        pot = truncated_potential(chi1, N, eps)
        vals, coarse = [], []
        for lev in range(max_levels):
            s = L * 2.0 ** (-lev)
            zs, cell = _shell_points(n, s, M, center)
            dens = _density(theta_rho, pot, zs, W)
            vals.append(math.fsum(dens) * cell * 2.0 ** n)
            zc, cc = _shell_points(n, s, M // 2, center)
            coarse.append(math.fsum(_density(theta_rho, pot, zc, W)) * cc * 2.0 ** n)
            if not np.any(dens):
                break
        else:
            raise SibonyError(f"eta_{N} does not vanish within {max_levels} dyadic levels")
        levels.append(len(vals))
        I.append(math.fsum(vals))
        errs.append(abs(math.fsum(vals) - math.fsum(coarse)))
        flux.append(box_flux(theta_rho, pot, L, p, center))
        shells_last = vals
    # exclusion-radius sweep on the largest N
    r_values = [L * 2.0 ** (-k) for k in r_ks]
    I_r = [math.fsum(shells_last[:k]) for k in r_ks]
    r_diffs = [abs(b - a) for a, b in zip(I_r, I_r[1:])]
    cauchy_ok = all(d2 < d1 for d1, d2 in zip(r_diffs, r_diffs[1:])) if len(r_diffs) > 1 else True
    monotone_ok = all(b >= a - 2 * max(ea, eb) for a, b, ea, eb in zip(I, I[1:], errs, errs[1:]))
    stabilized_ok = len(I) < 2 or abs(I[-1] - I[-2]) < tol * abs(I[-1])
    stab = None
    for i in range(1, len(I)):
        if all(abs(I[j] - I[j - 1]) < tol * abs(I[j]) for j in range(i, len(I))):
            stab = i
            break
    flux_ok = all(abs(f - v) <= flux_tol * abs(f) for f, v in zip(flux, I))
    rows = [{"N": N, "I_N": v, "stabilization_index": "" if stab is None else Ns[stab]} for N, v in zip(Ns, I)]
    return SibonyReport(Ns, I, errs, flux, levels, stab, monotone_ok, stabilized_ok, flux_ok,
                        r_values, I_r, r_diffs, cauchy_ok, tol, rows)
