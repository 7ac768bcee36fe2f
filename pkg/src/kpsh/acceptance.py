"""The acceptance battery: eleven numbered criteria, each a list of claims.

Every claim carries its value, tolerance and pass flag. All randomness flows
from one root seed through ``SeedSequence([seed, criterion])``.
"""
from __future__ import annotations

import io
import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import fields as F
from .constructions.neighbourhood import (
    Subvariety,
    exhaustion_potential,
    glue_constant,
    overlap_region,
    smooth_cutoff,
    torus_embedding_potential,
)
from .constructions.potentials import LogDistance, Quadratic, RadialPower, abs2
from .constructions.sibony import sibony_integral
from .forms import complex_to_real_frame, omega_power, restrict_real_batch
from .heat import canonical_potentials, heat_array, heat_smooth, smoothing_preserves_psh
from .reports import CLAIM_HEADER, Claim, claim_flag, claim_ge, claim_le, claims_rows
from .polynomials import RealPolynomial, random_polynomial
from .positivity import (
    kyfan_min_trace,
    nu_wedge_omega_k,
    psh_margin,
    random_frames,
    strong_positivity_certificate,
    weak_positivity_test,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    claims: list[Claim]
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.claims) and all(c.passed for c in self.claims)

    def line(self) -> str:
        worst = next((c for c in self.claims if not c.passed), None)
        status = "PASS" if self.passed else "FAIL"
        note = "" if worst is None else f" (failed: {worst.name} = {worst.value!r})"
        return f"[{status}] criterion {self.number:2d}: {self.title}{note}"


_le, _ge, _flag = claim_le, claim_ge, claim_flag


def _rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), k]))


def random_hermitian(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (A + A.conj().T) / 2


# -- 1 ------------------------------------------------------------------------------------

def criterion_1(seed: int, count: int = 200) -> CriterionResult:
    rng = _rng(seed, 1)
    worst = 0.0
    for i in range(count):
        n = 3 if i < count // 2 else 4
        H = random_hermitian(rng, n)
        for q in range(1, n + 1):
            kf = kyfan_min_trace(H, q, trials=8, seed=int(rng.integers(2 ** 31)))
            worst = max(worst, abs(psh_margin(H, q) - kf))
    return CriterionResult(1, "Ky Fan minimum equals the eigenvalue margin",
                           [_le(1, "max |psh_margin - kyfan_min_trace|", worst, 1e-6)])


# -- 2 ------------------------------------------------------------------------------------

def criterion_2(seed: int, count: int = 200, trials: int = 64) -> CriterionResult:
    rng = _rng(seed, 2)
    worst, mismatches = 0.0, 0
    for i in range(count):
        n = 3 + (i % 2)
        q = 2 + (i // 2) % (n - 1)
        H = random_hermitian(rng, n) + rng.uniform(-0.5, 1.5) * np.eye(n)
        eta = nu_wedge_omega_k(H, q - 1)
        weak = weak_positivity_test(eta, trials=trials, seed=int(rng.integers(2 ** 31)), closed_form=False)
        strong = strong_positivity_certificate(eta)
        f = math.factorial(q - 1)
        worst = max(worst, abs(weak.margin / f - strong.margin / f))
        mismatches += int(weak.positive != strong.positive)
    return CriterionResult(2, "weak and strong tests agree on nu ^ omega^(q-1)", [
        _le(2, "sign mismatches", mismatches, 0),
        _le(2, "max margin gap / (q-1)!", worst, 1e-6),
    ])


# -- 3 ------------------------------------------------------------------------------------

def criterion_3(seed: int, frames: int = 10_000, complex_frames: int = 100) -> CriterionResult:
    rng = _rng(seed, 3)
    worst_abs, worst_eq = 0.0, 0.0
    for n in (2, 3):
        for q in (1, 2):
            if 2 * q > 2 * n:
                continue
            rho = omega_power(np.eye(n), q, normalized=True)
            G = rng.standard_normal((frames, 2 * n, 2 * q))
            V, R = np.linalg.qr(G)
            V = V * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[:, None, :]
            worst_abs = max(worst_abs, float(np.abs(restrict_real_batch(rho, V)).max()))
            P = random_frames(rng, complex_frames, n, q)
            RV = np.stack([complex_to_real_frame(p) for p in P])
            worst_eq = max(worst_eq, float(np.abs(restrict_real_batch(rho, RV) - 1).max()))
    return CriterionResult(3, "Wirtinger bound for omega^q/q!", [
        _le(3, "max |restrict_real| - 1 on real frames", worst_abs - 1, 1e-9),
        _le(3, "max |restrict_real - 1| on complex frames", worst_eq, 1e-9),
    ])


# -- 4 ------------------------------------------------------------------------------------

def quartic_family(n: int) -> list[RealPolynomial]:
    """Three fixed quartics: ``|z|^4``, a mixed real quartic and a seeded dense one."""
    k = 2 * n
    e = lambda *pairs: tuple(dict(pairs).get(a, 0) for a in range(k))
    radial = {}
    for a in range(k):
        for b in range(k):
            key = e((a, 4)) if a == b else e((a, 2), (b, 2))
            radial[key] = radial.get(key, 0.0) + 1.0
    mixed = {e((0, 4)): 1.0, e((0, 3), (1, 1)): -2.0, e((k - 1, 2)): 0.5, e((1, 2), (k - 1, 2)): 1.5}
    dense = random_polynomial(np.random.default_rng(np.random.SeedSequence([4, n])), n, 4, homogeneous=True)
    return [RealPolynomial(n, radial), RealPolynomial(n, mixed), dense]


def ddc_error(poly: RealPolynomial, domain: F.GridDomain) -> float:
    H = F.ddc_field(poly.on_grid(domain))
    exact = poly.ddc_real(H.domain.points())
    return float(np.abs(H.values - exact).max())


def convergence_orders(poly: RealPolynomial, points: list[int], half_width: float = 1.0):
    errs, hs = [], []
    for N in points:
        dom = F.GridDomain.cube(poly.n, N, half_width)
        errs.append(ddc_error(poly, dom))
        hs.append(dom.spacing[0])
    orders = [math.log(e1 / e2) / math.log(h1 / h2) for e1, e2, h1, h2 in zip(errs, errs[1:], hs, hs[1:])]
    return errs, orders


def criterion_4(seed: int) -> CriterionResult:
    claims = []
    worst_order = math.inf
    for n, pts in ((1, [16, 32, 64]), (2, [8, 16, 32])):
        for poly in quartic_family(n):
            _, orders = convergence_orders(poly, pts)
            worst_order = min(worst_order, min(orders))
    claims.append(_ge(4, "min observed order (quartics)", worst_order, 1.9))
    rng = _rng(seed, 4)
    worst_q = 0.0
    for n in (1, 2):
        for _ in range(3):
            Q = Quadratic(random_hermitian(rng, n), S=(lambda S: S + S.T)(rng.standard_normal((n, n))),
                          c=rng.standard_normal(n) + 1j * rng.standard_normal(n))
            dom = F.GridDomain.cube(n, 16, 1.0)
            H = F.ddc_field(Q.on_grid(dom))
            worst_q = max(worst_q, float(np.abs(H.values - Q.H).max()))
    claims.append(_le(4, "max dd^c error on quadratics", worst_q, 1e-10))
    return CriterionResult(4, "dd^c second-order convergence", claims)


# -- 5 ------------------------------------------------------------------------------------

def criterion_5(seed: int, count: int = 5, N: int = 9) -> CriterionResult:
    rng = _rng(seed, 5)
    worst_ratio, worst_C = math.inf, 0.0
    for _ in range(count):
        poly = random_polynomial(rng, 2, 3)
        for q in (1, 2):
            res = []
            for pts in (N, 2 * N - 1):
                dom = F.GridDomain.cube(2, pts, 1.0)
                res.append(F.dc_and_dcal(poly.on_grid(dom), q)[2])
                worst_C = max(worst_C, res[-1] / dom.spacing[0] ** 2)
            worst_ratio = min(worst_ratio, res[0] / res[1])
    return CriterionResult(5, "d_c identity residual is O(h^2)", [
        _ge(5, "min residual ratio under h -> h/2", worst_ratio, 3.5),
        _le(5, "max residual / h^2", worst_C, 10.0),
    ])


# -- 6 ------------------------------------------------------------------------------------

def criterion_6(seed: int, count: int = 50, planes: int = 1000) -> CriterionResult:
    rng = _rng(seed, 6)
    n = 3
    dom = F.GridDomain.cube(n, 5, 1.0)
    center = (1,) * (2 * n)
    worst, mismatches = 0.0, 0
    for _ in range(count):
        H = random_hermitian(rng, n) + rng.uniform(-0.5, 1.0) * np.eye(n)
        q = int(rng.integers(1, n + 1))
        phi = Quadratic(H).on_grid(dom)
        rep = F.plane_subharmonicity(phi, q, planes, seed=int(rng.integers(2 ** 31)), at=center)
        exact = psh_margin(H, q)
        worst = max(worst, abs(rep.refined_min - exact))
        mismatches += int((rep.refined_min >= -1e-8) != (exact >= -1e-8))
    return CriterionResult(6, "plane restrictions recover the eigenvalue margin", [
        _le(6, "max |min restricted Laplacian - psh_margin|", worst, 1e-6),
        _le(6, "classification mismatches", mismatches, 0),
    ])


# -- 7 ------------------------------------------------------------------------------------

def criterion_7(seed: int, points: int = 32, q: int = 2) -> CriterionResult:
    pots, K = canonical_potentials(2, points)
    claims = []
    worst_min, worst_strict, worst_comm = math.inf, math.inf, 0.0
    for name, phi in pots.items():
        m0 = smoothing_preserves_psh(phi, q, [], K).initial_margin
        eps = m0 / q
        rep = smoothing_preserves_psh(phi, q, [1e-4, 1e-3, 1e-2], K, eps=eps)
        worst_min = min(worst_min, min(rep.min_margins))
        worst_strict = min(worst_strict, rep.min_margins[0] - q * eps / 2)
        Ht = F.ddc_field(heat_smooth(phi, 1e-3)).values
        Hs = heat_array(F.ddc_field(phi).values, phi.domain, 1e-3)
        worst_comm = max(worst_comm, float(np.abs(Ht - Hs).max()))
    claims.append(_ge(7, "min margin over t in {1e-4, 1e-3, 1e-2}", worst_min, 0.0))
    claims.append(_ge(7, "margin at t=1e-4 minus q*eps/2", worst_strict, 0.0))
    claims.append(_le(7, "heat / dd^c commutation defect", worst_comm, 1e-8))
    return CriterionResult(7, "heat flow keeps strict omega^q-psh", claims)


# -- 8 ------------------------------------------------------------------------------------

def criterion_8(seed: int, samples: int = 100_000) -> CriterionResult:
    rng = _rng(seed, 8)
    x = rng.standard_normal(samples) * 3
    y = rng.standard_normal(samples) * 3
    eps = rng.uniform(0.01, 2.0, samples)
    r = F.regularized_max(x, y, eps)
    outside = np.abs(x - y) >= eps
    bad = int((r[outside] != np.maximum(x, y)[outside]).sum())
    coef = 0.0
    for e in (0.1, 1.0, 3.0):
        for s in (1.0, -1.0):
            coef = max(coef, abs(F.regmax_spline(s * e, e, 0) - e), abs(F.regmax_spline(s * e, e, 1) - s),
                       abs(F.regmax_spline(s * e, e, 2)))
    dom = F.GridDomain.cube(2, 17, 1.0)
    f = Quadratic(np.diag([3.0, -1.0]), c=[1.0, 0.0]).on_grid(dom)
    g = Quadratic(np.diag([-1.0, 3.0]), c=[-1.0, 0.0]).on_grid(dom)
    h = dom.spacing[0]
    rm = F.regularized_max(f, g, 0.5)
    closure = F.psh_margin_field(rm, 2).min()
    return CriterionResult(8, "regularized maximum", [
        _le(8, "mismatches with max outside the band", bad, 0),
        _le(8, "spline coefficient defect at |t| = eps", coef, 1e-12),
        _ge(8, "closure margin + 10 h^2", closure + 10 * h ** 2, -1e-8),
    ])


# -- 9 ------------------------------------------------------------------------------------

def criterion_9(seed: int) -> CriterionResult:
    claims = []
    te = torus_embedding_potential(Quadratic(0.25 * np.eye(2)), 2.0, 0.1, 1.0, points=17)
    claims.append(_flag(9, "torus embedding identity on unit ball", te.checks["identity_on_unit_ball"]))
    claims.append(_flag(9, "torus embedding flat values exact",
                        te.checks["flat_values_exact"] and te.checks["flat_cells"] > 0))
    claims.append(_flag(9, "torus embedding flat Hessian exact", te.checks["flat_hessian_exact"]))
    claims.append(_le(9, "torus embedding |A - 0.4|", abs(te.A - 0.4), 1e-6))

    dom = F.GridDomain.cube(2, 17, 1.0)
    phi0 = RadialPower(2, 3, offset=0.04).on_grid(dom)
    phi1 = Quadratic(np.diag([4.0, -2.0])).on_grid(dom)
    xi = smooth_cutoff(dom, 0.4, 0.8)
    X = overlap_region(xi)
    eps = F.psh_margin_field(phi0, 2).values[X].min() / 2
    glue = glue_constant(phi0, phi1, xi, eps, 2)
    claims.append(_ge(9, "glued field min margin", glue.min_margin, -1e-8))

    dom = F.GridDomain.cube(2, 21, 1.0)
    A, B, e = 0.0, 1.0, 0.3
    ex = exhaustion_potential(abs2(2).on_grid(dom), Subvariety(2), 1.0, A, B, e, 2)
    r = np.sqrt((dom.points() ** 2).sum(axis=-1))
    C = ex.C_phi
    # boundaries of the two exact regions, solved numerically on the radial profile
    gap = lambda s, sign: (C * s * s + math.log(s) - A) - (s * s - B) - sign * e / 3
    r_near = brentq(lambda s: gap(s, -1), 1e-9, 1.0)
    r_far = brentq(lambda s: gap(s, 1), 1e-9, 1.0)
    h = dom.spacing[0]
    bad_near = ex.masks["near"] != (r < r_near)
    bad_far = ex.masks["far"] != (r > r_far)
    off = max(float(np.abs(r[bad_near] - r_near).max(initial=0.0)), float(np.abs(r[bad_far] - r_far).max(initial=0.0)))
    claims.append(_le(9, "exhaustion mask mismatch distance / h", off / h, 1.0))
    claims.append(_flag(9, "exhaustion exact branches", ex.checks["near_exact"] and ex.checks["far_exact"]))
    return CriterionResult(9, "neighbourhood constructions", claims,
                           extra={"glue_C": glue.C, "r_near": r_near, "r_far": r_far})


# -- 10 -----------------------------------------------------------------------------------

def criterion_10(seed: int, N_list=(2, 4, 8, 16), beta: float = 0.5, eps: float = 0.1):
    rep = sibony_integral(RadialPower(2, beta), LogDistance(2), list(N_list), eps, 1)
    I = rep.I
    claims = [
        _le(10, "|I_16 - I_8| / |I_16|", abs(I[-1] - I[-2]) / abs(I[-1]), 1e-3),
        _flag(10, "I_N monotone within 2x quadrature error", rep.monotone_ok),
        _flag(10, "exclusion sweep differences decrease", rep.cauchy_ok),
        _le(10, "max |I_N - flux| / |flux|", max(abs(a - b) / abs(b) for a, b in zip(I, rep.flux)), 0.05),
    ]
    return CriterionResult(10, "Sibony integrals stay bounded", claims, extra={"report": rep})


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_battery(seed: int = 7, only=None, log=None) -> list[CriterionResult]:
    results = []
    for k, fn in CRITERIA.items():
        if only is not None and k not in only:
            continue
        t0 = time.perf_counter()
        res = fn(seed)
        res.seconds = time.perf_counter() - t0
        if log:
            log(res.line())
        results.append(res)
    return results


def claims_csv(results) -> str:
    """Deterministic CSV of every claim; floats in shortest round-trip form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLAIM_HEADER)
    for res in results:
        w.writerows([r[:2] + [repr(r[2])] + r[3:4] + [repr(r[4])] + r[5:] for r in claims_rows(res.claims)])
    return buf.getvalue()
