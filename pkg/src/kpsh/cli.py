"""Batch command-line front end.

Every subcommand builds a :class:`~kpsh.reports.RunConfig`, runs exactly one
computation and writes a JSON report (printed to stdout when no ``--report``
path is given). Exit codes: 0 when every required claim passed, 1 when one
failed (the report is still written), 2 for configuration or input errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fields as F
from .constructions import neighbourhood as NB
from .constructions.potentials import NAMED, LogDistance, PotentialSpec, Quadratic, RadialPower, potential_from_json
from .constructions.sibony import SibonyError, sibony_integral
from .fieldio import FieldFormatError, load_field, save_field
from .forms import ComplexForm, FormError
from .heat import canonical_potentials, cube_mask, heat_smooth, smoothing_preserves_psh
from .positivity import (
    hermitian_eigenvalues,
    is_strongly_q_convex,
    nu_wedge_omega_k,
    psh_margin,
    strong_positivity_certificate,
    weak_positivity_test,
)
from .reports import (
    CLAIM_HEADER,
    ConfigError,
    RunConfig,
    all_passed,
    build_report,
    claim_flag,
    claim_ge,
    claim_le,
    claims_rows,
    threads_setting,
    write_csv,
    write_json,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# -- input parsing -----------------------------------------------------------------------

def parse_matrix(text) -> np.ndarray:
    """A square complex matrix from JSON: nested lists of numbers or strings like ``"1j"``,
    or ``{"re": ..., "im": ...}``."""
    data = json.loads(text) if isinstance(text, str) else text
    try:
        if isinstance(data, dict):
            M = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data.get("im", 0.0), dtype=float)
        else:
            M = np.array([[complex(str(x).replace(" ", "")) if isinstance(x, str) else complex(x) for x in row]
                          for row in data])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse matrix: {exc}") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"matrix must be square, got shape {M.shape}")
    return M


def parse_potential(spec, n: int) -> PotentialSpec:
    """A named potential, an inline JSON object or a path to a JSON file."""
    if isinstance(spec, dict):
        return potential_from_json(spec)
    if spec in NAMED:
        return NAMED[spec](n)
    if isinstance(spec, str) and spec.lstrip().startswith("{"):
        return potential_from_json(json.loads(spec))
    path = Path(str(spec))
    if path.suffix == ".json" and path.exists():
        return potential_from_json(json.loads(path.read_text()))
    raise ConfigError(f"unknown potential {spec!r}; named ones are {sorted(NAMED)}")


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _need(cfg: RunConfig, key: str):
    if cfg.params.get(key) is None:
        raise ConfigError(f"{cfg.subcommand}: missing required parameter {key!r}")
    return cfg.params[key]


def _grid(cfg: RunConfig, default_points: int = 16, default_n: int = 2) -> F.GridDomain:
    g = cfg.grid or {}
    n = int(g.get("n", default_n))
    points = int(g.get("points", default_points))
    half = float(g.get("half_width", 1.0))
    if n < 1 or points < 3 or half <= 0:
        raise ConfigError(f"bad grid {g}")
    if g.get("topology", "box") == "torus":
        return F.GridDomain.torus(n, points)
    return F.GridDomain.cube(n, points, half)


# -- subcommand handlers -----------------------------------------------------------------
# each returns (claims, results, sidecar CSVs as (name, header, rows))

def run_eig(cfg: RunConfig):
    H = parse_matrix(_need(cfg, "matrix"))
    spec = hermitian_eigenvalues(H)
    scale = max(1.0, float(np.abs(H).max()))
    recon = float(np.abs(spec.reconstruct() - H).max()) / scale
    claims = [
        claim_le(0, "reconstruction error (relative)", recon, cfg.tol("reconstruction", 1e-10)),
        claim_flag(0, "spectrum ascending", bool(np.all(np.diff(spec.values) >= 0))),
    ]
    results = {"spectrum": spec.values, "frame": spec.frame}
    q = cfg.params.get("q")
    if q is not None:
        q = int(q)
        margin = psh_margin(H, q)
        results.update(q=q, margin=margin, strongly_q_convex=is_strongly_q_convex(H, q))
        claims.append(claim_ge(0, f"psh margin at q={q}", margin, -cfg.tol("psh", 1e-12), required=False))
    return claims, results, []


def run_positivity(cfg: RunConfig):
    trials = int(cfg.params.get("trials", 64))
    tol = cfg.tol("margin", 1e-6)
    form_path = cfg.paths.get("form")
    if form_path:
        eta = ComplexForm.from_json(json.loads(Path(form_path).read_text()))
        weak = weak_positivity_test(eta, trials=trials, seed=cfg.seed)
        strong = strong_positivity_certificate(eta, seed=cfg.seed)
        contradiction = strong.positive and strong.grade == "exact" and weak.margin < -tol
        claims = [
            claim_flag(0, "strong certificate consistent with weak search", not contradiction),
            claim_ge(0, "weak margin", weak.margin, -cfg.tol("psh", 1e-9), required=False),
        ]
        return claims, {"weak": weak, "strong": strong}, []
    H = parse_matrix(_need(cfg, "matrix"))
    q = int(_need(cfg, "q"))
    eta = nu_wedge_omega_k(H, q - 1)
    # sampled search against the closed form it must reproduce
    weak = weak_positivity_test(eta, trials=trials, seed=cfg.seed, closed_form=False)
    strong = strong_positivity_certificate(eta)
    f = math.factorial(q - 1)
    claims = [
        claim_flag(0, "weak and strong verdicts agree", weak.positive == strong.positive),
        claim_le(0, "margin gap / (q-1)!", abs(weak.margin - strong.margin) / f, tol),
        claim_ge(0, "psh margin", strong.margin / f, -cfg.tol("psh", 1e-8), required=False),
    ]
    return claims, {"q": q, "weak": weak, "strong": strong, "psh_margin": psh_margin(H, q)}, []


def _input_field(cfg: RunConfig):
    path = cfg.paths.get("input")
    if path:
        return load_field(path)
    return None


def run_psh_verify(cfg: RunConfig):
    q = int(_need(cfg, "q"))
    field = _input_field(cfg)
    if field is None:
        dom = _grid(cfg, default_points=16, default_n=int(cfg.params.get("n", 2)))
        pot = parse_potential(_need(cfg, "potential"), dom.n)
        if pot.n != dom.n:
            raise ConfigError(f"potential lives on C^{pot.n} but the grid on C^{dom.n}")
        with np.errstate(divide="ignore", invalid="ignore"):
            field = pot.on_grid(dom)
    if not 1 <= q <= field.domain.n:
        raise ConfigError(f"q={q} out of range 1..{field.domain.n}")
    eps = float(cfg.params.get("eps", 0.0))
    margin = F.psh_margin_field(field, q)
    vals = margin.values[margin.effective_mask()]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise ConfigError("no finite interior margin values")
    mn = float(vals.min())
    target = q * eps - cfg.tol("psh", 1e-8)
    claims = [claim_ge(0, "min margin field" + (f" (needs >= q eps = {q * eps})" if eps else ""), mn, target)]
    results = {"q": q, "eps": eps, "margin_min": mn, "margin_max": float(vals.max()),
               "grid": field.domain.to_json()}
    planes = int(cfg.params.get("planes", 0))
    if planes:
        rep = F.plane_subharmonicity(field, q, planes, seed=cfg.seed)
        results["planes"] = rep
        # restricted traces can never undercut the eigenvalue margin
        claims.append(claim_ge(0, "plane minimum minus margin minimum", rep.refined_min - mn, -1e-6))
    return claims, results, []


def run_heat(cfg: RunConfig):
    q = int(_need(cfg, "q"))
    t_list = _float_list(_need(cfg, "t"))
    if any(t < 0 for t in t_list):
        raise ConfigError("t must be >= 0")
    field = _input_field(cfg)
    canonical = cfg.params.get("canonical")
    if field is None:
        if canonical is None:
            raise ConfigError("heat needs --input or --canonical")
        fields_, K = canonical_potentials(points=int((cfg.grid or {}).get("points", 32)))
        if canonical not in fields_:
            raise ConfigError(f"unknown canonical potential {canonical!r}; choose from {sorted(fields_)}")
        field = fields_[canonical]
    else:
        K = None
    if field.domain.topology != "torus":
        raise ConfigError("heat flow needs a torus field")
    if cfg.params.get("cube") is not None:
        K = cube_mask(field.domain, float(cfg.params["cube"]))
    eps = cfg.params.get("eps")
    eps = None if eps is None else float(eps)
    rep = smoothing_preserves_psh(field, q, t_list, K=K, eps=eps)
    tol = cfg.tol("psh", 1e-8)
    claims = [claim_ge(0, f"min margin on K at t={t!r}", m, -tol) for t, m in zip(rep.t_list, rep.min_margins)]
    claims.append(claim_flag(0, "some tested t keeps psh", rep.succeeded))
    if eps is not None:
        claims.append(claim_ge(0, "margin at smallest t (needs >= q eps / 2)", rep.min_margins[0], q * eps / 2))
    out = cfg.paths.get("output")
    if out:
        save_field(out, heat_smooth(field, rep.t_list[0]))
    rows = [[t, m] for t, m in zip(rep.t_list, rep.min_margins)]
    return claims, {"smoothing": rep}, [("csv", ["t", "min_margin"], rows)]


CONSTRUCT_DEFAULTS = {
    "torus-embed": {"phi": {"kind": "quadratic", "H": [[0.25, 0], [0, 0.25]]}, "R": 2.0, "eps": 0.1, "C": 1.0,
                    "points": 17},
    "product": {"a": 0.5, "q": 2, "z_points": 9, "z_half_width": 1.0, "b_points": 17, "b_radius": 4.0},
    "glue": {"points": 17, "r_in": 0.4, "r_out": 0.8, "q": 2, "phi1_diag": [4.0, -2.0], "eps": None},
    "exhaust": {"points": 21, "lam": 1.0, "A": 0.0, "B": 1.0, "eps": 0.3, "q": 2},
}


def _construct_torus(p, cfg):
    phi = parse_potential(p["phi"], 2)
    te = NB.torus_embedding_potential(phi, float(p["R"]), float(p["eps"]), float(p["C"]), points=int(p["points"]))
    c = te.checks
    claims = [
        claim_flag(0, "identity on unit ball", c["identity_on_unit_ball"]),
        claim_flag(0, "flat values exact", c["flat_values_exact"] and c["flat_cells"] > 0),
        claim_flag(0, "flat Hessian exact", c["flat_hessian_exact"]),
        claim_le(0, "flat FD Hessian error", c["flat_fd_error"], cfg.tol("fd", 1e-8)),
        claim_flag(0, "dd^c positive definite", c["positive_definite"]),
    ]
    return claims, {"A": te.A, "checks": c}, te.potential.on_grid(te.domain)


def _construct_product(p, cfg):
    q = int(p["q"])
    zdom = F.GridDomain.cube(1, int(p["z_points"]), float(p["z_half_width"]))
    bdom = F.GridDomain.cube(1, int(p["b_points"]), float(p["b_radius"]))
    theta = F.ScalarField(zdom, 1.0 + float(p["a"]) * np.sin(zdom.points()[..., 0]))
    ratios = NB.theta_ratios(theta)
    res = NB.local_product_potential(theta, ratios["C1"], ratios["C2"], bdom, q)
    claims = [
        claim_le(0, "expansion residual", res.expansion_residual, cfg.tol("expansion", 1e-8)),
        claim_ge(0, "r_max", res.r_max, 0.0),
    ]
    return claims, {"r_max": res.r_max, "ratios": ratios, "expansion_residual": res.expansion_residual}, res.field


def _construct_glue(p, cfg):
    q = int(p["q"])
    dom = F.GridDomain.cube(2, int(p["points"]), 1.0)
    phi0 = RadialPower(2, 3, offset=0.04).on_grid(dom)
    phi1 = Quadratic(np.diag(np.asarray(p["phi1_diag"], dtype=float))).on_grid(dom)
    xi = NB.smooth_cutoff(dom, float(p["r_in"]), float(p["r_out"]))
    X = NB.overlap_region(xi)
    eps = p["eps"]
    if eps is None:
        eps = float(F.psh_margin_field(phi0, q).values[X].min()) / (2 * q) if X.any() else 1.0
    g = NB.glue_constant(phi0, phi1, xi, float(eps), q)
    # half the constant is reported only: it may or may not break the margin
    half = F.psh_margin_field(F.ScalarField(dom, 0.5 * g.C * phi0.values + xi.values * phi1.values), q)
    claims = [
        claim_ge(0, "glued min margin", g.min_margin, -cfg.tol("psh", 1e-8)),
        claim_ge(0, "min margin at C/2", float(half.values.min()), -cfg.tol("psh", 1e-8), required=False),
    ]
    return claims, {"eps": eps, "glue": g}, g.glued


def _construct_exhaust(p, cfg):
    q = int(p["q"])
    dom = F.GridDomain.cube(2, int(p["points"]), 1.0)
    ex = NB.exhaustion_potential(Quadratic(2 * np.eye(2)).on_grid(dom), NB.Subvariety(2), float(p["lam"]),
                                 float(p["A"]), float(p["B"]), float(p["eps"]), q)
    c = ex.checks
    claims = [
        claim_flag(0, "psi = phi - B near Z", c["near_exact"]),
        claim_flag(0, "psi = chi_1 - A far from Z", c["far_exact"]),
        claim_flag(0, "psi <= 0 on W", c["nonpositive_on_W"]),
        claim_flag(0, "sublevels inside W", all(c["sublevels_inside_W"].values())),
        claim_ge(0, "min margin off the pole", c["min_margin"], -cfg.tol("psh", 1e-8)),
    ]
    masks = {k: int(v.sum()) for k, v in ex.masks.items()}
    return claims, {"C_phi": ex.C_phi, "checks": c, "mask_cells": masks}, ex.psi


CONSTRUCTIONS = {"torus-embed": _construct_torus, "product": _construct_product,
                 "glue": _construct_glue, "exhaust": _construct_exhaust}


def run_construct(cfg: RunConfig):
    kind = _need(cfg, "kind")
    if kind not in CONSTRUCTIONS:
        raise ConfigError(f"unknown construction {kind!r}; choose from {sorted(CONSTRUCTIONS)}")
    p = dict(CONSTRUCT_DEFAULTS[kind])
    if cfg.paths.get("params"):
        p.update(json.loads(Path(cfg.paths["params"]).read_text()))
    p.update(cfg.params.get("overrides", {}))
    unknown = set(p) - set(CONSTRUCT_DEFAULTS[kind])
    if unknown:
        raise ConfigError(f"unknown {kind} parameters {sorted(unknown)}")
    claims, results, field = CONSTRUCTIONS[kind](p, cfg)
    results["params"] = p
    if cfg.paths.get("output"):
        save_field(cfg.paths["output"], field)
    return claims, results, []


def run_sibony(cfg: RunConfig):
    beta = float(cfg.params.get("beta", 0.5))
    p = int(cfg.params.get("p", 1))
    n = int(cfg.params.get("n", 2))
    N_list = _int_list(cfg.params.get("N", "2,4,8,16"))
    eps = float(cfg.params.get("eps", 0.1))
    if not 0 < beta < 1:
        raise ConfigError("beta must lie in (0, 1)")
    if len(N_list) < 2:
        raise ConfigError("need at least two values of N")
    tol = cfg.tol("stabilization", 1e-3)
    rep = sibony_integral(RadialPower(n, beta), LogDistance(n), N_list, eps, p, tol=tol)
    I = rep.I
    claims = [
        claim_le(0, "|I_last - I_prev| / |I_last|", abs(I[-1] - I[-2]) / abs(I[-1]), tol),
        claim_flag(0, "I_N monotone within 2x quadrature error", rep.monotone_ok),
        claim_flag(0, "exclusion sweep differences decrease", rep.cauchy_ok),
        claim_le(0, "max |I_N - flux| / |flux|", max(abs(a - b) / abs(b) for a, b in zip(I, rep.flux)),
                 cfg.tol("flux", 0.05)),
    ]
    rows = [[r["N"], r["I_N"], r["stabilization_index"]] for r in rep.rows]
    return claims, {"sibony": rep}, [("csv", ["N", "I_N", "stabilization_index"], rows)]


def run_suite(cfg: RunConfig):
    from .acceptance import run_battery

    only = cfg.params.get("only")
    only = None if only in (None, "") else set(_int_list(only))
    results = run_battery(seed=cfg.seed, only=only, log=lambda line: print(line, file=sys.stderr, flush=True))
    claims = [c for r in results for c in r.claims]
    summary = {"criteria": [{"number": r.number, "title": r.title, "passed": r.passed, "seconds": r.seconds,
                             "line": r.line()} for r in results]}
    rows = list(claims_rows(claims))
    return claims, summary, [("csv", CLAIM_HEADER, rows)]


HANDLERS = {"eig": run_eig, "positivity": run_positivity, "psh-verify": run_psh_verify, "heat": run_heat,
            "construct": run_construct, "sibony": run_sibony, "suite": run_suite}


def _sidecar_path(cfg: RunConfig, name: str):
    if cfg.paths.get(name):
        return Path(cfg.paths[name])
    if cfg.paths.get("report"):
        return Path(cfg.paths["report"]).with_suffix(".csv")
    return None


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute one subcommand; returns the exit code and the report (already written)."""
    try:
        claims, results, sidecars = HANDLERS[cfg.subcommand](cfg)
    except (ConfigError, NB.ConstructionError, SibonyError, FieldFormatError, FormError, F.StencilError) as exc:
        raise ConfigError(str(exc)) from exc
    except (OSError, ValueError) as exc:
        # module preconditions (q out of range, non-Hermitian input, ...) are input errors
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    report = build_report(cfg, claims, results)
    for name, header, rows in sidecars:
        path = _sidecar_path(cfg, name)
        if path is not None:
            write_csv(path, header, rows)
            report.setdefault("sidecars", {})[name] = str(path)
    if cfg.paths.get("report"):
        write_json(cfg.paths["report"], report)
    else:
        print(json.dumps(report, indent=2))
    return (EXIT_OK if all_passed(claims) else EXIT_FAIL), report


# -- argument parsing --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kpsh", description="omega^q-psh numerics: checks and reports")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig whose entries override the flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--report", "--out", dest="report", help="JSON report path (stdout when omitted)")
    common.add_argument("--csv", help="CSV sidecar path (default: report path with .csv)")
    common.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE",
                        help="override a named tolerance, repeatable")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("eig", parents=[common], help="spectrum and psh margin of a Hermitian matrix")
    s.add_argument("--matrix", help="JSON matrix")
    s.add_argument("--q", type=int)

    s = sub.add_parser("positivity", parents=[common], help="weak vs strong positivity of nu ^ omega^(q-1)")
    s.add_argument("--matrix", help="JSON Hermitian matrix nu")
    s.add_argument("--q", type=int)
    s.add_argument("--form", help="JSON file with a general (p,p)-form instead of --matrix")
    s.add_argument("--trials", type=int, default=64)

    s = sub.add_parser("psh-verify", parents=[common], help="margin field of a potential on a grid")
    s.add_argument("--potential", help="named potential, inline JSON or .json file")
    s.add_argument("--input", help="field file (.bin or .csv) instead of --potential")
    s.add_argument("--q", type=int)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--grid", type=int, default=16, help="points per real axis")
    s.add_argument("--half-width", type=float, default=1.0)
    s.add_argument("--eps", type=float, default=0.0, help="require strict margin eps")
    s.add_argument("--planes", type=int, default=0, help="also sample this many complex q-planes")

    s = sub.add_parser("heat", parents=[common], help="heat-flow smoothing on the torus")
    s.add_argument("--input", help="torus field file")
    s.add_argument("--canonical", help="built-in potential: bowl, twist or ridge")
    s.add_argument("--t", help="time or comma-separated list of times")
    s.add_argument("--q", type=int)
    s.add_argument("--eps", type=float)
    s.add_argument("--cube", type=float, help="restrict K to |x_a| <= this half width")
    s.add_argument("--grid", type=int, help="points per axis for --canonical")
    s.add_argument("--output", help="write the field smoothed at the smallest t")

    s = sub.add_parser("construct", parents=[common], help="neighbourhood potential constructions")
    s.add_argument("kind", choices=sorted(CONSTRUCTIONS))
    s.add_argument("--params", help="JSON parameter file")
    s.add_argument("--output", help="write the constructed field")

    s = sub.add_parser("sibony", parents=[common], help="truncated-pole integrals")
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--p", type=int, default=1)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--N", default="2,4,8,16")
    s.add_argument("--eps", type=float, default=0.1)

    s = sub.add_parser("suite", parents=[common], help="full acceptance battery")
    s.add_argument("--only", help="comma-separated criterion numbers")
    return ap


def _parse_tols(items) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol expects KEY=VALUE, got {item!r}")
        try:
            out[key] = float(val)
        except ValueError:
            raise ConfigError(f"--tol {key}: {val!r} is not a number") from None
    return out


_PATH_KEYS = ("report", "csv", "input", "output", "params", "form")
_GRID_KEYS = {"grid": "points", "half_width": "half_width", "n": "n"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    args = {k: v for k, v in vars(ns).items() if v is not None}
    sub = args.pop("subcommand")
    seed = args.pop("seed", 0)
    tols = _parse_tols(args.pop("tol", []))
    config_path = args.pop("config", None)
    paths = {k: args.pop(k) for k in _PATH_KEYS if k in args}
    grid = None
    if sub == "psh-verify":
        grid = {dst: args.pop(src) for src, dst in _GRID_KEYS.items() if src in args}
        args["n"] = grid.get("n", 2)
    elif sub == "heat" and "grid" in args:
        grid = {"points": args.pop("grid")}
    data = {"subcommand": sub, "seed": seed, "tolerances": tols, "grid": grid, "paths": paths, "params": args}
    if config_path:
        try:
            override = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(override, dict):
            raise ConfigError("config file must hold a JSON object")
        if override.get("subcommand", sub) != sub:
            raise ConfigError(f"config is for {override['subcommand']!r}, not {sub!r}")
        for key, val in override.items():
            if isinstance(val, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **val}
            else:
                data[key] = val
    return RunConfig.from_json(data)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        threads_setting()
        cfg = config_from_args(ns)
        code, report = run(cfg)
    except ConfigError as exc:
        print(f"kpsh: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = "passed" if code == EXIT_OK else "FAILED"
    print(f"kpsh {cfg.subcommand}: {status}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
