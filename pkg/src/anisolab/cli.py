"""Command-line front end: wulffgen / verify / stability / report.

Exit codes: 0 all checks passed, 1 numerical tolerance failure or route
disagreement, 2 invalid input, 3 theorem hypotheses violated (exploratory
output still written).  Reports embed the config hash, resolution and tool
version; worker count never enters a report, so reruns with different
--workers produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import anisotropy as aniso
from . import functionals as func
from . import stability as stab
from .curvalg import (
    curvature_fields,
    discriminant_p,
    make_curvature_point,
    maclaurin_check,
    newton_eps,
    newton_system,
    sigma_eps,
    trace_checks,
)
from .errors import AnisolabError, ConditioningError, ConsistencyError, InputDomainError
from .geometry import build_parametric, integrate, make_variation
from .serialize import canonical_json, config_hash, write_field_csv, write_off, write_report

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INVALID = 2
EXIT_HYPOTHESIS = 3

TOP_LEVEL_KEYS = {"surface", "anisotropy", "problem", "suites", "tolerances", "seed"}
TOLERANCE_KEYS = {
    "minkowski_rel",
    "ratio_min",
    "lemma26_max",
    "firstvar_rel",
    "firstvar_abs",
    "volume_gap",
    "traces_tol",
    "jacobi_rel",
    "jacobi_abs",
    "beta_rel",
}
DEFAULT_TOLERANCES = {
    "minkowski_rel": 1e-5,
    "ratio_min": 3.5,
    "lemma26_max": 1e-4,
    "firstvar_rel": 1e-4,
    "firstvar_abs": 1e-6,
    "volume_gap": 1e-6,
    "traces_tol": 1e-8,
    "jacobi_rel": 1e-3,
    "jacobi_abs": 1e-4,
    "beta_rel": 1e-3,
}
KNOWN_SUITES = ("convexity", "traces", "maclaurin", "discriminant", "minkowski", "lemma26", "firstvar", "jacobi")


def load_config(path):
    import json

    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise InputDomainError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputDomainError("config must be a JSON object")
    unknown = set(cfg) - TOP_LEVEL_KEYS
    if unknown:
        raise InputDomainError(f"unknown config keys {sorted(unknown)}")
    tols = cfg.get("tolerances", {})
    bad = set(tols) - TOLERANCE_KEYS
    if bad:
        raise InputDomainError(f"unknown tolerance keys {sorted(bad)}")
    return cfg


def _tolerances(cfg, tol_scale):
    out = dict(DEFAULT_TOLERANCES)
    out.update(cfg.get("tolerances", {}))
    for key in out:
        if key != "ratio_min":
            out[key] *= tol_scale
    return out


def _surface(cfg, model, resolution=None):
    spec = dict(cfg.get("surface", {"builder": "sphere"}))
    if resolution is not None:
        spec["resolution"] = resolution
    return build_parametric(spec, model=model), spec


def _model(cfg):
    return aniso.from_config(cfg.get("anisotropy", {"kind": "isotropic"}))


def _envelope(cfg, args, results):
    return {
        "tool": "anisolab",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "resolution": args.resolution or cfg.get("surface", {}).get("resolution", 64),
        "results": results,
    }


def _dim_from_cfg(cfg):
    spec = cfg.get("surface", {})
    if spec.get("builder") == "ellipsoid":
        return len(spec.get("semi_axes", [1, 1, 1])) - 1
    return spec.get("dimension", 2)


# ---------------------------------------------------------------------------
# wulffgen
# ---------------------------------------------------------------------------


def cmd_wulffgen(args):
    cfg = load_config(args.config)
    model = _model(cfg)
    n = _dim_from_cfg(cfg)
    resolution = args.resolution or cfg.get("surface", {}).get("resolution", 64)
    scan = aniso.convexity_scan(model, resolution=resolution, dim=n + 1)
    print(
        f"convexity scan: min eigenvalue {scan.min_eigenvalue:.6e} at "
        f"{np.array2string(scan.argmin_point, precision=5)} "
        f"({'accepted' if scan.accepted else 'REJECTED'})"
    )
    if not scan.accepted:
        return EXIT_INVALID

    out = Path(args.out or ".")
    pts = aniso.sphere_grid(n + 1, resolution)
    boundary = aniso.cahn_hoffman(model, pts)
    csv_path = out / "wulff_boundary.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(f"z{k}" for k in range(n + 1))
    np.savetxt(csv_path, boundary, delimiter=",", header=header, comments="")
    print(f"wrote {csv_path} ({boundary.shape[0]} samples)")
    if n == 2:
        from .geometry import build_wulff

        imm = build_wulff(model, scale=cfg.get("surface", {}).get("scale", 1.0), n=2, resolution=resolution)
        off_path = write_off(out / "wulff_boundary.off", imm)
        print(f"wrote {off_path}")
    report = _envelope(cfg, args, {
        "min_eigenvalue": scan.min_eigenvalue,
        "argmin_point": [float(v) for v in scan.argmin_point],
        "accepted": scan.accepted,
    })
    write_report(out / "wulffgen_report.json", report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------


def _suite_convexity(cfg, args, tols, rng):
    model = _model(cfg)
    n = _dim_from_cfg(cfg)
    resolution = args.resolution or 64
    scan = aniso.convexity_scan(model, resolution=resolution, dim=n + 1)
    return {
        "min_eigenvalue": scan.min_eigenvalue,
        "accepted": scan.accepted,
        "passed": scan.accepted,
    }


def _suite_traces(cfg, args, tols, rng):
    n = args.n or 4
    samples = args.samples or 200
    tol = tols["traces_tol"]
    worst = {"sigma": 0.0, "newton": 0.0, "traces": 0.0, "t_sym": 0.0, "pin": 0.0}
    for _ in range(samples):
        q = rng.normal(size=(n, n))
        a_f = q @ q.T + n * np.eye(n)
        s = rng.normal(size=(n, n))
        s = 0.5 * (s + s.T)
        point = make_curvature_point(a_f, s, cross_check=False)
        sig_scale = max(1.0, float(np.max(np.abs(point.sigma))))
        for r in range(n + 1):
            worst["sigma"] = max(
                worst["sigma"], abs(sigma_eps(point.s_f, r) - point.sigma[r]) / sig_scale
            )
        if n <= 5:
            for r in range(n):
                worst["newton"] = max(
                    worst["newton"],
                    float(np.max(np.abs(newton_eps(point.s_f, r) - point.p[r]))) / sig_scale,
                )
        worst["traces"] = max(worst["traces"], float(np.max(trace_checks(point))) / sig_scale)
        for t in point.t:
            worst["t_sym"] = max(worst["t_sym"], float(np.max(np.abs(t - t.T))) / sig_scale)
        from math import comb

        for j in range(n):
            pin = abs((j + 1) * point.sigma[j + 1] - (j + 1) * comb(n, j + 1) * point.h[j + 1])
            worst["pin"] = max(worst["pin"], pin / sig_scale)
    passed = all(v <= tol for v in worst.values())
    return {"n": n, "samples": samples, "worst": worst, "tolerance": tol, "passed": passed}


def _sample_cone(rng, n, r, count):
    """kappa samples in the positivity cone e_1..e_{r+1} > 0 (vectorized rejection)."""
    out = []
    need = count
    while need > 0:
        kappa = rng.normal(loc=0.6, scale=1.0, size=(4 * need, n))
        es = np.ones((kappa.shape[0], n + 1))
        es[:, 1:] = 0.0
        for i in range(n):
            es[:, 1 : n + 1] = es[:, 1 : n + 1] + kappa[:, i : i + 1] * es[:, 0:n]
        keep = np.all(es[:, 1 : r + 2] > 0.0, axis=1)
        got = kappa[keep][:need]
        if got.size:
            out.append(got)
            need -= got.shape[0]
    return np.concatenate(out, axis=0)


def _elementary(kappa):
    m, n = kappa.shape
    es = np.zeros((m, n + 1))
    es[:, 0] = 1.0
    for i in range(n):
        es[:, 1 : n + 1] = es[:, 1 : n + 1] + kappa[:, i : i + 1] * es[:, 0:n]
    return es


def _suite_maclaurin(cfg, args, tols, rng):
    samples = args.samples or 20000
    n = args.n or 4
    viol = 0.0
    checked = 0
    for r in range(1, n - 1 + 1):
        kappa = _sample_cone(rng, n, r, samples // max(1, n - 1))
        es = _elementary(kappa)
        from math import comb

        h = es / np.array([comb(n, k) for k in range(n + 1)])
        h = np.concatenate([h, np.zeros((h.shape[0], 1))], axis=1)
        for j in range(0, r + 1):
            gaps = h[:, 1] * h[:, j + 1] - h[:, j + 2]
            viol = min(viol, float(np.min(gaps))) if gaps.size else viol
            checked += gaps.size
    passed = viol >= -1e-10
    return {"n": n, "checked": checked, "worst_gap": viol, "passed": passed}


def _suite_discriminant(cfg, args, tols, rng):
    samples = args.samples or 20000
    n = args.n or 4
    worst_delta = -np.inf
    worst_pmin = np.inf
    for r in range(1, n - 1 + 1):
        kappa = _sample_cone(rng, n, r, samples // max(1, n - 1))
        es = _elementary(kappa)
        from math import comb

        h = es / np.array([comb(n, k) for k in range(n + 1)])
        h = np.concatenate([h, np.zeros((h.shape[0], 1))], axis=1)
        beta = rng.normal(size=h.shape[0])
        f_nu = rng.uniform(0.5, 2.0, size=h.shape[0])
        for j in range(0, r + 1 - 1):
            delta = 4 * beta**2 * f_nu**2 * h[:, j + 1] * (h[:, j + 1] - h[:, 1] * h[:, j])
            scale = 4 * beta**2 * f_nu**2 * h[:, j + 1] * np.abs(h[:, 1] * h[:, j])
            worst_delta = max(worst_delta, float(np.max(delta / np.maximum(scale, 1e-30))))
            zs = np.linspace(-3, 3, 41)
            for k in rng.choice(h.shape[0], size=min(50, h.shape[0]), replace=False):
                rep = discriminant_p(j, f_nu[k], beta[k], h[k])
                worst_pmin = min(worst_pmin, rep.grid_min())
    passed = worst_delta <= 1e-10 and worst_pmin >= -1e-10
    return {
        "n": n,
        "worst_delta_relative": worst_delta,
        "worst_poly_min": worst_pmin,
        "passed": passed,
    }


def _suite_minkowski(cfg, args, tols, rng):
    model = _model(cfg)
    res = args.resolution or cfg.get("surface", {}).get("resolution", 64)
    records = []
    passed = True
    for factor in (1, 2):
        imm, spec = _surface(cfg, model, resolution=res * factor)
        for r in range(imm.n):
            residual, scale = func.minkowski_relative(imm, model, r)
            records.append({"resolution": res * factor, "r": r, "relative_residual": residual / scale})
    for r in range(max(rec["r"] for rec in records) + 1):
        base = next(rec for rec in records if rec["r"] == r and rec["resolution"] == res)
        fine = next(rec for rec in records if rec["r"] == r and rec["resolution"] == 2 * res)
        ok_mag = abs(base["relative_residual"]) <= tols["minkowski_rel"]
        ratio = abs(base["relative_residual"]) / max(abs(fine["relative_residual"]), 1e-16)
        ok_ratio = ratio >= tols["ratio_min"] or abs(fine["relative_residual"]) < 1e-12
        base["ratio"] = ratio
        passed = passed and ok_mag and ok_ratio
    return {"records": records, "passed": passed}


def _suite_lemma26(cfg, args, tols, rng):
    model = _model(cfg)
    res = args.resolution or cfg.get("surface", {}).get("resolution", 64)
    records = []
    passed = True
    for factor in (1, 2):
        imm, _ = _surface(cfg, model, resolution=res * factor)
        n = imm.n
        prob = stab.StabilityProblem(imm, model, 0, n - 2, np.ones(n - 1))
        for j in range(0, n - 1):
            lem = stab.lemma26_residuals(prob, j)
            records.append(
                {"resolution": res * factor, "j": j, "max1": lem.max1, "max2": lem.max2}
            )
    for j in range(max(rec["j"] for rec in records) + 1):
        base = next(r for r in records if r["j"] == j and r["resolution"] == res)
        fine = next(r for r in records if r["j"] == j and r["resolution"] == 2 * res)
        worst = max(base["max1"], base["max2"])
        fine_worst = max(fine["max1"], fine["max2"])
        ratio = worst / max(fine_worst, 1e-16)
        base["ratio"] = ratio
        passed = passed and worst <= tols["lemma26_max"] and (
            ratio >= tols["ratio_min"] or fine_worst < 1e-9
        )
    return {"records": records, "passed": passed}


def _smooth_speeds(imm, rng, count):
    x = imm.positions
    fields = []
    for _ in range(count):
        c = rng.normal(size=x.shape[1])
        q = rng.normal(size=(x.shape[1], x.shape[1]))
        fields.append(x @ c + 0.2 * np.einsum("mi,ij,mj->m", x, q + q.T, x))
    return fields


def _suite_firstvar(cfg, args, tols, rng):
    model = _model(cfg)
    imm, _ = _surface(cfg, model, resolution=args.resolution)
    records = []
    passed = True
    for speed in _smooth_speeds(imm, rng, 3):
        fam = make_variation(imm, speed)
        for r in range(imm.n):
            chk = func.first_variation_check(fam, model, r)
            ok = chk.gap <= max(tols["firstvar_rel"] * abs(chk.formula_value), tols["firstvar_abs"])
            records.append({"r": r, "gap": chk.gap, "value": chk.formula_value, "passed": ok})
            passed = passed and ok
        vol = func.volume_derivative_check(fam)
        ok = vol.gap <= tols["volume_gap"] * max(1.0, abs(vol.expected))
        records.append({"volume_gap": vol.gap, "passed": ok})
        passed = passed and ok
    return {"records": records, "passed": passed}


def _suite_jacobi(cfg, args, tols, rng):
    model = _model(cfg)
    imm, _ = _surface(cfg, model, resolution=args.resolution)
    n = imm.n
    prob_spec = cfg.get("problem", {"r": 0, "s": 0, "a": [1.0]})
    prob = stab.StabilityProblem(
        imm, model, prob_spec.get("r", 0), prob_spec.get("s", 0), prob_spec.get("a", [1.0])
    )
    records = []
    passed = True
    for speed in _smooth_speeds(imm, rng, 3):
        f = speed - integrate(imm, speed) / imm.area()
        op = stab.jacobi_qform_operator(prob, f)
        fd = stab.jacobi_qform_fd(prob, f)
        norm2 = integrate(imm, f**2)
        gap = abs(op.value - fd.value)
        ok = gap <= max(tols["jacobi_rel"] * abs(fd.value), tols["jacobi_abs"] * norm2)
        records.append({"op": op.value, "fd": fd.value, "gap": gap, "passed": ok})
        passed = passed and ok
    return {"records": records, "passed": passed}


SUITE_RUNNERS = {
    "convexity": _suite_convexity,
    "traces": _suite_traces,
    "maclaurin": _suite_maclaurin,
    "discriminant": _suite_discriminant,
    "minkowski": _suite_minkowski,
    "lemma26": _suite_lemma26,
    "firstvar": _suite_firstvar,
    "jacobi": _suite_jacobi,
}


def cmd_verify(args):
    cfg = load_config(args.config)
    tols = _tolerances(cfg, args.tol_scale)
    suites = args.suite or cfg.get("suites") or ["minkowski"]
    unknown = set(suites) - set(KNOWN_SUITES)
    if unknown:
        raise InputDomainError(f"unknown suites {sorted(unknown)}; known: {KNOWN_SUITES}")
    rng = np.random.default_rng(cfg.get("seed", 2024))
    results = {}
    all_ok = True
    for name in suites:
        results[name] = SUITE_RUNNERS[name](cfg, args, tols, rng)
        all_ok = all_ok and results[name]["passed"]
        print(f"suite {name}: {'PASS' if results[name]['passed'] else 'FAIL'}")
    report = _envelope(cfg, args, results)
    out = Path(args.out or ".") / "verify_report.json"
    write_report(out, report)
    print(f"wrote {out}")
    return EXIT_OK if all_ok else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------


def cmd_stability(args):
    cfg = load_config(args.config)
    model = _model(cfg)
    imm, spec = _surface(cfg, model, resolution=args.resolution)
    prob_spec = dict(cfg.get("problem", {}))
    unknown = set(prob_spec) - {"r", "s", "a"}
    if unknown:
        raise InputDomainError(f"unknown problem keys {sorted(unknown)}")
    r = int(prob_spec.get("r", 0)) if args.r is None else args.r
    s = int(prob_spec.get("s", r)) if args.s is None else args.s
    a = prob_spec.get("a", [1.0] * (s - r + 1)) if args.a is None else args.a
    tols = {"beta_rel": _tolerances(cfg, args.tol_scale)["beta_rel"]}
    problem = stab.StabilityProblem(imm, model, r, s, np.asarray(a, dtype=float), workers=args.workers)
    report = stab.theorem_pipeline(problem, tols=tols)
    payload = _envelope(cfg, args, report.to_dict())
    out_dir = Path(args.out or ".")
    out = out_dir / "stability_report.json"
    write_report(out, payload)
    if args.dump_fields:
        flds = curvature_fields(imm, model)
        support = np.einsum("md,md->m", imm.positions, imm.normals)
        write_field_csv(
            out_dir / "stability_fields.csv",
            imm,
            {
                "support": support,
                "F_nu": flds.f_nu,
                "H1": flds.h[:, 1],
                f"H{s + 1}": flds.h[:, s + 1],
                "beta_field": stab.beta_field(problem),
            },
        )
    print(f"verdict: {report.verdict}")
    print(f"wrote {out}")
    if report.verdict in ("wulff-equality", "stable-consistent"):
        return EXIT_OK
    if report.verdict == "hypothesis-violated":
        return EXIT_HYPOTHESIS
    return EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args):
    import json

    ok = True
    for path in args.files:
        payload = json.loads(Path(path).read_text())
        results = payload.get("results", {})
        verdict = results.get("verdict")
        if verdict is not None:
            good = verdict in ("wulff-equality", "stable-consistent")
            print(f"{path}: verdict={verdict} ({'ok' if good else 'FAIL'})")
            ok = ok and good
        else:
            flags = [
                (name, rec.get("passed"))
                for name, rec in results.items()
                if isinstance(rec, dict) and "passed" in rec
            ]
            for name, flag in flags:
                print(f"{path}: {name} {'PASS' if flag else 'FAIL'}")
                ok = ok and bool(flag)
    return EXIT_OK if ok else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="anisolab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--tol-scale", dest="tol_scale", type=float, default=1.0)

    p = sub.add_parser("wulffgen", help="export Wulff boundary samples and scan convexity")
    common(p)
    p.set_defaults(fn=cmd_wulffgen)

    p = sub.add_parser("verify", help="run identity/inequality verification suites")
    common(p)
    p.add_argument("--suite", action="append", choices=KNOWN_SUITES)
    p.add_argument("--n", type=int, default=None, help="algebra dimension for random suites")
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("stability", help="run the equality-case stability pipeline")
    common(p)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--a", type=float, nargs="+", default=None)
    p.add_argument("--dump-fields", action="store_true")
    p.set_defaults(fn=cmd_stability)

    p = sub.add_parser("report", help="summarize saved JSON reports")
    p.add_argument("files", nargs="+")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.fn(args)
    except (InputDomainError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    except (ConsistencyError, ConditioningError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except AnisolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
