"""Command-line front end.

Subcommands load a metric spec, run one pipeline, write CSV/JSON reports
into the output directory, and summarize residuals against tolerances in
``summary.json`` (keys per check: name, max_residual, tol, pass).  Exit
status: 0 when every non-WARN check passes, 1 on check failure, 2 on
spec/config errors.

    confoliate curvature   --spec spec.json --out out/
    confoliate foliate     --spec spec.json --r 0.5 --r 1.0
    confoliate yamabe      --spec spec.json --max-steps 5000
    confoliate sigmak      --spec spec.json --k 1 --k 2 --r 0.5
    confoliate hyperboloid --d 0.5 --d 1 --d 2
    confoliate verify      --spec spec.json
    confoliate run         experiment.json

``run`` reads {"spec", "command", "params", "out", "format", "seed"} from
a JSON experiment file and dispatches accordingly.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import conformal, hyperboloid, normal_form, sigma_k, tensor_core
from .fields import TensorField
from .metric_spec import SpecError, load_spec, materialize, spec_from_dict

PASS, FAIL, WARN = "PASS", "FAIL", "WARN"


@dataclass
class CheckRow:
    name: str
    max_residual: float
    tol: float
    status: str
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status != FAIL


def check(name: str, value: float, tol: float, started: float,
          warn_only: bool = False) -> CheckRow:
    ok = value < tol
    status = PASS if ok else (WARN if warn_only else FAIL)
    return CheckRow(name, float(value), float(tol), status,
                    time.perf_counter() - started)


DEFAULT_TOLS = {
    "riemann_symmetry_analytic": 1e-9,
    "riemann_symmetry_fd": 1e-6,
    "ricci_trace": 1e-9,
    "schouten_round_sphere": 1e-6,
    "key_identity_analytic": 1e-10,
    "key_identity_fd": 1e-6,
    "horospherical": 1e-12,
    "weingarten_closed_form": 1e-10,
    "ambient_coefficients": 1e-15,
    "scalar_correspondence_analytic": 1e-10,
    "scalar_correspondence_fd": 1e-6,
    "mean_radii": 1e-10,
    "bulk_residual": 1e-5,
    "flow_residual": 1e-4,
    "pullback_vs_round": 1e-8,
    "pullback_vs_forms": 1e-8,
    "kappa_vs_coth": 1e-6,
    "lightcone_null": 1e-10,
    "foliation_functional": 1e-10,
    "newton_inequality": 0.0,
    "convergence_order_margin": 0.0,
}


def _tols(overrides) -> dict:
    tols = dict(DEFAULT_TOLS)
    for item in overrides or []:
        name, _, value = item.partition("=")
        if name not in tols:
            raise SpecError(f"unknown tolerance name {name!r}")
        tols[name] = float(value)
    return tols


class _Output:
    def __init__(self, out_dir: str, fmt: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        if fmt not in ("csv", "json"):
            raise SpecError(f"format must be csv or json, got {fmt!r}")
        self.fmt = fmt
        self.files: list[str] = []

    def table(self, name: str, header: list[str], rows) -> None:
        if self.fmt == "csv":
            path = self.dir / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)
        else:
            path = self.dir / f"{name}.json"
            payload = [dict(zip(header, row)) for row in rows]
            path.write_text(json.dumps(payload))
        self.files.append(str(path))

    def summary(self, command: str, seed: int, checks: list[CheckRow]) -> str:
        path = self.dir / "summary.json"
        payload = {
            "command": command,
            "seed": seed,
            "status": "pass" if all(c.passed for c in checks) else "fail",
            "checks": [
                {
                    "name": c.name,
                    "max_residual": c.max_residual,
                    "tol": c.tol,
                    "pass": c.status == PASS,
                    "status": c.status,
                    "wall_time": round(c.wall_time, 4),
                }
                for c in checks
            ],
            "outputs": self.files,
        }
        path.write_text(json.dumps(payload, indent=2))
        return str(path)


def _print_checks(checks: list[CheckRow]) -> None:
    for c in checks:
        print(f"[{c.status}] {c.name}: max residual {c.max_residual:.3e} "
              f"(tol {c.tol:.1e}, {c.wall_time:.2f}s)")


def _load(args) -> tuple:
    spec = load_spec(args.spec)
    chart, gamma = materialize(spec)
    return spec, chart, gamma


def _schouten_pipeline(gamma, derivatives: str):
    bundle = tensor_core.curvature_bundle(gamma, derivatives=derivatives)
    p = conformal.schouten(gamma, bundle)
    spectral = conformal.eigen_rel(gamma, p)
    return bundle, p, spectral


# ---------------------------------------------------------------------------
# subcommands

def cmd_curvature(args, tols, out: _Output) -> list[CheckRow]:
    spec, chart, gamma = _load(args)
    t0 = time.perf_counter()
    bundle, p, spectral = _schouten_pipeline(gamma, args.derivatives)
    mode = bundle.derivatives
    checks = []
    sym = tensor_core.riemann_symmetry_residuals(bundle)
    tol = tols[f"riemann_symmetry_{mode}"]
    checks.append(check("riemann_symmetries", max(sym.values()), tol, t0))
    t0 = time.perf_counter()
    checks.append(check("ricci_trace", tensor_core.ricci_trace_residual(bundle),
                        tols["ricci_trace"], t0))
    if spec.builtin_name == "round-sphere-stereographic":
        t0 = time.perf_counter()
        res = np.abs(p.data - 0.5 * gamma.data)
        worst = float(np.max(res.reshape(bundle.mask.shape + (-1,))[bundle.mask]))
        checks.append(check("schouten_round_sphere", worst,
                            tols["schouten_round_sphere"], t0))

    n = chart.n
    header = (["point-index"] + [f"x{a+1}" for a in range(n)] + ["R"]
              + [f"Ric_{i+1}{j+1}" for i in range(n) for j in range(i, n)]
              + [f"P_{i+1}{j+1}" for i in range(n) for j in range(i, n)]
              + [f"lambda_{i+1}" for i in range(n)])
    coords = [c.ravel() for c in chart.coords()]
    npts = coords[0].size
    ric = bundle.ricci.data.reshape(npts, n, n)
    pd = p.data.reshape(npts, n, n)
    lam = spectral.eigenvalues.reshape(npts, n)
    scal = bundle.scalar.data.ravel()
    rows = (
        [idx] + [f"{c[idx]:.9g}" for c in coords] + [f"{scal[idx]:.12g}"]
        + [f"{ric[idx, i, j]:.12g}" for i in range(n) for j in range(i, n)]
        + [f"{pd[idx, i, j]:.12g}" for i in range(n) for j in range(i, n)]
        + [f"{lam[idx, i]:.12g}" for i in range(n)]
        for idx in range(npts)
    )
    out.table("curvature_fields", header, rows)
    return checks


def _foliation_rows(exp, spectral, r_values, checks, tols, mode):
    chart = exp.chart
    n = chart.n
    rmax = exp.r_max()
    for r in r_values:
        t0 = time.perf_counter()
        if not 0.0 < r < rmax:
            checks.append(CheckRow(f"r={r:g}_in_range", float("inf"), rmax, WARN))
            continue
        geom = normal_form.level_set_geometry(exp, r)
        key = normal_form.key_identity_residual(exp, geom, spectral)
        checks.append(check(f"key_identity_r={r:g}", float(key.max()),
                            tols[f"key_identity_{mode}"], t0))
        t0 = time.perf_counter()
        _, horo = normal_form.horospherical_metric(geom)
        checks.append(check(f"horospherical_r={r:g}", horo,
                            tols["horospherical"], t0))
        t0 = time.perf_counter()
        closed = normal_form.kappa_closed_form(spectral, r)
        scale = np.maximum(1.0, np.abs(closed))
        wres = float(np.max(np.abs(closed - geom.kappa) / scale))
        checks.append(check(f"weingarten_closed_form_r={r:g}", wres,
                            tols["weingarten_closed_form"], t0))
        npts = int(np.prod(chart.shape))
        lam = spectral.eigenvalues.reshape(npts, n)
        kap = geom.kappa.reshape(npts, n)
        rad = normal_form.curvature_radii(geom).reshape(npts, n)
        keyr = key.reshape(npts, n)
        horof = np.max(
            np.abs(
                geom.first.data - 2 * geom.second.data + geom.third.data
                - 4.0 / (r * r) * exp.gamma.data
            ),
            axis=(-1, -2),
        ).reshape(npts)
        for idx in range(npts):
            for i in range(n):
                yield [f"{r:g}", idx, i + 1, f"{lam[idx, i]:.12g}",
                       f"{kap[idx, i]:.12g}", f"{rad[idx, i]:.12g}",
                       f"{keyr[idx, i]:.3e}", f"{horof[idx]:.3e}"]


def cmd_foliate(args, tols, out: _Output) -> list[CheckRow]:
    spec, chart, gamma = _load(args)
    bundle, p, spectral = _schouten_pipeline(gamma, args.derivatives)
    exp = normal_form.build_expansion(gamma, p)
    checks: list[CheckRow] = []
    r_values = args.r or [0.5, 1.0]
    header = ["r", "point-index", "i", "lambda_i", "kappa_i", "radius_i",
              "key_residual", "horo_residual"]
    rows = _foliation_rows(exp, spectral, r_values, checks, tols,
                           bundle.derivatives)
    out.table("foliation", header, rows)
    t0 = time.perf_counter()
    ambient = max(normal_form.ambient_expansion_check(exp))
    checks.append(check("ambient_coefficients", ambient,
                        tols["ambient_coefficients"], t0))
    return checks


def cmd_yamabe(args, tols, out: _Output) -> list[CheckRow]:
    spec, chart, gamma = _load(args)
    bundle = tensor_core.curvature_bundle(gamma, derivatives=args.derivatives)
    config = conformal.FlowConfig(max_steps=args.max_steps,
                                  dt_factor=args.dt_factor, tol=args.tol)
    t0 = time.perf_counter()
    phi, report = conformal.yamabe_flow(gamma, bundle, config)
    status = PASS if report.converged else (
        WARN if args.expect_nonconvergence else FAIL)
    checks = [CheckRow("flow_converged", report.residuals[-1], config.tol,
                       status, time.perf_counter() - t0)]
    out.table("flow_history", ["step", "residual", "mean_R"],
              ([k, f"{res:.6e}", f"{mean:.6e}"]
               for k, res, mean in report.history_rows()))
    return checks


def cmd_sigmak(args, tols, out: _Output) -> list[CheckRow]:
    spec, chart, gamma = _load(args)
    bundle, p, spectral = _schouten_pipeline(gamma, args.derivatives)
    exp = normal_form.build_expansion(gamma, p)
    n = chart.n
    ks = args.k or list(range(1, n + 1))
    r_values = args.r or [0.5]
    checks: list[CheckRow] = []
    rows = []
    npts = int(np.prod(chart.shape))
    lam_all = spectral.eigenvalues.reshape(npts, n)
    for r in r_values:
        geom = normal_form.level_set_geometry(exp, r)
        for k in ks:
            t0 = time.perf_counter()
            sig = sigma_k.sigma(lam_all, k)
            member = sigma_k.in_gamma_k(lam_all, k)
            func = sigma_k.foliation_functional(geom, k)
            fval = func.value.reshape(npts)
            gap = func.magnitude_gap.reshape(npts)
            sgn = func.sign.reshape(npts)
            for idx in range(npts):
                rows.append([f"{r:g}", k, idx, f"{sig[idx]:.12g}",
                             int(member[idx]), f"{fval[idx]:.12g}",
                             f"{abs(gap[idx]):.3e}", int(sgn[idx])])
            try:
                scale = sigma_k.normalize_sigma_k(gamma, spectral, k)
                lam_norm = spectral.eigenvalues / scale**2
                value = sigma_k.sigma(lam_norm, k)
                checks.append(check(
                    f"sigma{k}_normalized", float(np.max(np.abs(value - 1.0))),
                    tols["foliation_functional"], t0))
            except ValueError:
                checks.append(CheckRow(
                    f"sigma{k}_normalized", float("nan"),
                    tols["foliation_functional"], WARN))
    out.table("sigma_report",
              ["r", "k", "point-index", "sigma_k", "in_gamma_k", "F_k",
               "abs_residual", "sign"], rows)
    return checks


def cmd_hyperboloid(args, tols, out: _Output) -> list[CheckRow]:
    grid = hyperboloid.SphereGrid(args.grid, args.grid)
    checks: list[CheckRow] = []
    rows = []
    for d in args.d or [0.5, 1.0, 2.0]:
        t0 = time.perf_counter()
        imm = hyperboloid.geodesic_sphere(d, grid, orientation=args.orientation)
        psi = hyperboloid.lightcone_map(imm)
        null_defect = float(np.max(np.abs(hyperboloid.minkowski_dot(psi, psi))))
        checks.append(check(f"lightcone_null_d={d:g}", null_defect,
                            tols["lightcone_null"], t0))
        t0 = time.perf_counter()
        kappa = hyperboloid.principal_curvatures_ambient(imm)
        coth = 1.0 / np.tanh(d)
        expected = -coth if args.orientation == "outward" else coth
        checks.append(check(f"kappa_vs_coth_d={d:g}",
                            float(np.max(np.abs(kappa - expected))),
                            tols["kappa_vs_coth"], t0))
        t0 = time.perf_counter()
        pull = hyperboloid.horospherical_pullback(imm)
        r = 2.0 * np.exp(-d)
        target = (4.0 / (r * r)) * grid.round_metric()
        checks.append(check(f"pullback_vs_round_d={d:g}",
                            float(np.max(np.abs(pull.metric - target))),
                            tols["pullback_vs_round"], t0))
        t0 = time.perf_counter()
        first, second, third = hyperboloid.fundamental_forms(imm)
        combo = first - 2.0 * second + third
        checks.append(check(f"pullback_vs_forms_d={d:g}",
                            float(np.max(np.abs(pull.metric - combo))),
                            tols["pullback_vs_forms"], t0))
        theta = np.broadcast_to(grid.theta[:, None], grid.shape).ravel()
        phi_ang = np.broadcast_to(grid.phi[None, :], grid.shape).ravel()
        npts = theta.size
        phi_flat = imm.phi.reshape(npts, 4)
        eta_flat = imm.eta.reshape(npts, 4)
        psi_flat = psi.reshape(npts, 4)
        kap_flat = kappa.reshape(npts, 2)
        for idx in range(npts):
            rows.append(
                [f"{d:g}", f"{theta[idx]:.9g}", f"{phi_ang[idx]:.9g}"]
                + [f"{v:.12g}" for v in phi_flat[idx]]
                + [f"{v:.12g}" for v in eta_flat[idx]]
                + [f"{v:.12g}" for v in psi_flat[idx]]
                + [f"{v:.12g}" for v in kap_flat[idx]]
            )
    comps = ["x1", "x2", "x3", "t"]
    header = (["d", "theta", "phi"] + [f"phi_{c}" for c in comps]
              + [f"eta_{c}" for c in comps] + [f"psi_{c}" for c in comps]
              + ["kappa_1", "kappa_2"])
    out.table("immersion", header, rows)
    return checks


def cmd_verify(args, tols, out: _Output) -> list[CheckRow]:
    spec, chart, gamma = _load(args)
    rng = np.random.default_rng(args.seed)
    checks: list[CheckRow] = []

    bundle, p, spectral = _schouten_pipeline(gamma, args.derivatives)
    mode = bundle.derivatives
    t0 = time.perf_counter()
    sym = tensor_core.riemann_symmetry_residuals(bundle)
    checks.append(check("riemann_symmetries", max(sym.values()),
                        tols[f"riemann_symmetry_{mode}"], t0))
    exp = normal_form.build_expansion(gamma, p)
    r_values = args.r
    if not r_values:
        rmax = exp.r_max()
        if np.isfinite(rmax):
            r_values = [round(0.35 * rmax, 3), round(0.6 * rmax, 3)]
        else:
            r_values = [0.5, 1.0]
    list(_foliation_rows(exp, spectral, r_values, checks, tols, mode))

    t0 = time.perf_counter()
    checks.append(check("ambient_coefficients",
                        max(normal_form.ambient_expansion_check(exp)),
                        tols["ambient_coefficients"], t0))

    # trace correspondence at the first admissible r
    r = r_values[0]
    t0 = time.perf_counter()
    geom = normal_form.level_set_geometry(exp, r)
    corr = sigma_k.scalar_correspondence_residual(spectral, geom, bundle, r)
    worst = float(np.max(corr[bundle.mask]))
    checks.append(check("scalar_correspondence", worst,
                        tols[f"scalar_correspondence_{mode}"], t0))

    # Newton inequality on random Gamma_2 samples: (n-1) s1^2 >= 2 n s2
    t0 = time.perf_counter()
    n = chart.n
    samples = rng.normal(size=(10000, n)) + 1.0
    member = sigma_k.in_gamma_k(samples, 2)
    lam2 = samples[member]
    s1, s2 = sigma_k.sigma(lam2, 1), sigma_k.sigma(lam2, 2)
    violation = float(np.max(2.0 * n * s2 - (n - 1.0) * s1**2, initial=0.0))
    checks.append(check("newton_inequality", violation,
                        tols["newton_inequality"], t0))

    # bulk hyperbolicity in a small window
    t0 = time.perf_counter()
    r0 = min(0.5, 0.45 * exp.r_max())
    bulk = normal_form.bulk_curvature_residual(exp, r0, derivatives=mode)
    warn_only = bool(args.expect_nonhyperbolic)
    checks.append(check("bulk_residual", bulk.max_residual,
                        tols["bulk_residual"], t0, warn_only=warn_only))
    return checks


COMMANDS = {
    "curvature": cmd_curvature,
    "foliate": cmd_foliate,
    "yamabe": cmd_yamabe,
    "sigmak": cmd_sigmak,
    "hyperboloid": cmd_hyperboloid,
    "verify": cmd_verify,
}


def _add_common(sub, spec_required=True):
    if spec_required:
        sub.add_argument("--spec", required=True, help="metric spec JSON path")
    sub.add_argument("--out", default="confoliate_out", help="output directory")
    sub.add_argument("--format", default="csv", choices=("csv", "json"))
    sub.add_argument("--seed", type=int, default=42)
    sub.add_argument("--tol-override", action="append", metavar="NAME=VAL")
    sub.add_argument("--derivatives", default="auto",
                     choices=("auto", "fd", "analytic"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confoliate",
        description="metric curvature, level-set foliations, and "
                    "hyperboloid cross-checks",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("curvature", help="curvature fields and invariants")
    _add_common(sub)

    sub = subs.add_parser("foliate", help="level-set sweep over r values")
    _add_common(sub)
    sub.add_argument("--r", action="append", type=float)

    sub = subs.add_parser("yamabe", help="constant-scalar-curvature flow")
    _add_common(sub)
    sub.add_argument("--max-steps", type=int, default=5000)
    sub.add_argument("--dt-factor", type=float, default=0.02)
    sub.add_argument("--tol", type=float, default=1e-4)
    sub.add_argument("--expect-nonconvergence", action="store_true")

    sub = subs.add_parser("sigmak", help="symmetric-function reports")
    _add_common(sub)
    sub.add_argument("--k", action="append", type=int)
    sub.add_argument("--r", action="append", type=float)

    sub = subs.add_parser("hyperboloid", help="geodesic-sphere cross-checks")
    _add_common(sub, spec_required=False)
    sub.add_argument("--d", action="append", type=float)
    sub.add_argument("--grid", type=int, default=64)
    sub.add_argument("--orientation", default="outward",
                     choices=("outward", "inward"))

    sub = subs.add_parser("verify", help="full identity suite")
    _add_common(sub)
    sub.add_argument("--r", action="append", type=float)
    sub.add_argument("--expect-nonhyperbolic", action="store_true")

    sub = subs.add_parser("run", help="execute an experiment config file")
    sub.add_argument("config", help="experiment JSON path")
    return parser


def _args_from_config(path: str) -> list[str]:
    with open(path) as fh:
        cfg = json.load(fh)
    if "command" not in cfg:
        raise SpecError('experiment file needs a "command" key')
    argv = [cfg["command"]]
    if "spec" in cfg:
        argv += ["--spec", str(cfg["spec"])]
    if "out" in cfg:
        argv += ["--out", str(cfg["out"])]
    if "format" in cfg:
        argv += ["--format", str(cfg["format"])]
    if "seed" in cfg:
        argv += ["--seed", str(cfg["seed"])]
    params = cfg.get("params", {})
    for key, value in params.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        elif isinstance(value, (list, tuple)):
            for item in value:
                argv += [flag, str(item)]
        else:
            argv += [flag, str(value)]
    return argv


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            args = parser.parse_args(_args_from_config(args.config))
        tols = _tols(args.tol_override)
        out = _Output(args.out, args.format)
        checks = COMMANDS[args.command](args, tols, out)
    except (SpecError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    _print_checks(checks)
    summary = out.summary(args.command, args.seed, checks)
    print(f"summary: {summary}")
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
