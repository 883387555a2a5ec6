"""``smcf-lab`` command line.

Every subcommand reads ``--config``, writes under ``--out``, prints one line
per verdict plus a summary line, and exits with 0 (all pass), 1 (a verdict
failed), 2 (invalid config) or 3 (too many diverged paths).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import ensemble as ens
from .config import SimConfig, explicit_dt_bound, initial_condition, parse_config, random_trig_field
from .energies import GSQUARE, dissipation_terms, ito_drift_prediction
from .galerkin import coercivity_gap, coercivity_tolerance, galerkin_simulate, spectral_basis
from .geometry import identity_residuals, symmetric_product_check
from .grid import gradient, norm
from .io import write_report, write_stats_csv, write_table_csv, write_trace_csv
from .noise import AUX_STREAM, philox_normals
from .stepper import simulate_path

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _ensemble(cfg: SimConfig, out: Path, workers: int, files: list, extra: dict):
    res = ens.run_ensemble(cfg, workers)
    for p in res.per_path:
        f = out / f"trace_{p.path_id}.csv"
        write_trace_csv(p.trace, f)
        files.append(f)
    stats = res.stats
    write_stats_csv(res.times, stats, out / "stats.csv")
    files.append(out / "stats.csv")
    (out / "timing.json").write_text(json.dumps({"wallTime": res.meta["wallTime"], "workers": workers}) + "\n")
    frac = res.n_diverged / len(res.per_path)
    extra["diverged"] = [{"pathId": p.path_id, "step": p.diverged_step} for p in res.per_path if p.diverged]
    verdict = ens.Verdict.judge("ensemble_valid", frac, ens.DIVERGENCE_LIMIT,
                                f"{res.n_diverged} of {len(res.per_path)} paths diverged")
    return res, verdict


def cmd_simulate(cfg, out, workers, files, extra):
    _, v = _ensemble(cfg, out, workers, files, extra)
    return [v]


def cmd_energy_report(cfg, out, workers, files, extra):
    res, v = _ensemble(cfg, out, workers, files, extra)
    verdicts = [v]
    if not res.valid:
        return verdicts
    for name in ("dirichlet", "area", "gsquare"):
        for q in cfg.analysis.q:
            verdicts.append(ens.supermartingale_test(res, name, q=q))
    verdicts.append(ens.quantified_decay_test(res))
    verdicts.append(ens.area_inequality_test(res))
    if cfg.analysis.driftWindow <= cfg.horizon:
        verdicts.append(ens.drift_prediction_test(res))
    for q in cfg.analysis.q:
        if 1 <= q < 2:
            verdicts.append(ens.moment_bound_test(res, q))
    return verdicts


def cmd_max_principle(cfg, out, workers, files, extra):
    res, v = _ensemble(cfg, out, workers, files, extra)
    return [v, ens.max_principle_test(res), ens.max_excess_test(res)]


def cmd_large_time(cfg, out, workers, files, extra):
    res, v = _ensemble(cfg, out, workers, files, extra)
    if not res.valid:
        return [v]
    lt = ens.large_time_analysis(res)
    write_table_csv([{"T": T, "decay": c, "se": s} for T, c, s in zip(lt.tgrid, lt.curve, lt.se)], out / "decay.csv")
    write_table_csv([{"pathId": p.path_id, "alpha": a} for p, a in zip(res.valid_paths, lt.alpha)], out / "alpha.csv")
    files += [out / "decay.csv", out / "alpha.csv"]
    extra["strictlyDecreasing"] = lt.strictly_decreasing
    return [v, lt.verdict]


def cmd_viscosity_sweep(cfg, out, workers, files, extra):
    sw = ens.viscosity_sweep(cfg, workers=workers)
    write_table_csv(sw.rows(), out / "sweep.csv")
    files.append(out / "sweep.csv")
    extra.update(strictlyDecreasing=sw.strictly_decreasing, exponent=sw.exponent)
    return [sw.verdict]


def _residual_ratio_verdict(name, coarse, fine):
    if coarse < 1e-13:
        return ens.Verdict.judge(name, 0.0, 0.5, "vacuous: residual at roundoff")
    ratio = coarse / fine
    return ens.Verdict.judge(name, abs(ratio - 4.0), 0.5, f"ratio={ratio:.4f} coarse={coarse:.4g} fine={fine:.4g}")


def cmd_verify_identities(cfg, out, workers, files, extra):
    rows = []
    for res in (cfg.res, 2 * cfg.res):
        c = cfg.with_(res=res)
        r = identity_residuals(initial_condition(c, 0), c.grid)
        rows.append({"res": res, **r})
    write_table_csv(rows, out / "residuals.csv")
    files.append(out / "residuals.csv")
    verdicts = [_residual_ratio_verdict(f"identity_order[{k}]", rows[0][k], rows[1][k])
                for k in ("mcfIdentity", "secondFundamentalForm")]

    grid = cfg.grid
    worst = 0.0
    for i in range(50):
        u = random_trig_field(grid, 3, cfg.base_seed, 10_000 + i)
        pred = ito_drift_prediction(u, grid, cfg.epsilon, GSQUARE)
        groups = dissipation_terms(u, grid, cfg.epsilon, GSQUARE)
        scale = max(abs(pred), max(abs(x) for x in groups.values()), 1e-300)
        worst = max(worst, abs(pred + sum(groups.values())) / scale)
    verdicts.append(ens.Verdict.judge("drift_identity", worst, 1e-9, "50 random fields"))

    worst = 0.0
    z = philox_normals(cfg.base_seed, 0, 0, 3 * 1000 * 25, stream=AUX_STREAM)
    pos = 0
    for trial in range(1000):
        n = (2, 3, 5)[trial % 3]
        a, b, c = (z[pos + j * n * n: pos + (j + 1) * n * n].reshape(n, n) for j in range(3))
        pos += 3 * n * n
        a = 0.5 * (a + a.T)
        b, c = b @ b.T, c @ c.T
        val = symmetric_product_check(a, b, c)
        scale = np.sum(a * a) * np.linalg.norm(b, 2) * np.linalg.norm(c, 2)
        worst = max(worst, -val / scale)
    verdicts.append(ens.Verdict.judge("matrix_positivity", worst, 1e-10, "1000 draws, n in {2,3,5}"))
    return verdicts


def _coercivity_fields(grid, seed, count=100):
    for i in range(count):
        u = random_trig_field(grid, 4, seed, 20_000 + i)
        yield 2.0 * u / norm(gradient(u, grid), grid, "Linf", 1)


def cmd_coercivity_check(cfg, out, workers, files, extra):
    rows = []
    worst = -math.inf
    for res in (cfg.res, 2 * cfg.res):
        grid = cfg.with_(res=res).grid
        for i, u in enumerate(_coercivity_fields(grid, cfg.base_seed)):
            tol = coercivity_tolerance(u, grid)
            for eps in (0.0, 0.5, 1.0):
                g = coercivity_gap(u, grid, eps)
                worst = max(worst, g - tol)
                rows.append({"res": res, "field": i, "epsilon": eps, "gap": g, "tol": tol})
    write_table_csv(rows, out / "coercivity.csv")
    files.append(out / "coercivity.csv")
    tol_c = np.array([r["tol"] for r in rows if r["res"] == cfg.res])
    tol_f = np.array([r["tol"] for r in rows if r["res"] == 2 * cfg.res])
    ratio = float(np.median(tol_c / tol_f))
    return [
        ens.Verdict.judge("coercivity_gap", worst, 0.0, "max of G - tol_G"),
        ens.Verdict.judge("coercivity_tol_order", abs(ratio - 4.0), 0.5, f"median tol ratio {ratio:.4f}"),
    ]


def _explicit_short(cfg: SimConfig, horizon: float = 0.01) -> SimConfig:
    bound = explicit_dt_bound(cfg.dim, cfg.res, cfg.epsilon)
    steps = math.ceil(horizon / bound)
    return cfg.with_(scheme="ExplicitEM", horizon=horizon, dt=horizon / steps, sample_stride=1)


def cmd_galerkin_compare(cfg, out, workers, files, extra):
    c = _explicit_short(cfg)
    nodal = simulate_path(c, 0)
    full = len(spectral_basis(c.grid))
    galer = galerkin_simulate(c, full, 0)
    diff = float(np.max(np.abs(nodal.u_final - galer.u_final)))
    ks = [k for k in cfg.analysis.galerkinModes if k < full]
    dist = [float(norm(galerkin_simulate(c, k, 0).u_final - galer.u_final, c.grid, "L2")) for k in ks]
    write_table_csv([{"K": k, "distance": d} for k, d in zip(ks, dist)], out / "truncation.csv")
    files.append(out / "truncation.csv")
    step = max(np.diff(dist)) if len(dist) > 1 else 0.0
    return [
        ens.Verdict.judge("galerkin_equivalence", diff, 1e-8, f"K={full}, horizon {c.horizon:g}"),
        ens.Verdict.judge("galerkin_truncation", step, 0.0, f"K={ks} distances={dist}"),
    ]


def cmd_ito_strat_check(cfg, out, workers, files, extra):
    paths = range(min(cfg.ensemble_size, 8))
    with_c = ens.ito_strat_study(cfg, paths=paths, correction=True)
    without = ens.ito_strat_study(cfg, paths=paths, correction=False)
    rows = [{"dt": dt, "with_correction": a, "without_correction": b}
            for dt, a, b in zip(with_c.dts, with_c.distance, without.distance)]
    write_table_csv(rows, out / "strong.csv")
    files.append(out / "strong.csv")
    return [
        ens.Verdict.judge("ito_strat_order", 0.4 - with_c.order, 0.0, f"order={with_c.order:.3f}"),
        ens.Verdict.judge("ito_strat_correction_needed", with_c.distance[-1] / without.distance[-1], 0.2,
                          f"order without correction {without.order:.3f}"),
    ]


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-identities": cmd_verify_identities,
    "energy-report": cmd_energy_report,
    "max-principle": cmd_max_principle,
    "large-time": cmd_large_time,
    "viscosity-sweep": cmd_viscosity_sweep,
    "coercivity-check": cmd_coercivity_check,
    "galerkin-compare": cmd_galerkin_compare,
    "ito-strat-check": cmd_ito_strat_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smcf-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--workers", type=int, default=None, help="default: available parallelism")
    ap.add_argument("--force", action="store_true", help="skip the explicit step-size check (negative tests only)")
    return ap


def run_subcommand(argv) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config.read_text(), force=args.force)
    except (OSError, ValueError) as exc:  # ConfigError and JSON errors are ValueErrors
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    workers = args.workers or ens.default_workers()
    args.out.mkdir(parents=True, exist_ok=True)
    files: list = []
    extra: dict = {}
    try:
        verdicts = COMMANDS[args.command](cfg, args.out, workers, files, extra)
    except ValueError as exc:  # e.g. too few paths for a statistical test
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_report(args.out / "report.json", cfg, verdicts, files, extra)
    for v in verdicts:
        print(v.line())
    failed = [v.name for v in verdicts if not v.passed]
    print(f"{args.command}: {len(verdicts) - len(failed)}/{len(verdicts)} pass"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    if any(v.name == "ensemble_valid" and not v.passed for v in verdicts):
        for d in extra.get("diverged", [])[:10]:
            print(f"  path {d['pathId']} diverged at step {d['step']}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_FAIL if failed else EXIT_OK


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
