"""Where and when the gradient bound is exceeded.

Runs a scenario at several (N, dt) pairs and reports, per pair, the fraction
of paths whose sup-norm gradient ever exceeds the initial one by more than
tolMP, the worst relative growth, and the worst maximum of int g_M(Q). The
time of the worst excursion is printed for the worst path.

With ``--same-path`` it instead follows individual Brownian paths: each id is
integrated on dt/f for every refinement factor f, reusing one path through
``refine``, so the growth can be watched as dt shrinks with the noise fixed.

    python scripts/max_principle_diagnosis.py --paths 50 --pairs 128:1e-3 128:2.5e-4 256:2.5e-4
    python scripts/max_principle_diagnosis.py --same-path 1 3 --factors 1 4 16 64 256 --horizon 0.1
"""
import argparse
import json
from pathlib import Path

import numpy as np

from smcf_lab.config import explicit_dt_bound, parse_config
from smcf_lab.ensemble import run_ensemble
from smcf_lab.noise import refine, sample_increments
from smcf_lab.stepper import simulate_path


def same_path(base, ids, factors, schemes):
    cfg = parse_config(base)
    level = max(factors).bit_length() - 1
    print(f"{'path':>5} {'scheme':>22} " + " ".join(f"{'dt/' + str(f):>9}" for f in factors))
    for pid in ids:
        coarse = sample_increments(cfg.base_seed, pid, cfg.steps, cfg.dt, max_level=level)
        for scheme in schemes:
            row = []
            for f in factors:
                c = cfg.with_(dt=cfg.dt / f, scheme=scheme)
                if scheme != "SemiImplicitSpectral" and c.dt > explicit_dt_bound(c.dim, c.res, c.epsilon):
                    row.append("   (cfl)")
                    continue
                r = simulate_path(c, pid, noise=refine(coarse, f) if f > 1 else coarse, record=False)
                row.append(f"{(r.max_grad - r.initial_grad) / r.initial_grad:9.4f}")
            print(f"{pid:5d} {scheme:>22} " + " ".join(row), flush=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "standard.json")
    ap.add_argument("--paths", type=int, default=50)
    ap.add_argument("--pairs", nargs="+", default=["128:1e-3", "128:2.5e-4", "256:2.5e-4"])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--same-path", type=int, nargs="*", default=None, metavar="ID")
    ap.add_argument("--factors", type=int, nargs="+", default=[1, 4, 16, 64])
    ap.add_argument("--schemes", nargs="+", default=["SemiImplicitSpectral"])
    ap.add_argument("--horizon", type=float, default=None)
    args = ap.parse_args()

    base = json.loads(args.config.read_text())
    base["M"] = args.paths
    if args.horizon is not None:
        base["T"] = args.horizon
    if args.same_path is not None:
        if any(f & (f - 1) for f in args.factors):
            ap.error("factors must be powers of two")
        same_path(base, args.same_path, args.factors, args.schemes)
        return
    print(f"{'N':>5} {'dt':>9} {'frac>tol':>9} {'worst':>8} {'maxexcess':>10} {'t*':>7} {'sup W':>7}")
    for pair in args.pairs:
        res_str, dt_str = pair.split(":")
        cfg = parse_config({**base, "res": int(res_str), "dt": float(dt_str)})
        tol = cfg.tolerances.tolMP
        ens = run_ensemble(cfg, workers=args.workers)
        growth = np.array([(p.max_grad - p.initial_grad) / p.initial_grad for p in ens.per_path])
        k = int(np.argmax(growth))
        worst = ens.per_path[k].trace
        t_star = worst.times[int(np.argmax(worst["grad_linf"]))]
        excess = max(float(np.max(p.trace["maxexcess"])) for p in ens.per_path)
        print(f"{cfg.res:5d} {cfg.dt:9.3g} {np.mean(growth > tol):9.3f} {growth.max():8.4f} {excess:10.3g} "
              f"{t_star:7.3f} {np.max(np.abs(worst['W'])):7.3f}", flush=True)


if __name__ == "__main__":
    main()
