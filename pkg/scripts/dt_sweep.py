"""Time-step dependence of the area inequality and drift-prediction statistics.

Reruns a scenario at successively halved dt (same seeds, same initial datum)
and prints, per dt, the worst running excess of the area inequality next to
its bias threshold, and the mean Dirichlet drift residual X over the
prediction window with its standard error.

    python scripts/dt_sweep.py --paths 200 --levels 3
"""
import argparse
import json
from pathlib import Path

import numpy as np

from smcf_lab.config import parse_config
from smcf_lab.ensemble import area_inequality_test, drift_prediction_test, run_ensemble


def drift_residual(res, window):
    k = int(np.argmin(np.abs(res.times - window)))
    d = res.column("dirichlet")
    x = d[:, k] - d[:, 0] - res.column("drift_pred_cum")[:, k]
    return x.mean(), x.std(ddof=1) / np.sqrt(len(x))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "standard.json")
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--horizon", type=float, default=None, help="shorten T for quick runs")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    base = json.loads(args.config.read_text())
    base["M"] = args.paths
    if args.horizon is not None:
        base["T"] = args.horizon
    print(f"{'dt':>10} {'area stat':>10} {'area thr':>9} {'pass':>5} {'drift X':>9} {'X se':>8} {'allow':>8} {'pass':>5}")
    for lev in range(args.levels):
        cfg = parse_config({**base, "dt": base["dt"] / 2**lev})
        res = run_ensemble(cfg, workers=args.workers)
        a = area_inequality_test(res, min_paths=1)
        d = drift_prediction_test(res, min_paths=1)
        x, se = drift_residual(res, cfg.analysis.driftWindow)
        print(f"{cfg.dt:10.3g} {a.statistic:10.4g} {a.threshold:9.4g} {str(a.passed):>5} "
              f"{x:9.4g} {se:8.3g} {d.threshold:8.3g} {str(d.passed):>5}", flush=True)


if __name__ == "__main__":
    main()
