"""Feasibility and AN power versus the harvesting target, non-linear vs linear EH.

The non-linear receiver cannot deliver more than its saturation power
(10 dBm by default), so every target at or above it is infeasible; the
linear model keeps reporting feasible designs there.

    python3 scripts/saturation_sweep.py --trials 20
"""

import argparse
from pathlib import Path

from answipt.evaluation import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--grid", default="0,2,4,6,8,9,10,11,12", help="harvesting targets in dBm")
    ap.add_argument("--design", default="perfect", choices=("perfect", "bounded", "statistical"))
    ap.add_argument("--eps2", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/saturation")
    args = ap.parse_args()

    ecfg = ExperimentConfig(
        sweep="e_bar",
        grid=tuple(float(v) for v in args.grid.split(",")),
        designs=(args.design,),
        eps2=(args.eps2,),
        eh_models=("nonlinear", "linear"),
        trials=args.trials,
        base_seed=args.seed,
    )
    res = run_sweep(ecfg, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(res.results_csv())
    (out / "aggregate.csv").write_text(res.aggregate_csv())

    print(f"{'E_bar dBm':>9} {'model':>10} {'feasible':>9} {'tr(V) W':>10}")
    for a in res.aggregate:
        tv = "-" if a["tr_V_mean"] is None else f"{a['tr_V_mean']:.4f}"
        print(f"{a['sweep_value']:>9g} {a['eh_model']:>10} {a['feasibility_rate']:>9.2f} {tv:>10}")
    print(f"wrote {out}/results.csv and {out}/aggregate.csv")


if __name__ == "__main__":
    main()
