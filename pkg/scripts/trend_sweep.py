"""Eavesdropper SINR and AN power versus the SINR target.

Runs perfect-CSI and bounded-robust designs for 4 and 6 antennas over a
gamma grid and prints the per-point means; CSVs go to ``--out``.

    python3 scripts/trend_sweep.py --trials 50 --out runs/trend
"""

import argparse
from pathlib import Path

from answipt.evaluation import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--grid", default="4,6,8,10,12", help="SINR targets in dB")
    ap.add_argument("--eps2", default="0.001,0.01", help="squared error bounds of the robust design")
    ap.add_argument("--antennas", default="4,6")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/trend")
    args = ap.parse_args()

    ecfg = ExperimentConfig(
        grid=tuple(float(v) for v in args.grid.split(",")),
        designs=("perfect", "bounded"),
        eps2=tuple(float(v) for v in args.eps2.split(",")),
        antennas=tuple(int(v) for v in args.antennas.split(",")),
        trials=args.trials,
        base_seed=args.seed,
    )
    res = run_sweep(ecfg, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(res.results_csv())
    (out / "aggregate.csv").write_text(res.aggregate_csv())

    print(f"{'N_T':>3} {'gamma':>6} {'design':>16} {'feasible':>8} {'tr(V) W':>10} {'max eav SINR dB':>16}")
    for a in res.aggregate:
        name = a["design"] if a["design"] == "perfect" else f"bounded {a['eps2']:g}"
        tv = "-" if a["tr_V_mean"] is None else f"{a['tr_V_mean']:.4f}"
        ev = "-" if a["max_eav_sinr_db_mean"] is None else f"{a['max_eav_sinr_db_mean']:.2f}"
        print(f"{a['n_t']:>3} {a['sweep_value']:>6g} {name:>16} {a['feasible']:>4}/{a['trials']:<3} {tv:>10} {ev:>16}")
    print(f"wrote {out}/results.csv and {out}/aggregate.csv")


if __name__ == "__main__":
    main()
