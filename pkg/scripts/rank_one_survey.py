"""How often the relaxation returns rank-one covariances, per design.

Draws random channel sets at the default scenario, solves each design and
reports rank-one counts, the worst KKT residual and the worst
reconstruction error of the principal beamformers.

    python3 scripts/rank_one_survey.py --instances 100
"""

import argparse

import numpy as np

from answipt.analysis import extract_beamformers, kkt_rank_certificate
from answipt.channels import trial_seed
from answipt.config import UncertaintyModel, db_to_linear
from answipt.eh import SaturationError
from answipt.evaluation import CERTIFY, ExperimentConfig, trial_channels
from answipt.problems import DESIGNS, build_design
from answipt.solver import solve


def scenario(base, design, eps2):
    K, n = base.n_users, base.n_t
    if design == "bounded":
        return base.with_(uncertainty=UncertaintyModel.bounded([np.sqrt(eps2)] * K))
    if design == "statistical":
        return base.with_(uncertainty=UncertaintyModel.statistical([eps2 * np.eye(n)] * K))
    return base


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100, help="draws per design")
    ap.add_argument("--gamma-db", type=float, default=4.0)
    ap.add_argument("--eps2", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ecfg = ExperimentConfig()
    base = ecfg.scenario.with_(gamma=db_to_linear(args.gamma_db))
    print(f"{'design':>12} {'optimal':>8} {'rank one':>9} {'worst KKT':>10} {'worst recon':>12}")
    for design in DESIGNS:
        cfg = scenario(base, design, args.eps2)
        n_opt = n_r1 = 0
        kkt = recon = 0.0
        for t in range(args.instances):
            ch = trial_channels(ecfg, cfg.n_t, trial_seed(args.seed, t))
            try:
                prog = build_design(design, cfg, ch)
            except SaturationError:
                continue
            res = solve(prog, CERTIFY)
            if not res.optimal:
                continue
            n_opt += 1
            sol = extract_beamformers(prog, res, cfg, ch)
            n_r1 += sol.rank_one
            kkt = max(kkt, kkt_rank_certificate(sol, cfg, ch).max_residual)
            recon = max(recon, max(sol.reconstruction_error(k) for k in range(cfg.n_users)))
        print(f"{design:>12} {n_opt:>4}/{args.instances:<3} {n_r1:>9} {kkt:>10.2e} {recon:>12.2e}")


if __name__ == "__main__":
    main()
