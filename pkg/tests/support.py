"""Shared helpers for the test-suite: random cone programs, the cvxopt oracle
and default-scenario instance draws."""

import numpy as np

from answipt.channels import trial_seed
from answipt.config import UncertaintyModel, db_to_linear
from answipt.conic import Block, ConicProgram
from answipt.eh import SaturationError
from answipt.evaluation import CERTIFY, ExperimentConfig, trial_channels
from answipt.problems import build_design
from answipt.solver import solve


def _blocks(l, q, s):
    blocks, off = [], 0
    for d in l:
        blocks.append(Block("l", d, f"l{off}", off))
        off += d
    for d in q:
        blocks.append(Block("q", d, f"q{off}", off))
        off += d
    for d in s:
        blocks.append(Block("s", d, f"s{off}", off))
        off += d * d
    return off, blocks


def _interior(rng, m, blocks):
    v = np.zeros(m)
    for b in blocks:
        sl = slice(b.offset, b.offset + b.rows)
        if b.cone == "l":
            v[sl] = rng.uniform(0.1, 2, b.dim)
        elif b.cone == "q":
            t = rng.normal(size=b.dim)
            t[0] = np.linalg.norm(t[1:]) + rng.uniform(0.1, 1)
            v[sl] = t
        else:
            X = rng.normal(size=(b.dim, b.dim))
            v[sl] = (X @ X.T + 0.1 * np.eye(b.dim)).ravel()
    return v


def random_cone_program(rng, n_eq=0, max_psd=8):
    """Strictly primal and dual feasible program over random LP/SOC/PSD blocks."""
    l = [int(rng.integers(1, 5))]
    q = [int(x) for x in rng.integers(2, 6, size=rng.integers(0, 3))]
    s = [int(x) for x in rng.integers(1, max_psd + 1, size=rng.integers(1, 3))]
    m, blocks = _blocks(l, q, s)
    n = min(int(rng.integers(n_eq + 2, n_eq + 10)), m)
    while True:
        G = rng.normal(size=(m, n))
        for b in blocks:
            if b.cone == "s":
                sl = slice(b.offset, b.offset + b.rows)
                for j in range(n):
                    M = G[sl, j].reshape(b.dim, b.dim)
                    G[sl, j] = ((M + M.T) / 2).ravel()
        A = rng.normal(size=(n_eq, n))
        # symmetric PSD rows repeat, so full column rank is not automatic
        if np.linalg.matrix_rank(np.vstack([A, G])) == n:
            break
        n -= 1
    x0 = rng.normal(size=n)
    s0, z0 = _interior(rng, m, blocks), _interior(rng, m, blocks)
    y0 = rng.normal(size=n_eq)
    h = G @ x0 + s0
    b = A @ x0
    c = -G.T @ z0 - A.T @ y0
    return ConicProgram(c, G, h, A, b, tuple(blocks), {}, objective_sign=1.0)


def cvxopt_objective(prog: ConicProgram, tols=(1e-10, 1e-9, 1e-8)):
    """``(status, min c'x)`` from cvxopt's cone LP solver.

    cvxopt occasionally divides by zero near the end at very tight
    tolerances, so looser ones are tried in turn.
    """
    from cvxopt import matrix, solvers

    d = prog.dims
    args = (matrix(prog.c), matrix(prog.G), matrix(prog.h), {"l": d["l"], "q": d["q"], "s": d["s"]})
    if prog.A.shape[0]:
        args = args + (matrix(prog.A), matrix(prog.b))
    for tol in tols:
        opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": 200}
        try:
            sol = solvers.conelp(*args, options=opts)
        except (ZeroDivisionError, ArithmeticError, ValueError):
            continue
        if sol["status"] == "optimal":
            return sol["status"], sol["primal objective"]
    return "failed", float("nan")


def scenario_for(base, design, eps2):
    K = base.n_users
    if design == "bounded":
        return base.with_(uncertainty=UncertaintyModel.bounded([np.sqrt(eps2)] * K))
    if design == "statistical":
        return base.with_(uncertainty=UncertaintyModel.statistical([eps2 * np.eye(base.n_t)] * K))
    return base.with_(uncertainty=UncertaintyModel())


def draw_instances(
    design, count, eps2=0.01, gamma_db=4.0, base_seed=2024, n_t=4, solver_cfg=CERTIFY, limit=None, solve_fn=solve
):
    """Yield ``(seed, cfg, ch, prog, result)`` for the first ``count`` optimal solves.

    Infeasible draws are skipped; ``limit`` caps the number of draws.
    ``solve_fn(prog, solver_cfg)`` replaces the plain solver call.
    """
    ecfg = ExperimentConfig()
    base = ecfg.scenario.with_(gamma=db_to_linear(gamma_db), n_t=n_t)
    cfg = scenario_for(base, design, eps2)
    found, t = 0, 0
    limit = limit or 20 * count
    while found < count and t < limit:
        seed = trial_seed(base_seed, t)
        t += 1
        ch = trial_channels(ecfg, n_t, seed)
        try:
            prog = build_design(design, cfg, ch)
        except SaturationError:
            continue
        res = solve_fn(prog, solver_cfg)
        if res.optimal:
            found += 1
            yield seed, cfg, ch, prog, res


def assign(prog: ConicProgram, values: dict) -> np.ndarray:
    """Decision vector holding the named scalars / Hermitian matrices in ``values``."""
    from answipt.conic import hermitian_to_params

    x = np.zeros(prog.n_vars)
    for name, info in prog.variables.items():
        v = values[name]
        if info.kind == "scalar":
            x[info.offset] = float(v)
        else:
            x[info.offset : info.offset + info.size] = hermitian_to_params(v)
    return x


def random_hermitian(rng, n, psd=False, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = A @ A.conj().T if psd else A + A.conj().T
    return scale * H / n


def slack(prog: ConicProgram, x, label):
    """Value of one cone block at ``x`` (complex for embedded Hermitian blocks)."""
    return prog.block_hermitian(prog.h - prog.G @ x, label)
