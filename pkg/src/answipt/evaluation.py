"""Performance metrics and the Monte Carlo sweep pipeline."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .analysis import BeamformingSolution, extract_beamformers
from .channels import ChannelLayout, ChannelSet, generate_channels, trial_seed
from .config import (
    ScenarioConfig,
    UncertaintyModel,
    db_to_linear,
    dbm_to_watts,
    linear_to_db,
)
from .eh import SaturationError, harvested_power, received_rf_power
from .problems import DESIGNS, build_design
from .solver import SolverConfig, solve

# solves feeding certificates and verification run tighter than the default
CERTIFY = SolverConfig(feastol=1e-10, reltol=1e-10)

# offset mixed into the seed when a trial is re-drawn after a numerical failure
RESEED_SALT = 0x5EED_0001


def _quad(h, X) -> float:
    h = np.asarray(h, dtype=complex)
    return float(np.real(h.conj() @ X @ h))


def sinr_legit(h, Qs, V, rho: float, sigma2_s: float, sigma2_sp: float, k: int) -> float:
    """SINR at the information decoder of user ``k``."""
    if not 0 < rho <= 1:
        raise ValueError(f"power-splitting ratio must lie in (0, 1], got {rho}")
    sig = _quad(h, Qs[k])
    interf = sum(_quad(h, Q) for i, Q in enumerate(Qs) if i != k) + _quad(h, V)
    return sig / (interf + sigma2_s + sigma2_sp / rho)


def sinr_eav(h_e, Qs, V, sigma2_e: float, k: int) -> float:
    """SINR of an eavesdropper decoding the message meant for user ``k``."""
    sig = _quad(h_e, Qs[k])
    interf = sum(_quad(h_e, Q) for i, Q in enumerate(Qs) if i != k) + _quad(h_e, V)
    return sig / (interf + sigma2_e)


def eav_sinr_table(sol: BeamformingSolution, ch: ChannelSet, sigma2_e: float) -> np.ndarray:
    """``(J, K)`` array of eavesdropper SINRs, one row per eavesdropper."""
    return np.array(
        [[sinr_eav(he, sol.Qs, sol.V, sigma2_e, k) for k in range(len(sol.Qs))] for he in ch.eav]
    ).reshape(len(ch.eav), len(sol.Qs))


def max_eav_sinr(sol: BeamformingSolution, ch: ChannelSet, sigma2_e: float) -> Optional[float]:
    """Worst leakage over eavesdroppers and messages; ``None`` without eavesdroppers."""
    if not ch.eav:
        return None
    return float(eav_sinr_table(sol, ch, sigma2_e).max())


# -- experiment configuration ------------------------------------------------------

SWEEPS = ("gamma", "e_bar")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: grid over SINR target (dB) or harvesting target (dBm).

    Every trial draws one channel set per antenna count and reuses it across
    grid points and designs, so all comparisons are paired. ``eps2`` lists
    the squared error bounds (bounded design) or covariance scales
    (statistical design, ``Theta = eps2 * I``).
    """

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: str = "gamma"
    grid: tuple = (4.0, 6.0, 8.0, 10.0, 12.0)
    designs: tuple = ("perfect", "bounded")
    eh_models: tuple = ("nonlinear",)
    antennas: tuple = (4,)
    eps2: tuple = (0.01,)
    trials: int = 50
    base_seed: int = 0
    layout: ChannelLayout = field(default_factory=ChannelLayout)
    feastol: float = CERTIFY.feastol
    reltol: float = CERTIFY.reltol
    record_timing: bool = False

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}")
        if not self.grid:
            raise ValueError("sweep grid must be non-empty")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not self.designs or any(d not in DESIGNS for d in self.designs):
            raise ValueError(f"designs must be a non-empty subset of {DESIGNS}")
        if not self.antennas or any(n < 1 for n in self.antennas):
            raise ValueError("antenna counts must be positive")
        if any(e < 0 for e in self.eps2):
            raise ValueError("eps2 values must be non-negative")
        if any(m not in ("nonlinear", "linear") for m in self.eh_models):
            raise ValueError("unknown EH model")

    def variants(self):
        """``(design, eps2, eh_model)`` triples evaluated at every grid point."""
        out = []
        for d in self.designs:
            for m in self.eh_models:
                if d == "perfect":
                    out.append((d, 0.0, m))
                else:
                    out.extend((d, float(e), m) for e in self.eps2)
        return out

    def scenario_at(self, value: float, n_t: int, design: str, eps2: float, eh_model: str) -> ScenarioConfig:
        base = self.scenario
        kw = {"n_t": n_t, "eh_model": eh_model, "n_users": len(self.layout.user_distances)}
        if self.sweep == "gamma":
            kw["gamma"] = db_to_linear(value)
        else:
            kw["e_bar"] = dbm_to_watts(value)
        if design == "bounded":
            kw["uncertainty"] = UncertaintyModel.bounded([np.sqrt(eps2)] * kw["n_users"])
        elif design == "statistical":
            kw["uncertainty"] = UncertaintyModel.statistical([eps2 * np.eye(n_t)] * kw["n_users"])
        else:
            kw["uncertainty"] = UncertaintyModel()
        return base.with_(**kw)


RESULT_COLUMNS = (
    "sweep_value",
    "design",
    "trial",
    "seed",
    "status",
    "tr_V_watts",
    "max_eav_sinr_db",
    "min_legit_sinr_db",
    "min_eh_watts",
    "solve_ms",
    "n_t",
    "eps2",
    "eh_model",
)

AGGREGATE_COLUMNS = (
    "sweep_value",
    "design",
    "n_t",
    "eps2",
    "eh_model",
    "trials",
    "feasible",
    "feasibility_rate",
    "low_feasibility",
    "tr_V_mean",
    "tr_V_ci_low",
    "tr_V_ci_high",
    "tr_V_p10",
    "tr_V_median",
    "tr_V_p90",
    "max_eav_sinr_db_mean",
    "max_eav_sinr_db_ci_low",
    "max_eav_sinr_db_ci_high",
)


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list
    aggregate: list

    @property
    def n_points(self) -> int:
        return len({r["sweep_value"] for r in self.aggregate})

    def results_csv(self) -> str:
        return _csv(RESULT_COLUMNS, self.rows)

    def aggregate_csv(self) -> str:
        return _csv(AGGREGATE_COLUMNS, self.aggregate)

    def select(self, **match) -> list:
        """Trial rows whose fields equal every ``match`` item."""
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if np.isnan(v) else repr(v)
    return str(v)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


# -- trial execution ---------------------------------------------------------------


def solve_instance(cfg: ScenarioConfig, ch: ChannelSet, design: str, solver_cfg: SolverConfig = CERTIFY):
    """Build and solve one design; returns ``(status, solution or None, seconds)``."""
    try:
        prog = build_design(design, cfg, ch)
    except SaturationError:
        return "saturated", None, 0.0
    t0 = time.perf_counter()
    res = solve(prog, solver_cfg)
    dt = time.perf_counter() - t0
    if not res.optimal:
        return res.status, None, dt
    return res.status, extract_beamformers(prog, res, cfg, ch), dt


def trial_metrics(sol: BeamformingSolution, cfg: ScenarioConfig, ch: ChannelSet) -> dict:
    """Nominal-channel metrics of one solution."""
    me = max_eav_sinr(sol, ch, cfg.sigma2_e)
    legit, eh = [], []
    for k, h in enumerate(ch.legit):
        rho = float(np.clip(sol.rhos[k], cfg.rho_min, 1.0))
        legit.append(sinr_legit(h, sol.Qs, sol.V, rho, cfg.sigma2_s, cfg.sigma2_sp, k))
        p_in = received_rf_power(h, sol.Qs, sol.V, rho, cfg.sigma2_s, cfg.eh.zeta)
        eh.append(float(harvested_power(max(p_in, 0.0), cfg)))
    return {
        "tr_V_watts": float(sol.objective),
        "max_eav_sinr_db": None if me is None else float(linear_to_db(max(me, 1e-300))),
        "min_legit_sinr_db": float(linear_to_db(max(min(legit), 1e-300))),
        "min_eh_watts": float(min(eh)),
    }


def trial_channels(ecfg: ExperimentConfig, n_t: int, seed: int) -> ChannelSet:
    # one stream per antenna count so adding an antenna setting never perturbs the others
    return generate_channels(n_t, ecfg.layout, np.random.default_rng([seed, n_t]))


def _run_case(ecfg, value, n_t, variant, seed, solver_cfg):
    design, eps2, model = variant
    cfg = ecfg.scenario_at(value, n_t, design, eps2, model)
    ch = trial_channels(ecfg, n_t, seed)
    return cfg, ch, solve_instance(cfg, ch, design, solver_cfg)


def run_trial(ecfg: ExperimentConfig, trial: int) -> list:
    """All grid points, antenna counts and designs of one trial."""
    solver_cfg = SolverConfig(feastol=ecfg.feastol, reltol=ecfg.reltol)
    seed0 = trial_seed(ecfg.base_seed, trial)
    rows = []
    for n_t in ecfg.antennas:
        for value in ecfg.grid:
            for variant in ecfg.variants():
                seed = seed0
                cfg, ch, (status, sol, dt) = _run_case(ecfg, value, n_t, variant, seed, solver_cfg)
                if status in ("numerical_failure", "max_iterations"):
                    seed = seed0 ^ RESEED_SALT
                    cfg, ch, (status, sol, dt) = _run_case(ecfg, value, n_t, variant, seed, solver_cfg)
                row = {
                    "sweep_value": float(value),
                    "design": variant[0],
                    "trial": trial,
                    "seed": seed,
                    "status": status,
                    "tr_V_watts": None,
                    "max_eav_sinr_db": None,
                    "min_legit_sinr_db": None,
                    "min_eh_watts": None,
                    "solve_ms": round(dt * 1e3, 3) if ecfg.record_timing else None,
                    "n_t": n_t,
                    "eps2": variant[1],
                    "eh_model": variant[2],
                }
                if sol is not None:
                    row.update(trial_metrics(sol, cfg, ch))
                rows.append(row)
    return rows


def _mean_ci(values) -> tuple:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None, None, None
    m = float(v.mean())
    if v.size < 2:
        return m, None, None
    half = float(stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / np.sqrt(v.size))
    return m, m - half, m + half


def aggregate_rows(ecfg: ExperimentConfig, rows: list) -> list:
    out = []
    for n_t in ecfg.antennas:
        for value in ecfg.grid:
            for design, eps2, model in ecfg.variants():
                sel = [
                    r
                    for r in rows
                    if r["n_t"] == n_t
                    and r["sweep_value"] == float(value)
                    and r["design"] == design
                    and r["eps2"] == eps2
                    and r["eh_model"] == model
                ]
                ok = [r for r in sel if r["status"] == "optimal"]
                rate = len(ok) / len(sel) if sel else 0.0
                tv = [r["tr_V_watts"] for r in ok]
                tm, tlo, thi = _mean_ci(tv)
                em, elo, ehi = _mean_ci([r["max_eav_sinr_db"] for r in ok])
                pct = np.percentile(tv, [10, 50, 90]) if tv else [None] * 3
                out.append(
                    {
                        "sweep_value": float(value),
                        "design": design,
                        "n_t": n_t,
                        "eps2": eps2,
                        "eh_model": model,
                        "trials": len(sel),
                        "feasible": len(ok),
                        "feasibility_rate": rate,
                        "low_feasibility": rate < 0.5,
                        "tr_V_mean": tm,
                        "tr_V_ci_low": tlo,
                        "tr_V_ci_high": thi,
                        "tr_V_p10": None if pct[0] is None else float(pct[0]),
                        "tr_V_median": None if pct[1] is None else float(pct[1]),
                        "tr_V_p90": None if pct[2] is None else float(pct[2]),
                        "max_eav_sinr_db_mean": em,
                        "max_eav_sinr_db_ci_low": elo,
                        "max_eav_sinr_db_ci_high": ehi,
                    }
                )
    return out


def run_sweep(ecfg: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Run every trial (optionally in a process pool) and aggregate.

    Rows are ordered by trial index regardless of completion order, so the
    output does not depend on ``workers``.
    """
    trials = range(ecfg.trials)
    if workers > 1 and ecfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_trial = list(ex.map(run_trial, [ecfg] * ecfg.trials, trials))
    else:
        per_trial = [run_trial(ecfg, t) for t in trials]
    rows = [r for tr in per_trial for r in tr]
    return SweepResult(ecfg, rows, aggregate_rows(ecfg, rows))
