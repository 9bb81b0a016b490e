"""Command-line front end: ``answipt --command {solve,sweep,verify,selftest}``.

Configuration is an INI file with the sections listed in :data:`SCHEMA`
(or the ``manifest.json`` of an earlier run), refined by ``--set`` items.
Every power must carry a unit (``dBm``, ``W`` or ``mW``). Outputs land in
``<out>/<command>-<hash>`` where the hash covers the fully resolved
configuration, so identical runs map to the same directory.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import re
import sys
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    BeamformingSolution,
    extract_beamformers,
    kkt_rank_certificate,
    verify_bounded_robustness,
    verify_outage,
)
from .channels import ChannelLayout, ChannelSet, PathLossParams, trial_seed
from .config import (
    EHParams,
    ScenarioConfig,
    UncertaintyModel,
    db_to_linear,
    dbm_to_watts,
    watts_to_dbm,
)
from .conic import dumps, program_stats
from .eh import SaturationError, required_input_power
from .evaluation import (
    CERTIFY,
    ExperimentConfig,
    eav_sinr_table,
    run_sweep,
    trial_channels,
    trial_metrics,
)
from .problems import DESIGNS, build_design
from .solver import SolverConfig, solve

log = logging.getLogger("answipt")

COMMANDS = ("solve", "sweep", "verify", "selftest")


class ConfigError(ValueError):
    """Bad configuration entry; the message names the offending key."""


# -- value parsers -------------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_POWER_RE = re.compile(rf"^\s*({_NUM})\s*(dBm|mW|W)\s*$", re.IGNORECASE)
_DB_RE = re.compile(rf"^\s*({_NUM})\s*(dB)?\s*$", re.IGNORECASE)


def parse_power(text: str, key: str) -> float:
    """Power with a mandatory ``dBm``/``W``/``mW`` suffix, returned in watts."""
    m = _POWER_RE.match(str(text))
    if not m:
        raise ConfigError(f"{key}: power {text!r} needs a unit suffix (dBm, W or mW)")
    v, unit = float(m.group(1)), m.group(2).lower()
    if unit == "dbm":
        return dbm_to_watts(v)
    if v < 0:
        raise ConfigError(f"{key}: power must be non-negative, got {text!r}")
    return v if unit == "w" else v * 1e-3


def _power_dbm(text: str, key: str) -> float:
    m = _POWER_RE.match(str(text))
    if m and m.group(2).lower() == "dbm":
        return float(m.group(1))
    w = parse_power(text, key)
    if w <= 0:
        raise ConfigError(f"{key}: power must be positive to express in dBm")
    return float(watts_to_dbm(w))


def _float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _bool(text, key):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _list(text) -> list:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _gamma_text(text, key):
    m = _DB_RE.match(str(text))
    if not m:
        raise ConfigError(f"{key}: expected a value in dB, got {text!r}")
    return float(m.group(1))


def _w(v: float) -> str:
    return f"{v!r} W"


def _join(vals, unit="") -> str:
    suffix = f" {unit}" if unit else ""
    return ", ".join(f"{float(v)!r}{suffix}" for v in vals)


# -- schema ---------------------------------------------------------------------------

SCHEMA = {
    "scenario": (
        "n_t", "gamma", "gamma_db", "e_bar", "p_total", "sigma2_s", "sigma2_sp", "sigma2_e",
        "eh_model", "eta", "outage_p", "outage_q", "rho_min",
    ),
    "eh": ("m", "a", "b", "zeta"),
    "channel": ("user_distances", "eav_distances", "rician_k", "d0", "alpha"),
    "solve": ("design", "eps2", "trial", "solver_log"),
    "experiment": (
        "sweep", "grid", "designs", "eh_models", "antennas", "eps2", "trials", "record_timing",
        "feastol", "reltol",
    ),
    "verify": ("n_samples",),
    "run": ("seed",),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs; ``experiment.scenario`` is the base scenario."""

    experiment: ExperimentConfig
    design: str = "perfect"
    eps2: float = 0.01
    trial: int = 0
    solver_log: bool = False
    n_samples: int = 10_000

    @property
    def scenario(self) -> ScenarioConfig:
        return self.experiment.scenario

    @property
    def seed(self) -> int:
        return self.experiment.base_seed


def _locate(key: str) -> tuple:
    if "." in key:
        sec, k = key.split(".", 1)
        sec, k = sec.strip().lower(), k.strip().lower()
        if sec not in SCHEMA:
            raise ConfigError(f"{key}: unknown section {sec!r}")
        if k not in SCHEMA[sec]:
            raise ConfigError(f"{key}: unknown key {k!r} in section [{sec}]")
        return sec, k
    k = key.strip().lower()
    hits = [s for s, keys in SCHEMA.items() if k in keys]
    if not hits:
        raise ConfigError(f"{key}: unknown key")
    if len(hits) > 1:
        raise ConfigError(f"{key}: ambiguous key, write one of " + ", ".join(f"{s}.{k}" for s in hits))
    return hits[0], k


def _read_source(path) -> dict:
    """Raw ``{section: {key: text}}`` from an INI file or a run manifest."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        raw = data.get("config", data)
    else:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None
        raw = {s: dict(cp.items(s)) for s in cp.sections()}
    out = {}
    for sec, items in raw.items():
        for k, v in items.items():
            s, kk = _locate(f"{sec}.{k}")
            out.setdefault(s, {})[kk] = str(v)
    return out


def _merge_overrides(raw: dict, overrides) -> dict:
    raw = {s: dict(v) for s, v in raw.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        sec, k = _locate(key)
        sect = raw.setdefault(sec, {})
        # a later gamma/gamma_db replaces the other spelling
        if k in ("gamma", "gamma_db"):
            sect.pop("gamma", None)
            sect.pop("gamma_db", None)
        sect[k] = val.strip()
    return raw


def _scenario(sc: dict, eh: dict, n_users: int) -> ScenarioConfig:
    d = ScenarioConfig()
    e = EHParams()
    try:
        ehp = EHParams(
            M=parse_power(eh["m"], "eh.m") if "m" in eh else e.M,
            a=_float(eh["a"], "eh.a") if "a" in eh else e.a,
            b=parse_power(eh["b"], "eh.b") if "b" in eh else e.b,
            zeta=_float(eh["zeta"], "eh.zeta") if "zeta" in eh else e.zeta,
        )
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"[eh] {err}") from None
    if "gamma" in sc and "gamma_db" in sc:
        raise ConfigError("scenario.gamma: give either gamma or gamma_db, not both")
    gamma = d.gamma
    if "gamma_db" in sc:
        gamma = db_to_linear(_gamma_text(sc["gamma_db"], "scenario.gamma_db"))
    elif "gamma" in sc:
        g = sc["gamma"].strip()
        if g.lower().endswith("db"):
            gamma = db_to_linear(_gamma_text(g, "scenario.gamma"))
        else:
            gamma = _float(g, "scenario.gamma")
    kw = dict(n_users=n_users, gamma=gamma, eh=ehp)
    if "n_t" in sc:
        kw["n_t"] = _int(sc["n_t"], "scenario.n_t")
    for k in ("e_bar", "p_total", "sigma2_s", "sigma2_sp", "sigma2_e"):
        if k in sc:
            kw[k] = parse_power(sc[k], f"scenario.{k}")
    for k in ("eta", "outage_p", "outage_q", "rho_min"):
        if k in sc:
            kw[k] = _float(sc[k], f"scenario.{k}")
    if "eh_model" in sc:
        kw["eh_model"] = sc["eh_model"].strip().lower()
    try:
        cfg = ScenarioConfig(**kw)
    except ValueError as err:
        raise ConfigError(f"[scenario] {err}") from None
    if cfg.eh_model == "nonlinear":
        try:
            required_input_power(cfg.e_bar, cfg.eh)
        except SaturationError as err:
            raise ConfigError(f"scenario.e_bar: {err}") from None
    return cfg


def build_run_config(raw: dict) -> RunConfig:
    """Typed configuration from raw section/key text; defaults fill the gaps."""
    for sec, items in raw.items():
        for k in items:
            _locate(f"{sec}.{k}")
    sc, eh, chn = raw.get("scenario", {}), raw.get("eh", {}), raw.get("channel", {})
    sv, ex, vf, rn = raw.get("solve", {}), raw.get("experiment", {}), raw.get("verify", {}), raw.get("run", {})

    lay = ChannelLayout()
    pl = PathLossParams()
    try:
        layout = ChannelLayout(
            user_distances=tuple(_float(v, "channel.user_distances") for v in _list(chn["user_distances"]))
            if "user_distances" in chn
            else lay.user_distances,
            eav_distances=tuple(_float(v, "channel.eav_distances") for v in _list(chn["eav_distances"]))
            if "eav_distances" in chn
            else lay.eav_distances,
            rician_k=_float(chn["rician_k"], "channel.rician_k") if "rician_k" in chn else lay.rician_k,
            path_loss=PathLossParams(
                d0=_float(chn["d0"], "channel.d0") if "d0" in chn else pl.d0,
                alpha=_float(chn["alpha"], "channel.alpha") if "alpha" in chn else pl.alpha,
            ),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"[channel] {err}") from None
    if not layout.user_distances:
        raise ConfigError("channel.user_distances: need at least one user")
    if any(d <= 0 for d in layout.user_distances + layout.eav_distances):
        raise ConfigError("channel distances must be positive")
    if layout.rician_k < 0:
        raise ConfigError("channel.rician_k must be non-negative")

    scen = _scenario(sc, eh, len(layout.user_distances))

    sweep = ex.get("sweep", "gamma").strip().lower()
    if sweep not in ("gamma", "e_bar"):
        raise ConfigError(f"experiment.sweep: must be gamma or e_bar, got {sweep!r}")
    d = ExperimentConfig()
    if "grid" in ex:
        if sweep == "gamma":
            grid = tuple(_gamma_text(v, "experiment.grid") for v in _list(ex["grid"]))
        else:
            grid = tuple(_power_dbm(v, "experiment.grid") for v in _list(ex["grid"]))
    else:
        grid = d.grid if sweep == "gamma" else (0.0, 2.0, 4.0, 6.0, 8.0, 9.0, 10.0, 11.0, 12.0)
    kw = dict(
        scenario=scen,
        sweep=sweep,
        grid=grid,
        layout=layout,
        designs=tuple(v.lower() for v in _list(ex["designs"])) if "designs" in ex else d.designs,
        eh_models=tuple(v.lower() for v in _list(ex["eh_models"])) if "eh_models" in ex else d.eh_models,
        antennas=tuple(_int(v, "experiment.antennas") for v in _list(ex["antennas"]))
        if "antennas" in ex
        else (scen.n_t,),
        eps2=tuple(_float(v, "experiment.eps2") for v in _list(ex["eps2"])) if "eps2" in ex else d.eps2,
        trials=_int(ex["trials"], "experiment.trials") if "trials" in ex else d.trials,
        record_timing=_bool(ex["record_timing"], "experiment.record_timing")
        if "record_timing" in ex
        else d.record_timing,
        feastol=_float(ex["feastol"], "experiment.feastol") if "feastol" in ex else d.feastol,
        reltol=_float(ex["reltol"], "experiment.reltol") if "reltol" in ex else d.reltol,
        base_seed=_int(rn["seed"], "run.seed") if "seed" in rn else d.base_seed,
    )
    try:
        exp = ExperimentConfig(**kw)
        SolverConfig(feastol=exp.feastol, reltol=exp.reltol)
    except ValueError as err:
        raise ConfigError(f"[experiment] {err}") from None

    design = sv.get("design", "perfect").strip().lower()
    if design not in DESIGNS:
        raise ConfigError(f"solve.design: must be one of {DESIGNS}, got {design!r}")
    eps2 = _float(sv["eps2"], "solve.eps2") if "eps2" in sv else 0.01
    if eps2 < 0:
        raise ConfigError("solve.eps2: must be non-negative")
    trial = _int(sv["trial"], "solve.trial") if "trial" in sv else 0
    if trial < 0:
        raise ConfigError("solve.trial: must be non-negative")
    n_samples = _int(vf["n_samples"], "verify.n_samples") if "n_samples" in vf else 10_000
    if n_samples < 1:
        raise ConfigError("verify.n_samples: must be positive")
    return RunConfig(
        experiment=exp,
        design=design,
        eps2=eps2,
        trial=trial,
        solver_log=_bool(sv["solver_log"], "solve.solver_log") if "solver_log" in sv else False,
        n_samples=n_samples,
    )


def parse_config(path=None, overrides=(), seed=None) -> RunConfig:
    """Read ``path`` (INI or manifest JSON, optional), apply ``key=value`` overrides."""
    raw = _read_source(path) if path else {}
    raw = _merge_overrides(raw, overrides)
    if seed is not None:
        raw.setdefault("run", {})["seed"] = str(int(seed))
    return build_run_config(raw)


def resolved_config(rc: RunConfig) -> dict:
    """Canonical text of every setting, defaults included.

    Feeding this back through :func:`build_run_config` reproduces ``rc``
    exactly (floats are written with ``repr``).
    """
    s, ex = rc.scenario, rc.experiment
    grid_unit = "dB" if ex.sweep == "gamma" else "dBm"
    return {
        "scenario": {
            "n_t": str(s.n_t),
            "gamma": repr(float(s.gamma)),
            "e_bar": _w(s.e_bar),
            "p_total": _w(s.p_total),
            "sigma2_s": _w(s.sigma2_s),
            "sigma2_sp": _w(s.sigma2_sp),
            "sigma2_e": _w(s.sigma2_e),
            "eh_model": s.eh_model,
            "eta": repr(float(s.eta)),
            "outage_p": repr(float(s.outage_p)),
            "outage_q": repr(float(s.outage_q)),
            "rho_min": repr(float(s.rho_min)),
        },
        "eh": {"m": _w(s.eh.M), "a": repr(float(s.eh.a)), "b": _w(s.eh.b), "zeta": repr(float(s.eh.zeta))},
        "channel": {
            "user_distances": _join(ex.layout.user_distances),
            "eav_distances": _join(ex.layout.eav_distances),
            "rician_k": repr(float(ex.layout.rician_k)),
            "d0": repr(float(ex.layout.path_loss.d0)),
            "alpha": repr(float(ex.layout.path_loss.alpha)),
        },
        "solve": {
            "design": rc.design,
            "eps2": repr(float(rc.eps2)),
            "trial": str(rc.trial),
            "solver_log": str(rc.solver_log).lower(),
        },
        "experiment": {
            "sweep": ex.sweep,
            "grid": _join(ex.grid, grid_unit),
            "designs": ", ".join(ex.designs),
            "eh_models": ", ".join(ex.eh_models),
            "antennas": ", ".join(str(n) for n in ex.antennas),
            "eps2": _join(ex.eps2),
            "trials": str(ex.trials),
            "record_timing": str(ex.record_timing).lower(),
            "feastol": repr(float(ex.feastol)),
            "reltol": repr(float(ex.reltol)),
        },
        "verify": {"n_samples": str(rc.n_samples)},
        "run": {"seed": str(rc.seed)},
    }


# -- run directory and manifest -------------------------------------------------------


def config_hash(command: str, resolved: dict, extra=None) -> str:
    """SHA-256 of the command, resolved config and tool version (plus ``extra`` inputs)."""
    doc = {"command": command, "config": resolved, "version": __version__}
    if extra is not None:
        doc["extra"] = extra
    blob = json.dumps(doc, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _scenario_for(rc: RunConfig) -> ScenarioConfig:
    s = rc.scenario
    K = s.n_users
    if rc.design == "bounded":
        return s.with_(uncertainty=UncertaintyModel.bounded([np.sqrt(rc.eps2)] * K))
    if rc.design == "statistical":
        return s.with_(uncertainty=UncertaintyModel.statistical([rc.eps2 * np.eye(s.n_t)] * K))
    return s.with_(uncertainty=UncertaintyModel())


def _instance(rc: RunConfig):
    seed = trial_seed(rc.seed, rc.trial)
    return seed, trial_channels(rc.experiment, rc.scenario.n_t, seed)


# -- commands ------------------------------------------------------------------------


def cmd_solve(rc: RunConfig, run_dir: Path, resolved: dict) -> tuple:
    """One instance end to end. Returns ``(exit_code, status, outputs)``."""
    cfg = _scenario_for(rc)
    seed, ch = _instance(rc)
    outputs = []
    doc = {"design": rc.design, "trial": rc.trial, "seed": seed, "config": resolved, "channels": ch.to_dict()}
    try:
        prog = build_design(rc.design, cfg, ch)
    except SaturationError as err:
        doc.update(status="saturated", message=str(err))
        atomic_write(run_dir / "solution.json", _json(doc))
        return 1, "saturated", ["solution.json"]
    atomic_write(run_dir / "program.txt", dumps(prog))
    outputs.append("program.txt")
    st = program_stats(prog)
    doc["program"] = {
        "n_vars": st.n_vars,
        "n_lp": st.n_lp,
        "soc_dims": list(st.soc_dims),
        "psd_dims": list(st.psd_dims),
        "n_equalities": st.n_equalities,
    }
    if rc.solver_log:
        with open(run_dir / "solver.log", "w") as fh:
            res = solve(prog, CERTIFY, log=fh)
        outputs.append("solver.log")
    else:
        res = solve(prog, CERTIFY)
    doc["status"] = res.status
    doc["solver"] = {
        "iterations": res.iterations,
        "primal_objective": res.primal_objective,
        "dual_objective": res.dual_objective,
        "primal_residual": res.primal_residual,
        "dual_residual": res.dual_residual,
        "gap": res.gap,
    }
    code = 0
    if res.optimal:
        sol = extract_beamformers(prog, res, cfg, ch)
        doc["solution"] = sol.to_dict()
        doc["metrics"] = trial_metrics(sol, cfg, ch)
        if ch.n_eav:
            doc["eav_sinr_linear"] = eav_sinr_table(sol, ch, cfg.sigma2_e).tolist()
        doc["certificate"] = kkt_rank_certificate(sol, cfg, ch).to_dict()
    else:
        code = 1
    atomic_write(run_dir / "solution.json", _json(doc))
    outputs.insert(0, "solution.json")
    return code, res.status, outputs


def cmd_sweep(rc: RunConfig, run_dir: Path, workers: int) -> tuple:
    res = run_sweep(rc.experiment, workers=workers)
    atomic_write(run_dir / "results.csv", res.results_csv())
    atomic_write(run_dir / "aggregate.csv", res.aggregate_csv())
    n_ok = sum(r["status"] == "optimal" for r in res.rows)
    return 0, f"{n_ok}/{len(res.rows)} optimal", ["results.csv", "aggregate.csv"]


def load_solution(path):
    """``(document, RunConfig, ChannelSet, BeamformingSolution or None)`` of a stored solve."""
    doc = json.loads(Path(path).read_text())
    rc = build_run_config(doc["config"])
    ch = ChannelSet.from_dict(doc["channels"])
    sol = BeamformingSolution.from_dict(doc["solution"]) if "solution" in doc else None
    return doc, rc, ch, sol


def cmd_verify(rc: RunConfig, run_dir: Path, solution_path) -> tuple:
    doc, src, ch, sol = load_solution(solution_path)
    if sol is None:
        raise ConfigError(f"{solution_path}: stored solve has status {doc.get('status')!r}, nothing to verify")
    # the stored solve fixes the physics; the current config only picks sample count and seed
    cfg = _scenario_for(src)
    rng = np.random.default_rng([rc.seed, src.trial, 1])
    out = {"solution": str(solution_path), "design": src.design, "eps2": src.eps2, "n_samples": rc.n_samples}
    if src.design == "statistical":
        theta = src.eps2 * np.eye(cfg.n_t)
        rep = verify_outage(sol, ch, [theta], cfg.outage_p, cfg.outage_q, rc.n_samples, rng, cfg)
        ok = max(rep.sinr_outage) <= cfg.outage_p + 0.01 and max(rep.eh_outage) <= cfg.outage_q + 0.01
        out["outage"] = rep.to_dict()
    else:
        rep = verify_bounded_robustness(sol, ch, np.sqrt(src.eps2), rc.n_samples, rng, cfg)
        out["robustness"] = rep.to_dict()
        # perfect-CSI solutions are probed for information only
        ok = src.design == "perfect" or rep.violations == 0
    out["passed"] = bool(ok)
    atomic_write(run_dir / "verify.json", _json(out))
    return (0 if ok else 1), ("passed" if ok else "failed"), ["verify.json"]


def selftest_checks() -> list:
    """Quick invariant suite; returns ``(name, passed, detail)`` triples."""
    from .conic import ProgramBuilder
    from .eh import nonlinear_eh_output

    checks = []

    def add(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    p = EHParams()
    err = max(
        abs(nonlinear_eh_output(required_input_power(t, p), p) - t) for t in np.linspace(1e-5, 0.99, 50) * p.M
    )
    add("eh inverse round trip", err <= 1e-9 * p.M, f"max error {err:.2e} W")
    add("dBm conversion", abs(dbm_to_watts(30.0) - 1.0) < 1e-15 and abs(watts_to_dbm(1e-3)) < 1e-12)

    b = ProgramBuilder()
    x = [b.scalar(f"x{i}") for i in range(3)]
    for i, xi in enumerate(x):
        b.nonneg(xi - (i + 1.0), f"lb{i}")
    res = solve(b.build(x[0] + x[1] + x[2], sense="min"))
    add("lp optimum", res.optimal and abs(res.objective - 6.0) < 1e-7, f"objective {res.objective:.9g}")

    C = np.array([[2.0, 1j, 0], [-1j, 3.0, 0.5], [0, 0.5, 1.0]])
    b = ProgramBuilder()
    X = b.hermitian("X", 3)
    b.equal(X.trace().real - 1.0, "trace")
    b.psd(X, "X", force_complex=True)
    res = solve(b.build((C @ X).trace().real, sense="min"))
    lmin = float(np.linalg.eigvalsh(C)[0])
    ok = res.optimal and abs(res.objective - lmin) < 1e-6 and res.primal_objective >= res.dual_objective - 1e-7
    add("sdp smallest eigenvalue", ok, f"objective {res.objective:.9g} vs {lmin:.9g}")

    ecfg = ExperimentConfig()
    cfg = ecfg.scenario
    ch = trial_channels(ecfg, cfg.n_t, 0)
    base = None
    for design, c in (("perfect", cfg), ("bounded", cfg.with_(uncertainty=UncertaintyModel.bounded([0.0] * 3)))):
        prog = build_design(design, c, ch)
        res = solve(prog, CERTIFY)
        if not res.optimal:
            add(f"{design} instance solves", False, res.status)
            continue
        sol = extract_beamformers(prog, res, c, ch)
        if design == "perfect":
            base = sol.objective
            cert = kkt_rank_certificate(sol, c, ch)
            add("perfect csi rank one", sol.rank_one, f"ranks {sol.ranks}")
            add("perfect csi kkt", cert.max_residual <= 1e-6, f"max residual {cert.max_residual:.2e}")
        else:
            rel = abs(sol.objective - base) / max(1.0, abs(base))
            add("zero-radius bounded matches perfect", rel <= 1e-6, f"relative gap {rel:.2e}")
    try:
        required_input_power(dbm_to_watts(12.0), p)
        add("saturating target rejected", False)
    except SaturationError:
        add("saturating target rejected", True)
    return checks


def cmd_selftest(run_dir: Path) -> tuple:
    checks = selftest_checks()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
    ok = all(c[1] for c in checks)
    doc = {"passed": ok, "checks": [{"name": n, "passed": o, "detail": d} for n, o, d in checks]}
    atomic_write(run_dir / "selftest.json", _json(doc))
    return (0 if ok else 1), ("passed" if ok else "failed"), ["selftest.json"]


# -- entry point ----------------------------------------------------------------------


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="answipt", description=__doc__.splitlines()[0])
    ap.add_argument("--command", choices=COMMANDS, default=None, help="what to run (default: solve)")
    ap.add_argument("--config", help="INI config file or a manifest.json from an earlier run")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override one setting, e.g. scenario.gamma_db=8 (repeatable)")
    ap.add_argument("--out", default="runs", help="parent directory for run directories")
    ap.add_argument("--seed", type=int, default=None, help="base seed (same as run.seed)")
    ap.add_argument("--workers", type=int, default=None, help="parallel trial workers (sweep)")
    ap.add_argument("--solution", help="solution.json to check (verify)")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    command = args.command
    if command is None and args.config and args.config.endswith(".json"):
        command = json.loads(Path(args.config).read_text()).get("command")
    command = command or "solve"
    if command == "verify" and not args.solution:
        ap.error("--command verify needs --solution")
    if args.workers is not None and args.workers < 1:
        ap.error("--workers must be at least 1")

    try:
        rc = parse_config(args.config, args.overrides, args.seed)
    except (ConfigError, OSError) as err:
        print(f"answipt: config error: {err}", file=sys.stderr)
        return 2

    resolved = resolved_config(rc)
    extra = None
    if command == "verify":
        try:
            extra = hashlib.sha256(Path(args.solution).read_bytes()).hexdigest()
        except OSError as err:
            print(f"answipt: cannot read solution: {err}", file=sys.stderr)
            return 2
    digest = config_hash(command, resolved, extra)
    run_dir = Path(args.out) / f"{command}-{digest[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    log.info("run directory %s", run_dir)

    try:
        if command == "solve":
            code, status, outputs = cmd_solve(rc, run_dir, resolved)
        elif command == "sweep":
            code, status, outputs = cmd_sweep(rc, run_dir, args.workers or default_workers())
        elif command == "verify":
            code, status, outputs = cmd_verify(rc, run_dir, args.solution)
        else:
            code, status, outputs = cmd_selftest(run_dir)
    except (ConfigError, OSError, KeyError) as err:
        print(f"answipt: {command} failed: {err}", file=sys.stderr)
        return 2

    manifest = {
        "tool": "answipt",
        "version": __version__,
        "command": command,
        "config_hash": digest,
        "seed": rc.seed,
        "config": resolved,
        "status": status,
        "exit_code": code,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    if command == "verify":
        manifest["solution"] = str(args.solution)
        manifest["solution_sha256"] = extra
    atomic_write(run_dir / "manifest.json", _json(manifest))
    print(f"{command}: {status} -> {run_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
