"""Beamformer recovery, rank-one certificates and Monte Carlo verification."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import binomtest

from .channels import ChannelSet, sample_bounded_errors, sample_gaussian_error
from .config import ScenarioConfig
from .conic import ConicProgram
from .eh import required_power
from .linalg import dominant_eigpair, embedded_dual, fix_phase, outer, rank_eps
from .solver import SolveResult, residuals

RANK_TOL = 1e-6
VIOLATION_TOL = -1e-6


@dataclass
class BeamformingSolution:
    """Optimal covariances, recovered beamformers and per-constraint margins.

    Margins are relative: ``SINR/gamma - 1`` and ``P_in/omega - 1`` per user
    (``omega`` the RF input the harvesting target needs) and
    ``1 - tr(sum Q + V)/P_total`` for the budget.
    """

    Qs: list
    V: np.ndarray
    rhos: np.ndarray
    qs: list
    ranks: list
    objective: float
    margins: dict
    aux: dict = field(default_factory=dict)
    design: str = ""
    approximate: bool = False
    fallback_used: bool = False
    prog: Optional[ConicProgram] = None
    result: Optional[SolveResult] = None

    @property
    def rank_one(self) -> bool:
        return all(r <= 1 for r in self.ranks)

    def reconstruction_error(self, k: int) -> float:
        Q = self.Qs[k]
        nq = np.linalg.norm(Q)
        return float(np.linalg.norm(outer(self.qs[k]) - Q) / nq) if nq > 0 else 0.0

    def rank_one_covariances(self) -> list:
        return [outer(q) for q in self.qs]

    def to_dict(self) -> dict:
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        return {
            "design": self.design,
            "objective_tr_V_watts": self.objective,
            "rho": [float(r) for r in self.rhos],
            "ranks": list(self.ranks),
            "approximate": self.approximate,
            "fallback_used": self.fallback_used,
            "margins": {k: [float(x) for x in np.atleast_1d(v)] for k, v in self.margins.items()},
            "q": [cplx(q) for q in self.qs],
            "Q": [cplx(Q) for Q in self.Qs],
            "V": cplx(self.V),
            "aux": {k: float(v) for k, v in self.aux.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeamformingSolution":
        def cplx(x):
            return np.asarray(x["re"]) + 1j * np.asarray(x["im"])

        return cls(
            Qs=[cplx(Q) for Q in d["Q"]],
            V=cplx(d["V"]),
            rhos=np.asarray(d["rho"], dtype=float),
            qs=[cplx(q) for q in d["q"]],
            ranks=list(d["ranks"]),
            objective=float(d["objective_tr_V_watts"]),
            margins={k: np.asarray(v) for k, v in d["margins"].items()},
            aux=dict(d.get("aux", {})),
            design=d.get("design", ""),
            approximate=bool(d.get("approximate", False)),
            fallback_used=bool(d.get("fallback_used", False)),
        )


# -- constraint evaluation ---------------------------------------------------------


def _quad_rows(H, X) -> np.ndarray:
    """``Re(h^H X h)`` for every row ``h`` of ``H``."""
    return np.real(np.sum(H.conj() * (H @ X.T), axis=1))


def user_margins(Qs, V, rho: float, H, cfg: ScenarioConfig, k: int):
    """Relative SINR and harvesting margins of user ``k`` for channel rows ``H``."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    sig = _quad_rows(H, Qs[k])
    total = _quad_rows(H, sum(Qs) + V)
    interf = total - sig
    sinr = sig / (interf + cfg.sigma2_s + cfg.sigma2_sp / rho)
    p_in = cfg.eh.zeta * (1.0 - rho) * (total + cfg.sigma2_s)
    return sinr / cfg.gamma_k(k) - 1.0, p_in / required_power(cfg, k) - 1.0


def constraint_margins(Qs, V, rhos, cfg: ScenarioConfig, ch: ChannelSet) -> dict:
    sinr, eh = [], []
    for k, h in enumerate(ch.legit):
        s, e = user_margins(Qs, V, float(rhos[k]), h, cfg, k)
        sinr.append(float(s[0]))
        eh.append(float(e[0]))
    budget = 1.0 - float(np.real(np.trace(sum(Qs) + V))) / cfg.p_total
    return {"sinr": np.array(sinr), "eh": np.array(eh), "budget": np.array([budget])}


# -- beamformer recovery -------------------------------------------------------------


def principal_beamformer(Q) -> np.ndarray:
    """``sqrt(lambda_max) u_max`` with the phase fixed for reproducibility."""
    w, u = dominant_eigpair(Q)
    return fix_phase(np.sqrt(max(w, 0.0)) * u)


def randomization_fallback(Q, n_draws: int, rng, score: Optional[Callable] = None):
    """Best rank-one candidate drawn from ``CN(0, Q)``.

    Each draw is rescaled to the power ``tr(Q)``. ``score(q)`` returns a
    margin (``>= 0`` means feasible); without one the alignment
    ``q^H Q q / ||q||^2`` is maximised. Returns ``(q, score, feasible)``.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw")
    Q = np.asarray(Q, dtype=complex)
    power = float(np.real(np.trace(Q)))
    draws = sample_gaussian_error(Q, rng, n=n_draws) if power > 0 else np.zeros((n_draws, Q.shape[0]))
    best, best_score = None, -np.inf
    for z in draws:
        nz = np.linalg.norm(z)
        if nz == 0:
            continue
        q = fix_phase(z * np.sqrt(power) / nz)
        if score is None:
            sc = float(np.real(q.conj() @ Q @ q)) / (power if power > 0 else 1.0)
        else:
            sc = float(score(q))
        if sc > best_score:
            best, best_score = q, sc
    if best is None:
        return np.zeros(Q.shape[0], complex), -np.inf, False
    feasible = True if score is None else best_score >= 0
    return best, best_score, feasible


def extract_beamformers(
    prog: ConicProgram,
    result: SolveResult,
    cfg: ScenarioConfig,
    ch: ChannelSet,
    rng=None,
    n_draws: int = 1000,
) -> BeamformingSolution:
    """Decode an optimal solve into covariances, beamformers and margins.

    A covariance with numerical rank above one is replaced by the best
    randomised rank-one candidate (scored on that user's worst nominal
    margin) and the solution is flagged.
    """
    if not result.optimal:
        raise ValueError(f"cannot extract beamformers from a {result.status} solve")
    vals = prog.decode(result.x)
    K = cfg.n_users
    Qs = [0.5 * (vals[f"Q_{k + 1}"] + vals[f"Q_{k + 1}"].conj().T) for k in range(K)]
    V = 0.5 * (vals["V"] + vals["V"].conj().T)
    rhos = np.array([vals[f"rho_{k + 1}"] for k in range(K)])
    ranks = [rank_eps(Q, RANK_TOL) for Q in Qs]
    qs = [principal_beamformer(Q) for Q in Qs]
    fallback = approximate = False
    for k, r in enumerate(ranks):
        if r <= 1:
            continue
        fallback = True
        if rng is None:
            rng = np.random.default_rng(0)

        def score(q, k=k):
            trial = list(Qs)
            trial[k] = outer(q)
            m = constraint_margins(trial, V, rhos, cfg, ch)
            return min(m["sinr"].min(), m["eh"].min())

        q, _, ok = randomization_fallback(Qs[k], n_draws, rng, score)
        qs[k] = q
        approximate = approximate or not ok
    aux = {name: v for name, v in vals.items() if np.isscalar(v) and not name.startswith("rho_")}
    return BeamformingSolution(
        Qs=Qs,
        V=V,
        rhos=rhos,
        qs=qs,
        ranks=ranks,
        objective=float(result.objective),
        margins=constraint_margins(Qs, V, rhos, cfg, ch),
        aux=aux,
        design=prog.meta.get("design", ""),
        approximate=approximate,
        fallback_used=fallback,
        prog=prog,
        result=result,
    )


# -- KKT certificate -----------------------------------------------------------------


@dataclass
class Duals:
    """Multipliers read off a conic solve of one of the beamforming programs."""

    Z: list  # dual of Q_k >= 0 (complex Hermitian)
    Y: np.ndarray  # dual of V >= 0
    lam: np.ndarray  # SINR multipliers
    mu: np.ndarray  # EH multipliers
    alpha: float  # budget multiplier


def read_duals(prog: ConicProgram, z) -> Duals:
    K = prog.meta["n_users"]
    z = np.asarray(z, dtype=float)
    Z = [embedded_dual(prog.block_value(z, f"Q_{k + 1}")) for k in range(K)]
    Y = embedded_dual(prog.block_value(z, "V"))
    lam, mu = np.zeros(K), np.zeros(K)
    for k in range(K):
        # the quadratic-form entry sits at (1, 1) of both 2x2 Schur blocks
        lam[k] = prog.block_value(z, f"sinr_{k + 1}")[1, 1]
        mu[k] = prog.block_value(z, f"eh_{k + 1}")[1, 1]
    alpha = float(prog.block_value(z, "budget")[0])
    return Duals(Z, Y, lam, mu, alpha)


@dataclass
class KKTCertificate:
    available: bool
    max_residual: float = np.nan
    stationarity: float = np.nan
    reconstruction: float = np.nan
    complementarity: float = np.nan
    conic: float = np.nan
    min_eig_I_plus_Y: float = np.nan
    rank_bounds: list = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _conic_kkt(prog: ConicProgram, x, z, y) -> float:
    """Scaled primal residual, dual residual and gap of a primal-dual pair."""
    r = residuals(prog, x, z, y)
    p = r.primal / (1.0 + np.linalg.norm(prog.h))
    d = r.dual / (1.0 + np.linalg.norm(prog.c))
    g = abs(r.gap) / (1.0 + abs(prog.c @ x))
    return float(max(p, d, g))


def kkt_rank_certificate(
    sol: BeamformingSolution,
    cfg: ScenarioConfig,
    ch: ChannelSet,
    duals: Optional[Duals] = None,
) -> KKTCertificate:
    """Check the optimality conditions that force every ``Q_k`` to rank one.

    For every design the generic conic KKT residual and the complementarity
    ``||Z_k Q_k||`` are reported. For the perfect-CSI program the dual
    matrices are additionally rebuilt from the scalar multipliers, giving
    ``Z_k = I + Y - lambda_k (1 + 1/gamma) h_k h_k^H`` with ``I + Y``
    positive definite, so ``rank Z_k >= N - 1`` and ``rank Q_k <= 1``.
    """
    prog, res = sol.prog, sol.result
    if duals is None:
        if prog is None or res is None or res.z is None or not np.all(np.isfinite(res.z)):
            return KKTCertificate(False, note="dual variables unavailable")
        duals = read_duals(prog, res.z)
    K, n = cfg.n_users, cfg.n_t
    I = np.eye(n)
    scale = max(1.0, abs(duals.alpha), max(np.linalg.norm(Z) for Z in duals.Z), np.linalg.norm(duals.Y))

    comp = 0.0
    for Z, Q in zip(duals.Z, sol.Qs):
        comp = max(comp, np.linalg.norm(Z @ Q) / (scale * max(1.0, np.linalg.norm(Q))))
    comp = max(comp, np.linalg.norm(duals.Y @ sol.V) / (scale * max(1.0, np.linalg.norm(sol.V))))

    conic = np.nan
    if prog is not None and res is not None and res.x is not None and np.all(np.isfinite(res.x)):
        conic = _conic_kkt(prog, res.x, res.z, res.y)

    # eigen-structure bound on rank(Q_k) from rank(Z_k)
    bounds = [int(n - rank_eps(Z, RANK_TOL)) if np.linalg.norm(Z) > 0 else n for Z in duals.Z]

    stat = recon = mineig = np.nan
    design = (prog.meta.get("design") if prog is not None else sol.design) or "perfect"
    if design == "perfect":
        H = [outer(h) for h in ch.legit]
        lam, mu = duals.lam, duals.mu
        stat = 0.0
        for k in range(K):
            g = cfg.gamma_k(k)
            Zf = duals.alpha * I - (lam[k] / g + mu[k]) * H[k]
            Zf = Zf + sum((lam[j] - mu[j]) * H[j] for j in range(K) if j != k)
            stat = max(stat, np.linalg.norm(duals.Z[k] - Zf) / scale)
        Yf = (duals.alpha - 1.0) * I + sum((lam[j] - mu[j]) * H[j] for j in range(K))
        stat = max(stat, np.linalg.norm(duals.Y - Yf) / scale)
        recon = 0.0
        for k in range(K):
            coef = lam[k] * (1.0 + 1.0 / cfg.gamma_k(k))
            recon = max(recon, np.linalg.norm(duals.Z[k] - (I + duals.Y - coef * H[k])) / scale)
        mineig = float(np.linalg.eigvalsh(I + 0.5 * (duals.Y + duals.Y.conj().T))[0])
    parts = [v for v in (stat, recon, comp, conic) if np.isfinite(v)]
    return KKTCertificate(
        True,
        max_residual=float(max(parts)),
        stationarity=float(stat),
        reconstruction=float(recon),
        complementarity=float(comp),
        conic=float(conic),
        min_eig_I_plus_Y=mineig,
        rank_bounds=bounds,
    )


# -- Monte Carlo verification ----------------------------------------------------


def _json(d: dict) -> str:
    return json.dumps(d, indent=2)


@dataclass
class RobustnessReport:
    n_samples: int
    worst_sinr_margin: list
    worst_eh_margin: list
    sinr_violations: list
    eh_violations: list

    @property
    def violations(self) -> int:
        return int(sum(self.sinr_violations) + sum(self.eh_violations))

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "violations": self.violations,
            "worst_sinr_margin": self.worst_sinr_margin,
            "worst_eh_margin": self.worst_eh_margin,
            "sinr_violations": self.sinr_violations,
            "eh_violations": self.eh_violations,
        }

    def to_json(self) -> str:
        return _json(self.to_dict())


def bounded_error_samples(eps: float, dim: int, n_samples: int, rng) -> np.ndarray:
    """Half on the ``eps``-sphere, half uniform in the ball."""
    n_sphere = n_samples // 2
    a = sample_bounded_errors(eps, dim, n_sphere, True, rng)
    b = sample_bounded_errors(eps, dim, n_samples - n_sphere, False, rng)
    return np.vstack([a, b])


def verify_bounded_robustness(
    sol: BeamformingSolution,
    ch: ChannelSet,
    eps,
    n_samples: int,
    rng,
    cfg: ScenarioConfig,
    samples: Optional[list] = None,
) -> RobustnessReport:
    """Evaluate the original SINR/EH constraints on sampled bounded errors.

    ``samples`` (one ``(n, N)`` array per user) lets several solutions be
    probed with identical errors.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (cfg.n_users,))
    ws, we, vs, ve = [], [], [], []
    for k, h in enumerate(ch.legit):
        E = samples[k] if samples is not None else bounded_error_samples(eps[k], cfg.n_t, n_samples, rng)
        s, e = user_margins(sol.Qs, sol.V, float(sol.rhos[k]), h[None, :] + E, cfg, k)
        ws.append(float(s.min()))
        we.append(float(e.min()))
        vs.append(int(np.count_nonzero(s < VIOLATION_TOL)))
        ve.append(int(np.count_nonzero(e < VIOLATION_TOL)))
    return RobustnessReport(n_samples, ws, we, vs, ve)


@dataclass
class OutageReport:
    n_mc: int
    sinr_outage: list
    eh_outage: list
    sinr_ci: list
    eh_ci: list

    def to_dict(self) -> dict:
        return {
            "n_mc": self.n_mc,
            "sinr_outage": self.sinr_outage,
            "eh_outage": self.eh_outage,
            "sinr_ci95": self.sinr_ci,
            "eh_ci95": self.eh_ci,
        }

    def to_json(self) -> str:
        return _json(self.to_dict())


def wilson_interval(k: int, n: int) -> tuple:
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def verify_outage(
    sol: BeamformingSolution,
    ch: ChannelSet,
    thetas,
    p: float,
    q: float,
    n_mc: int,
    rng,
    cfg: ScenarioConfig,
) -> OutageReport:
    """Empirical SINR/EH outage rates under ``e_k ~ CN(0, Theta_k)``.

    An outage is a relative margin below ``-1e-6``, so solver slack at a
    tight constraint is not counted. ``p`` and ``q`` are the design levels
    (kept in the report for reference).
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    for v in (p, q):
        if not 0 < v <= 1:
            raise ValueError("outage levels must lie in (0, 1]")
    thetas = list(thetas)
    if len(thetas) == 1:
        thetas = thetas * cfg.n_users
    so, eo, sci, eci = [], [], [], []
    for k, h in enumerate(ch.legit):
        E = sample_gaussian_error(thetas[k], rng, n=n_mc)
        s, e = user_margins(sol.Qs, sol.V, float(sol.rhos[k]), h[None, :] + E, cfg, k)
        ns = int(np.count_nonzero(s < VIOLATION_TOL))
        ne = int(np.count_nonzero(e < VIOLATION_TOL))
        so.append(ns / n_mc)
        eo.append(ne / n_mc)
        sci.append(list(wilson_interval(ns, n_mc)))
        eci.append(list(wilson_interval(ne, n_mc)))
    return OutageReport(n_mc, so, eo, sci, eci)
