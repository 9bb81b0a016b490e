"""Lower the three beamforming designs into :class:`~answipt.conic.ConicProgram`.

Decision variables are the per-user information covariances ``Q_k``, the
artificial-noise covariance ``V`` and the power-splitting ratios ``rho_k``;
the objective is always ``max tr(V)``. Robust designs add per-user auxiliary
scalars (S-procedure multipliers or Bernstein slacks).
"""

from __future__ import annotations

import numpy as np

from .channels import ChannelSet
from .config import ScenarioConfig
from .conic import Affine, ConicProgram, ProgramBuilder, bmat, concat
from .eh import required_power
from .linalg import min_eigenvalue, psd_sqrt

DESIGNS = ("perfect", "bounded", "statistical")


def w_matrix(Qs, V, k: int, gamma: float):
    """Useful-minus-interference matrix ``Q_k/gamma - sum_{i!=k} Q_i - V``.

    Works on numeric arrays and on :class:`Affine` expressions alike.
    """
    out = Qs[k] / gamma - V
    for i, Q in enumerate(Qs):
        if i != k:
            out = out - Q
    return out


def m_matrix(Qs, V):
    """Total transmit covariance ``sum_l Q_l + V``."""
    out = V
    for Q in Qs:
        out = out + Q
    return out


def _col(v) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(-1, 1)


def _ct(X):
    return X.H if isinstance(X, Affine) else np.conj(np.asarray(X)).T


class _Common:
    """Variables and constraints shared by all designs."""

    def __init__(self, cfg: ScenarioConfig, ch: ChannelSet, design: str):
        if ch.n_users != cfg.n_users:
            raise ValueError(f"scenario has {cfg.n_users} users but {ch.n_users} channels were given")
        if ch.n_t != cfg.n_t:
            raise ValueError(f"scenario has {cfg.n_t} antennas but channels have {ch.n_t}")
        self.cfg, self.ch = cfg, ch
        K, n = cfg.n_users, cfg.n_t
        # computed up front so a saturating target fails before any building
        self.omega = [required_power(cfg, k) for k in range(K)]
        b = self.b = ProgramBuilder()
        self.Qs = [b.hermitian(f"Q_{k + 1}", n) for k in range(K)]
        self.V = b.hermitian("V", n)
        self.rho = [b.scalar(f"rho_{k + 1}") for k in range(K)]
        self.design = design

    def finish(self) -> ConicProgram:
        cfg, b = self.cfg, self.b
        total = m_matrix(self.Qs, self.V).trace().real
        b.nonneg(cfg.p_total - total, "budget")
        for k, r in enumerate(self.rho):
            b.nonneg(r - cfg.rho_min, f"rho_lo_{k + 1}")
            b.nonneg(1.0 - r, f"rho_hi_{k + 1}")
        for k, Q in enumerate(self.Qs):
            b.psd(Q, f"Q_{k + 1}", force_complex=True)
        b.psd(self.V, "V", force_complex=True)
        meta = {"design": self.design, "n_users": cfg.n_users, "n_t": cfg.n_t, "omega": list(self.omega)}
        return b.build(self.V.trace().real, sense="max", meta=meta)

    def W(self, k):
        return w_matrix(self.Qs, self.V, k, self.cfg.gamma_k(k))

    def M(self):
        return m_matrix(self.Qs, self.V)


def _check_k(cfg: ScenarioConfig):
    if cfg.n_users < 1:
        raise ValueError("need at least one legitimate user")


def build_perfect_csi(cfg: ScenarioConfig, ch: ChannelSet) -> ConicProgram:
    """SDR of the AN-maximisation problem with exactly known channels."""
    _check_k(cfg)
    c = _Common(cfg, ch, "perfect")
    s2, ssp = cfg.sigma2_s, np.sqrt(cfg.sigma2_sp)
    zeta = cfg.eh.zeta
    M = c.M()
    for k in range(cfg.n_users):
        h = ch.legit[k]
        sig = c.W(k).quad(h) - s2
        c.b.psd(bmat([[c.rho[k], ssp], [ssp, sig]]), f"sinr_{k + 1}")
        om = np.sqrt(c.omega[k])
        c.b.psd(bmat([[zeta * (1.0 - c.rho[k]), om], [om, M.quad(h) + s2]]), f"eh_{k + 1}")
    return c.finish()


def bounded_sinr_block(W, h, rho, lam, eps, sigma2_s, sigma_sp):
    """Scaled S-procedure block for the worst-case SINR constraint.

    Congruent to the textbook form via ``diag(1, 1, eps*I)``; stays well
    defined at ``eps = 0``. Accepts numeric arrays or :class:`Affine`.
    """
    hc = _col(h)
    n = hc.shape[0]
    Wh = W @ hc
    top = hc.conj().T @ Wh
    corner = top - sigma2_s - lam
    return bmat(
        [
            [rho, sigma_sp, np.zeros((1, n))],
            [sigma_sp, corner, eps * _ct(Wh)],
            [np.zeros((n, 1)), eps * Wh, (eps**2) * W + lam * np.eye(n)],
        ]
    )


def bounded_eh_block(M, h, rho, t, eps, sigma2_s, omega, zeta):
    """Scaled S-procedure block for the worst-case harvesting constraint."""
    hc = _col(h)
    n = hc.shape[0]
    Mh = M @ hc
    top = hc.conj().T @ Mh
    corner = top + sigma2_s - t
    om = np.sqrt(omega)
    return bmat(
        [
            [zeta * (1.0 - rho), om, np.zeros((1, n))],
            [om, corner, eps * _ct(Mh)],
            [np.zeros((n, 1)), eps * Mh, (eps**2) * M + t * np.eye(n)],
        ]
    )


def build_bounded_robust(cfg: ScenarioConfig, ch: ChannelSet) -> ConicProgram:
    """Worst-case design over ``||e_k|| <= eps_k`` via the S-procedure."""
    _check_k(cfg)
    if cfg.uncertainty.kind not in ("bounded", "none"):
        raise ValueError("bounded design needs a bounded uncertainty model")
    eps = cfg.epsilons()
    if np.any(eps < 0):
        raise ValueError("error bounds must be non-negative")
    c = _Common(cfg, ch, "bounded")
    s2, ssp = cfg.sigma2_s, np.sqrt(cfg.sigma2_sp)
    M = c.M()
    lams = [c.b.scalar(f"lambda_{k + 1}") for k in range(cfg.n_users)]
    ts = [c.b.scalar(f"t_{k + 1}") for k in range(cfg.n_users)]
    for k in range(cfg.n_users):
        h = ch.legit[k]
        c.b.nonneg(lams[k], f"lambda_{k + 1}")
        c.b.nonneg(ts[k], f"t_{k + 1}")
        blk = bounded_sinr_block(c.W(k), h, c.rho[k], lams[k], float(eps[k]), s2, ssp)
        c.b.psd(blk, f"sinr_{k + 1}", force_complex=True)
        blk = bounded_eh_block(M, h, c.rho[k], ts[k], float(eps[k]), s2, c.omega[k], cfg.eh.zeta)
        c.b.psd(blk, f"eh_{k + 1}", force_complex=True)
    prog = c.finish()
    prog.meta["epsilon"] = [float(e) for e in eps]
    return prog


def _outage_coefs(p: float):
    if not 0 < p <= 1:
        raise ValueError(f"outage probability must lie in (0, 1], got {p}")
    return np.sqrt(-2.0 * np.log(p)), np.log(p)


def bernstein_lower_to_cones(builder: ProgramBuilder, B, r, s, p: float, x, y, label: str):
    """Safe convex form of ``Prob{e^H B e + 2 Re(e^H r) + s >= 0} >= 1 - p``.

    ``e ~ CN(0, I)``. Emits the SOC ``||[vec B; sqrt2 r]|| <= x``, the PSD
    block ``y I + B >= 0`` and ``y >= 0``; returns the affine scalar
    ``tr(B) - sqrt(-2 ln p) x + ln(p) y`` which the caller adds to ``s`` and
    constrains (directly or inside a Schur block).
    """
    a, lnp = _outage_coefs(p)
    B = Affine.lift(B)
    n = B.shape[0]
    r = Affine.lift(r).reshape(-1)
    builder.soc(x, concat([B, np.sqrt(2.0) * r]), f"{label}_soc")
    builder.psd(y * np.eye(n) + B, f"{label}_psd")
    builder.nonneg(y, f"{label}_y")
    f = B.trace().real - a * x + lnp * y
    if s is not None:
        builder.nonneg(f + s, f"{label}_lin")
    return f


def build_statistical_robust(cfg: ScenarioConfig, ch: ChannelSet) -> ConicProgram:
    """Outage-constrained design with ``e_k ~ CN(0, Theta_k)`` (Bernstein bound)."""
    _check_k(cfg)
    if cfg.uncertainty.kind not in ("statistical", "none"):
        raise ValueError("statistical design needs a statistical uncertainty model")
    _outage_coefs(cfg.outage_p)
    _outage_coefs(cfg.outage_q)
    thetas = cfg.thetas()
    roots = []
    for k, th in enumerate(thetas):
        th = np.asarray(th, dtype=complex)
        if th.shape != (cfg.n_t, cfg.n_t):
            raise ValueError(f"covariance of user {k + 1} must be {cfg.n_t}x{cfg.n_t}")
        scale = max(1.0, float(np.max(np.abs(th))))
        if not np.allclose(th, th.conj().T, atol=1e-12 * scale) or min_eigenvalue(th) < -1e-12 * scale:
            raise ValueError(f"covariance of user {k + 1} is not positive semidefinite")
        roots.append(psd_sqrt(th))

    c = _Common(cfg, ch, "statistical")
    b = c.b
    s2, ssp = cfg.sigma2_s, np.sqrt(cfg.sigma2_sp)
    zeta = cfg.eh.zeta
    M = c.M()
    for k in range(cfg.n_users):
        h = ch.legit[k]
        R = roots[k]
        hc = _col(h)
        x = b.scalar(f"x_{k + 1}")
        y = b.scalar(f"y_{k + 1}")
        m = b.scalar(f"m_{k + 1}")
        nn = b.scalar(f"n_{k + 1}")

        W = c.W(k)
        Bk = R @ W @ R
        rk = R @ W @ hc
        f = bernstein_lower_to_cones(b, Bk, rk, None, cfg.outage_p, x, y, f"sinr_out_{k + 1}")
        b.psd(bmat([[f + W.quad(h) - s2, ssp], [ssp, c.rho[k]]]), f"sinr_{k + 1}")

        Ek = R @ M @ R
        gk = R @ M @ hc
        g = bernstein_lower_to_cones(b, Ek, gk, None, cfg.outage_q, m, nn, f"eh_out_{k + 1}")
        om = np.sqrt(c.omega[k])
        b.psd(bmat([[g + M.quad(h) + s2, om], [om, zeta * (1.0 - c.rho[k])]]), f"eh_{k + 1}")
    prog = c.finish()
    prog.meta["outage"] = [cfg.outage_p, cfg.outage_q]
    return prog


def build_design(design: str, cfg: ScenarioConfig, ch: ChannelSet) -> ConicProgram:
    if design == "perfect":
        return build_perfect_csi(cfg, ch)
    if design == "bounded":
        return build_bounded_robust(cfg, ch)
    if design == "statistical":
        return build_statistical_robust(cfg, ch)
    raise ValueError(f"unknown design {design!r}; choose from {DESIGNS}")
