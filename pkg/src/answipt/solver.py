"""Primal-dual interior-point method for LP/SOC/PSD cone programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step, applied to

    minimize c'x  s.t.  Gx + s = h,  Ax = b,  s in K
    maximize -h'z - b'y  s.t.  G'z + A'y + c = 0,  z in K.

Everything is dense; the Newton systems are reduced to the normal matrix
``G' W^-1 W^-T G`` (bordered by ``A`` when equalities are present).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np
import scipy.linalg as sla

from .conic import ConicProgram

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverConfig:
    feastol: float = 1e-8
    reltol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.98
    inftol: float = 1e-6

    def __post_init__(self):
        if min(self.feastol, self.reltol, self.inftol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step fraction must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("need at least one iteration")


@dataclass
class SolveResult:
    """Outcome of :func:`solve`.

    For ``optimal`` the primal/dual vectors are the de-homogenised iterate.
    For the infeasibility statuses ``x``/``s`` (dual infeasible) or ``y``/``z``
    (primal infeasible) hold the normalised improving ray and
    ``certificate_residual`` its residual.
    """

    status: str
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    certificate_residual: Optional[float] = None
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# -- cone helpers --------------------------------------------------------------


class _Cones:
    """Row layout of the cone product and per-cone primitive operations."""

    def __init__(self, prog: ConicProgram):
        self.lp = []
        self.soc = []
        self.psd = []
        for b in prog.blocks:
            sl = prog.block_slice(b)
            if b.cone == "l":
                self.lp.append(sl)
            elif b.cone == "q":
                self.soc.append(sl)
            else:
                self.psd.append((sl, b.dim))
        self.m = prog.h.size
        self.degree = sum(s.stop - s.start for s in self.lp) + len(self.soc) + sum(n for _, n in self.psd)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        for sl in self.lp:
            e[sl] = 1.0
        for sl in self.soc:
            e[sl.start] = 1.0
        for sl, n in self.psd:
            e[sl] = np.eye(n).ravel()
        return e

    def min_eig(self, u) -> float:
        """Smallest Jordan eigenvalue of ``u`` over all blocks (inf if no blocks)."""
        out = np.inf
        for sl in self.lp:
            if sl.stop > sl.start:
                out = min(out, u[sl].min())
        for sl in self.soc:
            v = u[sl]
            out = min(out, v[0] - np.linalg.norm(v[1:]))
        for sl, n in self.psd:
            U = u[sl].reshape(n, n)
            out = min(out, np.linalg.eigvalsh(0.5 * (U + U.T))[0])
        return out

    def symmetrize(self, u):
        for sl, n in self.psd:
            U = u[sl].reshape(n, n)
            u[sl] = (0.5 * (U + U.T)).ravel()
        return u


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^-T s = lam``."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        self.lam = np.zeros(cones.m)
        self.d = []
        for sl in cones.lp:
            d = np.sqrt(s[sl] / z[sl])
            self.d.append(d)
            self.lam[sl] = np.sqrt(s[sl] * z[sl])
        self.soc = []
        for sl in cones.soc:
            sv, zv = s[sl], z[sl]
            sn = _jnorm(sv)
            zn = _jnorm(zv)
            if not (sn > 0 and zn > 0):
                raise FloatingPointError("SOC iterate left the cone interior")
            sb, zb = sv / sn, zv / zn
            g = np.sqrt(0.5 * (1.0 + sb @ zb))
            wb = sb.copy()
            wb[0] += zb[0]
            wb[1:] -= zb[1:]
            wb /= 2.0 * g
            eta = np.sqrt(sn / zn)
            a, q = wb[0], wb[1:]
            n = sv.size
            Wb = np.empty((n, n))
            Wb[0, 0] = a
            Wb[0, 1:] = q
            Wb[1:, 0] = q
            Wb[1:, 1:] = np.eye(n - 1) + np.outer(q, q) / (1.0 + a)
            Wbi = Wb.copy()
            Wbi[0, 1:] = -q
            Wbi[1:, 0] = -q
            W = eta * Wb
            Wi = Wbi / eta
            self.soc.append((W, Wi))
            self.lam[sl] = W @ zv
        self.psd = []
        for sl, n in cones.psd:
            S = s[sl].reshape(n, n)
            Z = z[sl].reshape(n, n)
            L1 = np.linalg.cholesky(0.5 * (S + S.T))
            L2 = np.linalg.cholesky(0.5 * (Z + Z.T))
            U, lam, Vt = np.linalg.svd(L2.T @ L1)
            if lam[-1] <= 0:
                raise FloatingPointError("PSD iterate left the cone interior")
            isq = 1.0 / np.sqrt(lam)
            r = (L1 @ Vt.T) * isq
            rti = (L2 @ U) * isq
            self.psd.append((r, rti, lam))
            self.lam[sl] = np.diag(lam).ravel()

    # W^{-T} u
    def apply_inv_t(self, u):
        u = np.asarray(u)
        out = np.empty_like(u)
        cones = self.cones
        for sl, d in zip(cones.lp, self.d):
            out[sl] = (u[sl].T / d).T if u.ndim > 1 else u[sl] / d
        for sl, (W, Wi) in zip(cones.soc, self.soc):
            out[sl] = Wi @ u[sl]
        for (sl, n), (r, rti, _) in zip(cones.psd, self.psd):
            out[sl] = _congruence(rti, u[sl], n)
        return out

    # W^T u
    def apply_t(self, u):
        out = np.empty_like(u)
        cones = self.cones
        for sl, d in zip(cones.lp, self.d):
            out[sl] = u[sl] * d
        for sl, (W, Wi) in zip(cones.soc, self.soc):
            out[sl] = W @ u[sl]
        for (sl, n), (r, rti, _) in zip(cones.psd, self.psd):
            out[sl] = (r @ u[sl].reshape(n, n) @ r.T).ravel()
        return out

    # W^{-1} u
    def apply_inv(self, u):
        out = np.empty_like(u)
        cones = self.cones
        for sl, d in zip(cones.lp, self.d):
            out[sl] = u[sl] / d
        for sl, (W, Wi) in zip(cones.soc, self.soc):
            out[sl] = Wi @ u[sl]
        for (sl, n), (r, rti, _) in zip(cones.psd, self.psd):
            out[sl] = (rti @ u[sl].reshape(n, n) @ rti.T).ravel()
        return out

    def lam_prod(self, u, v):
        """Jordan product ``u o v`` (PSD part uses the symmetrised product)."""
        out = np.empty_like(u)
        cones = self.cones
        for sl in cones.lp:
            out[sl] = u[sl] * v[sl]
        for sl in cones.soc:
            a, b = u[sl], v[sl]
            out[sl.start] = a @ b
            out[sl.start + 1 : sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        for sl, n in cones.psd:
            A = u[sl].reshape(n, n)
            B = v[sl].reshape(n, n)
            out[sl] = (0.5 * (A @ B + B @ A)).ravel()
        return out

    def lam_div(self, d):
        """Solve ``lam o u = d`` for ``u``."""
        out = np.empty_like(d)
        cones = self.cones
        lam = self.lam
        for sl in cones.lp:
            out[sl] = d[sl] / lam[sl]
        for sl in cones.soc:
            l0, l1 = lam[sl.start], lam[sl.start + 1 : sl.stop]
            d0, d1 = d[sl.start], d[sl.start + 1 : sl.stop]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * d0 - l1 @ d1) / det
            out[sl.start] = u0
            out[sl.start + 1 : sl.stop] = (d1 - u0 * l1) / l0
        for (sl, n), (_, _, lv) in zip(cones.psd, self.psd):
            D = d[sl].reshape(n, n)
            out[sl] = (2.0 * D / (lv[:, None] + lv[None, :])).ravel()
        return out

    def max_step(self, u) -> float:
        """Largest ``alpha`` with ``lam + alpha u`` in the cone (inf if unbounded)."""
        alpha = np.inf
        cones = self.cones
        lam = self.lam
        for sl in cones.lp:
            du = u[sl]
            neg = du < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-lam[sl][neg] / du[neg]))
        for sl in cones.soc:
            alpha = min(alpha, _soc_step(lam[sl], u[sl]))
        for (sl, n), (_, _, lv) in zip(cones.psd, self.psd):
            isq = 1.0 / np.sqrt(lv)
            D = u[sl].reshape(n, n)
            M = isq[:, None] * (0.5 * (D + D.T)) * isq[None, :]
            w = np.linalg.eigvalsh(M)[0]
            if w < 0:
                alpha = min(alpha, -1.0 / w)
        return alpha


def _congruence(rti, u, n):
    """``rti' U rti`` for a vectorised block ``u`` (or every column of a matrix)."""
    if u.ndim == 1:
        return (rti.T @ u.reshape(n, n) @ rti).ravel()
    k = u.shape[1]
    X = u.reshape(n, n, k)
    T = np.tensordot(rti.T, X, axes=(1, 0))
    U = np.tensordot(T, rti, axes=(1, 0))
    return U.transpose(0, 2, 1).reshape(n * n, k)


def _jnorm(v) -> float:
    q = v[0] * v[0] - v[1:] @ v[1:]
    if q <= 0 or v[0] <= 0:
        return 0.0
    return float(np.sqrt(q))


def _soc_step(lam, du) -> float:
    """Largest step keeping ``lam + a*du`` in the second-order cone."""
    a = du[0] ** 2 - du[1:] @ du[1:]
    b = lam[0] * du[0] - lam[1:] @ du[1:]
    c = lam[0] ** 2 - lam[1:] @ lam[1:]
    disc = b * b - a * c
    roots = []
    if abs(a) < 1e-300:
        if b < 0:
            roots.append(-c / (2 * b))
    elif disc >= 0:
        sq = np.sqrt(disc)
        qv = -(b + np.copysign(sq, b))
        r1 = qv / a
        r2 = c / qv if qv != 0 else np.inf
        roots += [r1, r2]
    pos = [r for r in roots if r > 0]
    step = min(pos) if pos else np.inf
    # the head may also go negative while the quadratic stays positive (lower cone)
    if du[0] < 0:
        head = -lam[0] / du[0]
        if head < step and c + 2 * b * head + a * head * head >= 0:
            step = head
    return step


# -- main loop -------------------------------------------------------------------


def solve(prog: ConicProgram, cfg: SolverConfig = SolverConfig(), log: Optional[TextIO] = None) -> SolveResult:
    """Solve ``prog``; deterministic for identical inputs."""
    c, G, h, A, b = prog.c, prog.G, prog.h, prog.A, prog.b
    n, m, p = c.size, h.size, b.size
    if G.shape != (m, n) or A.shape != (p, n):
        raise ValueError("inconsistent program dimensions")
    if p and np.linalg.matrix_rank(A) < p:
        raise ValueError("equality constraints must have full row rank")
    if np.linalg.matrix_rank(np.vstack([A, G])) < n:
        raise ValueError("[A; G] must have full column rank")
    cones = _Cones(prog)
    e = cones.identity()

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    if log is not None:
        log.write("iter\tpcost\tdcost\tgap\tpres\tdres\ttau/kappa\n")

    def kkt_factor(scal):
        Gs = scal.apply_inv_t(G)
        H = Gs.T @ Gs
        if p == 0:
            try:
                return ("chol", sla.cho_factor(H, lower=True, check_finite=False), Gs)
            except np.linalg.LinAlgError:
                pass
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H
        K[:n, n:] = A.T
        K[n:, :n] = A
        return ("lu", sla.lu_factor(K, check_finite=False), Gs)

    def kkt_solve(fac, scal, rx, ry, rz):
        # A'dy + G'dz = rx ; -A dx = ry ; G dx - W'W dz = rz.  Returns dx, dy, W dz.
        kind, F, Gs = fac
        rzt = scal.apply_inv_t(rz)
        rhs = rx + Gs.T @ rzt
        if kind == "chol":
            dx = sla.cho_solve(F, rhs, check_finite=False)
            dy = np.zeros(0)
        else:
            sol = sla.lu_solve(F, np.concatenate([rhs, -ry]), check_finite=False)
            dx, dy = sol[:n], sol[n:]
        wdz = Gs @ dx - rzt
        # one step of iterative refinement on the reduced equations
        r1 = rx - A.T @ dy - Gs.T @ wdz
        r2 = -ry - A @ dx
        if np.linalg.norm(r1) + np.linalg.norm(r2) > 0:
            if kind == "chol":
                ddx = sla.cho_solve(F, r1, check_finite=False)
                ddy = np.zeros(0)
            else:
                sol = sla.lu_solve(F, np.concatenate([r1, r2]), check_finite=False)
                ddx, ddy = sol[:n], sol[n:]
            dx = dx + ddx
            dy = dy + ddy
            wdz = wdz + Gs @ ddx
        return dx, dy, wdz

    # -- starting point
    unit = _Scaling(cones, e, e)
    try:
        fac = kkt_factor(unit)
    except (np.linalg.LinAlgError, ValueError):
        return _failure(prog, n, m, p, 0, [])
    x, y, wz = kkt_solve(fac, unit, np.zeros(n), -b, h)
    s = -wz
    _, y, z = kkt_solve(fac, unit, -c, np.zeros(p), np.zeros(m))
    for v in (s, z):
        cones.symmetrize(v)
        t = cones.min_eig(v)
        if t <= 1e-8 * max(1.0, np.linalg.norm(v)):
            v += (1.0 - t) * e
    tau, kappa = 1.0, 1.0

    history = []
    status = MAX_ITERATIONS
    cert = None
    it = 0
    pres = dres = np.inf
    relgap = np.inf
    for it in range(cfg.max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        cx, by, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by + hz
        gap = s @ z
        mu = (gap + tau * kappa) / (cones.degree + 1)
        pcost = cx / tau
        dcost = -(by + hz) / tau
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        absgap = gap / tau**2
        relgap = absgap / max(1.0, min(abs(pcost), abs(dcost)))
        pinf = np.linalg.norm(A.T @ y + G.T @ z) / resx0 / -(by + hz) if by + hz < 0 else np.inf
        dinf = (
            max(np.linalg.norm(A @ x) / resy0, np.linalg.norm(G @ x + s) / resz0) / -cx
            if cx < 0
            else np.inf
        )
        history.append(
            dict(iter=it, pcost=pcost, dcost=dcost, gap=absgap, pres=pres, dres=dres, tau=tau, kappa=kappa)
        )
        if log is not None:
            log.write(f"{it}\t{pcost:.10e}\t{dcost:.10e}\t{absgap:.3e}\t{pres:.3e}\t{dres:.3e}\t{tau / kappa:.3e}\n")

        if pres <= cfg.feastol and dres <= cfg.feastol and relgap <= cfg.reltol:
            status = OPTIMAL
            break
        if tau / kappa <= cfg.inftol:
            if pinf <= cfg.inftol:
                status, cert = PRIMAL_INFEASIBLE, pinf
                break
            if dinf <= cfg.inftol:
                status, cert = DUAL_INFEASIBLE, dinf
                break
        if it == cfg.max_iter:
            break

        try:
            scal = _Scaling(cones, s, z)
            fac = kkt_factor(scal)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            status = NUMERICAL_FAILURE
            break
        lam = scal.lam
        lamsq = scal.lam_prod(lam, lam)

        # direction for the tau column: K [x1; y1; z1] = [-c; -b; h]
        x1, y1, wz1 = kkt_solve(fac, scal, -c, -b, h)
        z1 = scal.apply_inv(wz1)
        denom = c @ x1 + b @ y1 + h @ z1 - kappa / tau

        def direction(eta, ds, dk):
            # residual of each linear row shrinks by (1 - eta)
            dx_r, dy_r, dz_r, dt_r = -eta * rx, eta * ry, -eta * rz, -eta * rt
            rz_t = dz_r - scal.apply_t(scal.lam_div(ds))
            x2, y2, wz2 = kkt_solve(fac, scal, dx_r, dy_r, rz_t)
            z2 = scal.apply_inv(wz2)
            dtau = (dt_r - dk / tau - (c @ x2 + b @ y2 + h @ z2)) / denom
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            wdz = wz2 + dtau * wz1
            dz = z2 + dtau * z1
            # take ds from the linear row so primal residuals stay consistent
            dsv = dz_r - G @ dx + h * dtau
            dst = scal.apply_inv_t(dsv)
            dkap = (dk - kappa * dtau) / tau
            return dx, dy, dz, wdz, dst, dtau, dkap, dsv

        def step_to_boundary(wdz, dst, dtau, dkap):
            a = min(scal.max_step(dst), scal.max_step(wdz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                # predictor
                aff = direction(1.0, -lamsq, -tau * kappa)
                _, _, _, wdz_a, dst_a, dtau_a, dkap_a, _ = aff
                a_aff = min(1.0, step_to_boundary(wdz_a, dst_a, dtau_a, dkap_a))
                sigma = (1.0 - a_aff) ** 3
                # corrector
                ds = -lamsq - scal.lam_prod(dst_a, wdz_a) + sigma * mu * e
                dk = -tau * kappa - dtau_a * dkap_a + sigma * mu
                dx, dy, dz, wdz, dst, dtau, dkap, dsv = direction(1.0 - sigma, ds, dk)
                alpha = min(1.0, cfg.step_fraction * step_to_boundary(wdz, dst, dtau, dkap))
            except (FloatingPointError, np.linalg.LinAlgError, ZeroDivisionError):
                status = NUMERICAL_FAILURE
                break
        if not np.isfinite(alpha) or alpha <= 0:
            status = NUMERICAL_FAILURE
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = cones.symmetrize(z + alpha * dz)
        s = cones.symmetrize(s + alpha * dsv)
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

    if status == PRIMAL_INFEASIBLE:
        scale = -(by + hz)
        return SolveResult(
            status, np.full(n, np.nan), np.full(m, np.nan), y / scale, z / scale,
            np.nan, np.nan, np.nan, pres, dres, np.nan, it, cert, history,
        )
    if status == DUAL_INFEASIBLE:
        scale = -cx
        return SolveResult(
            status, x / scale, s / scale, np.full(p, np.nan), np.full(m, np.nan),
            np.nan, np.nan, np.nan, pres, dres, np.nan, it, cert, history,
        )
    xs, ss, ys, zs = x / tau, s / tau, y / tau, z / tau
    pobj = float(c @ xs)
    dobj = float(-(b @ ys + h @ zs))
    return SolveResult(
        status, xs, ss, ys, zs,
        objective=prog.objective_sign * pobj,
        primal_objective=pobj,
        dual_objective=dobj,
        primal_residual=pres,
        dual_residual=dres,
        gap=float(ss @ zs),
        iterations=it,
        history=history,
    )


def _failure(prog, n, m, p, it, history):
    nan = np.nan
    return SolveResult(
        NUMERICAL_FAILURE, np.full(n, nan), np.full(m, nan), np.full(p, nan), np.full(m, nan),
        nan, nan, nan, nan, nan, nan, it, None, history,
    )


# -- residual evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    gap: float
    min_primal_margin: float
    min_dual_margin: float
    block_violation: dict


def cone_distance(u, cone: str, dim: int) -> float:
    """Euclidean distance from ``u`` to the cone (0 inside)."""
    u = np.asarray(u, dtype=float)
    if cone == "l":
        return float(np.linalg.norm(np.minimum(u, 0.0)))
    if cone == "q":
        t, v = u[0], u[1:]
        nv = np.linalg.norm(v)
        if nv <= t:
            return 0.0
        if nv <= -t:
            return float(np.linalg.norm(u))
        a = 0.5 * (t + nv)
        proj = np.concatenate([[a], a * v / nv])
        return float(np.linalg.norm(u - proj))
    U = u.reshape(dim, dim)
    w = np.linalg.eigvalsh(0.5 * (U + U.T))
    return float(np.linalg.norm(np.minimum(w, 0.0)))


def _margin(u, cone, dim) -> float:
    if cone == "l":
        return float(np.min(u)) if u.size else np.inf
    if cone == "q":
        return float(u[0] - np.linalg.norm(u[1:]))
    U = u.reshape(dim, dim)
    return float(np.linalg.eigvalsh(0.5 * (U + U.T))[0])


def residuals(prog: ConicProgram, x, z=None, y=None) -> Residuals:
    """Constraint violations of a primal (and optionally dual) assignment.

    The primal residual combines ``||Ax - b||`` with the distance of
    ``h - Gx`` to the cone; the dual residual combines ``||G'z + A'y + c||``
    with the distance of ``z`` to the cone.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (prog.n_vars,):
        raise ValueError(f"expected {prog.n_vars} primal values, got shape {x.shape}")
    s = prog.h - prog.G @ x
    viol = {}
    pmarg = np.inf
    p2 = float(np.sum((prog.A @ x - prog.b) ** 2)) if prog.A.size else 0.0
    for blk in prog.blocks:
        u = s[prog.block_slice(blk)]
        d = cone_distance(u, blk.cone, blk.dim)
        viol[blk.label] = d
        p2 += d * d
        pmarg = min(pmarg, _margin(u, blk.cone, blk.dim))
    dual = np.nan
    gap = np.nan
    dmarg = np.nan
    if z is not None:
        z = np.asarray(z, dtype=float)
        if z.shape != prog.h.shape:
            raise ValueError("dual vector has the wrong length")
        yv = np.zeros(prog.b.size) if y is None else np.asarray(y, dtype=float)
        r = prog.G.T @ z + prog.A.T @ yv + prog.c
        d2 = float(r @ r)
        dmarg = np.inf
        for blk in prog.blocks:
            u = z[prog.block_slice(blk)]
            dd = cone_distance(u, blk.cone, blk.dim)
            d2 += dd * dd
            dmarg = min(dmarg, _margin(u, blk.cone, blk.dim))
        dual = float(np.sqrt(d2))
        gap = float(prog.c @ x + prog.h @ z + prog.b @ yv)
    return Residuals(float(np.sqrt(p2)), dual, gap, pmarg, dmarg, viol)
