import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from answipt.channels import ChannelSet
from answipt.config import ScenarioConfig, UncertaintyModel, db_to_linear, dbm_to_watts
from answipt.conic import ProgramBuilder
from answipt.eh import SaturationError
from answipt.evaluation import CERTIFY, ExperimentConfig, trial_channels
from answipt.problems import (
    bernstein_lower_to_cones,
    bounded_sinr_block,
    build_bounded_robust,
    build_design,
    build_perfect_csi,
    build_statistical_robust,
    m_matrix,
    w_matrix,
)
from answipt.conic import program_stats
from answipt.solver import OPTIMAL, PRIMAL_INFEASIBLE, solve

from support import assign, random_hermitian, scenario_for, slack

# sqrt(-2 ln 0.1), 50-digit mpmath
BERNSTEIN_A = 2.1459660262893472


def default_channels(seed=7, n_t=4):
    return trial_channels(ExperimentConfig(), n_t, seed)


def test_w_and_m_matrix_examples():
    I = np.eye(2)
    Qs = [I, 2 * I]
    np.testing.assert_allclose(w_matrix(Qs, 3 * I, 0, 2.0), -4.5 * I)
    np.testing.assert_allclose(w_matrix(Qs, 3 * I, 1, 2.0), (1 - 1 - 3) * I)
    np.testing.assert_allclose(m_matrix(Qs, 3 * I), 6 * I)


def test_program_sizes():
    ch = default_channels()
    base = ScenarioConfig()
    perfect = program_stats(build_design("perfect", base, ch))
    assert perfect.psd_count(8) == 4 and perfect.psd_count(2) == 6
    assert perfect.n_lp == 7 and perfect.soc_dims == ()
    bounded = program_stats(build_design("bounded", scenario_for(base, "bounded", 0.01), ch))
    assert bounded.psd_count(12) == 6 and bounded.psd_count(8) == 4 and bounded.psd_count(2) == 0
    assert bounded.n_lp == 7 + 6
    stat = program_stats(build_design("statistical", scenario_for(base, "statistical", 0.01), ch))
    # t, vec of a 4x4 complex matrix (32 reals), sqrt2 * 4 complex entries (8 reals)
    assert stat.soc_dims == (41,) * 6
    assert stat.psd_count(8) == 4 + 6 and stat.psd_count(2) == 6
    assert stat.n_lp == 7 + 6


# -- block faithfulness against an independent dense assembly --------------


def random_point(prog, rng, n):
    vals = {}
    for name, info in prog.variables.items():
        if info.kind == "scalar":
            vals[name] = rng.uniform(0.05, 0.95)
        else:
            vals[name] = random_hermitian(rng, n)
    return vals, assign(prog, vals)


def user_mats(vals, cfg, k):
    Qs = [vals[f"Q_{i + 1}"] for i in range(cfg.n_users)]
    V = vals["V"]
    W = Qs[k] / cfg.gamma - sum(Q for i, Q in enumerate(Qs) if i != k) - V
    M = sum(Qs) + V
    return W, M


@pytest.mark.parametrize("seed", range(3))
def test_perfect_blocks_match_dense(seed):
    rng = np.random.default_rng(seed)
    cfg = ScenarioConfig(gamma=db_to_linear(3.0))
    ch = default_channels(seed)
    prog = build_perfect_csi(cfg, ch)
    vals, x = random_point(prog, rng, cfg.n_t)
    s2, sp, om = cfg.sigma2_s, np.sqrt(cfg.sigma2_sp), np.sqrt(prog.meta["omega"][0])
    for k in range(cfg.n_users):
        h = ch.legit[k]
        W, M = user_mats(vals, cfg, k)
        rho = vals[f"rho_{k + 1}"]
        want = np.array([[rho, sp], [sp, np.real(h.conj() @ W @ h) - s2]])
        np.testing.assert_allclose(slack(prog, x, f"sinr_{k + 1}"), want, rtol=1e-12, atol=1e-14)
        want = np.array([[1 - rho, om], [om, np.real(h.conj() @ M @ h) + s2]])
        np.testing.assert_allclose(slack(prog, x, f"eh_{k + 1}"), want, rtol=1e-12, atol=1e-14)
    total = sum(np.trace(vals[n]).real for n in prog.variables if n[0] in "QV")
    assert slack(prog, x, "budget")[0] == pytest.approx(cfg.p_total - total)
    assert slack(prog, x, "rho_hi_2")[0] == pytest.approx(1 - vals["rho_2"])
    assert prog.objective(x) == pytest.approx(np.trace(vals["V"]).real)


@pytest.mark.parametrize("eps2", [0.01, 0.002])
def test_bounded_blocks_congruent_to_textbook_form(eps2):
    rng = np.random.default_rng(11)
    cfg = scenario_for(ScenarioConfig(), "bounded", eps2)
    ch = default_channels(3)
    prog = build_bounded_robust(cfg, ch)
    vals, x = random_point(prog, rng, cfg.n_t)
    n, eps = cfg.n_t, np.sqrt(eps2)
    D = np.diag(np.r_[1.0, 1.0, np.full(n, eps)])
    s2, sp, om = cfg.sigma2_s, np.sqrt(cfg.sigma2_sp), np.sqrt(prog.meta["omega"][0])
    for k in range(cfg.n_users):
        h = ch.legit[k].reshape(-1, 1)
        W, M = user_mats(vals, cfg, k)
        rho, lam, t = vals[f"rho_{k + 1}"], vals[f"lambda_{k + 1}"], vals[f"t_{k + 1}"]
        P = np.zeros((n + 2, n + 2), complex)
        P[0, 0], P[0, 1], P[1, 0] = rho, sp, sp
        P[1, 1] = (h.conj().T @ W @ h).item() - s2 - lam
        P[1, 2:], P[2:, 1] = (h.conj().T @ W).ravel(), (W @ h).ravel()
        P[2:, 2:] = W + lam / eps2 * np.eye(n)
        np.testing.assert_allclose(slack(prog, x, f"sinr_{k + 1}"), D @ P @ D, rtol=1e-10, atol=1e-13)
        P = np.zeros((n + 2, n + 2), complex)
        P[0, 0], P[0, 1], P[1, 0] = 1 - rho, om, om
        P[1, 1] = (h.conj().T @ M @ h).item() + s2 - t
        P[1, 2:], P[2:, 1] = (h.conj().T @ M).ravel(), (M @ h).ravel()
        P[2:, 2:] = M + t / eps2 * np.eye(n)
        np.testing.assert_allclose(slack(prog, x, f"eh_{k + 1}"), D @ P @ D, rtol=1e-10, atol=1e-13)


def test_statistical_blocks_match_dense():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    theta = 0.01 * (A @ A.conj().T) / 4
    cfg = ScenarioConfig(uncertainty=UncertaintyModel.statistical([theta] * 3), outage_p=0.05)
    ch = default_channels(4)
    prog = build_statistical_robust(cfg, ch)
    vals, x = random_point(prog, rng, cfg.n_t)
    w, U = np.linalg.eigh(theta)
    R = U @ np.diag(np.sqrt(w)) @ U.conj().T
    s2, sp = cfg.sigma2_s, np.sqrt(cfg.sigma2_sp)
    a, lnp = np.sqrt(-2 * np.log(0.05)), np.log(0.05)
    for k in range(cfg.n_users):
        h = ch.legit[k]
        W, _ = user_mats(vals, cfg, k)
        B = R @ W @ R
        r = R @ W @ h
        xk, yk = vals[f"x_{k + 1}"], vals[f"y_{k + 1}"]
        soc = slack(prog, x, f"sinr_out_{k + 1}_soc")
        assert soc[0] == pytest.approx(xk)
        want_norm = np.sqrt(np.sum(np.abs(B) ** 2) + 2 * np.sum(np.abs(r) ** 2))
        assert np.linalg.norm(soc[1:]) == pytest.approx(want_norm, rel=1e-10)
        np.testing.assert_allclose(slack(prog, x, f"sinr_out_{k + 1}_psd"), yk * np.eye(4) + B, atol=1e-13)
        f = np.trace(B).real - a * xk + lnp * yk
        want = np.array([[f + np.real(h.conj() @ W @ h) - s2, sp], [sp, vals[f"rho_{k + 1}"]]])
        np.testing.assert_allclose(slack(prog, x, f"sinr_{k + 1}"), want, rtol=1e-10, atol=1e-13)


def test_sinr_block_equivalent_to_fractional_sinr():
    rng = np.random.default_rng(2)
    cfg = ScenarioConfig(n_t=3, n_users=2, gamma=2.0, sigma2_s=0.05, sigma2_sp=0.02)
    checked = agree = 0
    for c in range(20):
        ch = ChannelSet(
            legit=tuple(rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in range(2)),
            eav=(),
            user_distances=(10.0, 10.0),
            eav_distances=(),
        )
        prog = build_perfect_csi(cfg.with_(e_bar=1e-6), ch)
        for _ in range(50):
            vals = {n: random_hermitian(rng, 3, psd=True) for n in ("Q_1", "Q_2", "V")}
            vals |= {"rho_1": rng.uniform(0.01, 1), "rho_2": rng.uniform(0.01, 1)}
            x = assign(prog, vals)
            h, rho = ch.legit[0], vals["rho_1"]
            q = lambda X: np.real(h.conj() @ X @ h)
            sinr = q(vals["Q_1"]) / (q(vals["Q_2"]) + q(vals["V"]) + cfg.sigma2_s + cfg.sigma2_sp / rho)
            if abs(sinr / cfg.gamma - 1) < 1e-9:
                continue
            psd = np.linalg.eigvalsh(slack(prog, x, "sinr_1"))[0] >= 0
            checked += 1
            agree += psd == (sinr >= cfg.gamma)
    assert checked >= 990 and agree == checked


# -- S-procedure ----------------------------------------------------------


def numeric_block(blk):
    return blk.value(np.zeros(0))


@pytest.mark.parametrize("seed", range(10))
def test_s_procedure_block_is_sound(seed):
    """A PSD scaled block certifies the SINR inequality for every error in the ball."""
    rng = np.random.default_rng(seed)
    n, eps, rho, sp = 3, 0.2, rng.uniform(0.1, 1), 0.3
    W = random_hermitian(rng, n)
    h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam = max(0.0, -np.linalg.eigvalsh(eps**2 * W)[0]) + rng.uniform(0.01, 0.5)
    inner = eps**2 * W + lam * np.eye(n)
    Wh = W @ h
    worst = np.real(h.conj() @ Wh) - lam - sp**2 / rho - eps**2 * np.real(Wh.conj() @ np.linalg.solve(inner, Wh))
    s2 = worst - 1e-6
    blk = numeric_block(bounded_sinr_block(W, h, rho, lam, eps, s2, sp))
    assert np.linalg.eigvalsh(blk)[0] >= -1e-12
    E = rng.standard_normal((20_000, n)) + 1j * rng.standard_normal((20_000, n))
    E *= (eps * rng.uniform(0, 1, (20_000, 1)) ** (1 / (2 * n))) / np.linalg.norm(E, axis=1, keepdims=True)
    E[:2000] *= eps / np.linalg.norm(E[:2000], axis=1, keepdims=True)
    G = h + E
    lhs = np.real(np.einsum("ij,jk,ik->i", G.conj(), W, G)) - s2 - sp**2 / rho
    assert lhs.min() >= -1e-9


def disk_worst(w, h, eps, n_r=400, n_phi=400):
    r = np.linspace(0, eps, n_r)[:, None]
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)[None, :]
    return (w * np.abs(h + r * np.exp(1j * phi)) ** 2).min()


def best_block_eig(w, h, eps, rho, s2, sp):
    def neg(loglam):
        lam = np.exp(loglam)
        return -np.linalg.eigvalsh(numeric_block(bounded_sinr_block(np.array([[w]]), [h], rho, lam, eps, s2, sp)))[0]

    grid = np.linspace(-20, 8, 300)
    vals = [neg(g) for g in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    lam0 = -np.linalg.eigvalsh(numeric_block(bounded_sinr_block(np.array([[w]]), [h], rho, 0.0, eps, s2, sp)))[0]
    return -min(res.fun, vals[i], lam0)


def test_s_procedure_lossless_single_antenna():
    """N_T = 1: some lambda makes the block PSD exactly when the disk worst case holds."""
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(120):
        w = rng.uniform(-1, 2)
        h = complex(rng.standard_normal(), rng.standard_normal())
        eps, rho, sp = rng.uniform(0, 1), rng.uniform(0.2, 1), 0.3
        s2 = rng.uniform(-0.5, 1.5)
        margin = disk_worst(w, h, eps) - s2 - sp**2 / rho
        if abs(margin) < 2e-2:
            continue
        checked += 1
        assert (best_block_eig(w, h, eps, rho, s2, sp) >= -1e-10) == (margin > 0), (w, h, eps, margin)
    assert checked >= 70


# -- K = 1, N_T = 1 brute force -------------------------------------------


SCALAR_BASE = ScenarioConfig(
    n_t=1, n_users=1, sigma2_s=0.01, sigma2_sp=0.01, eh_model="linear", eta=1.0, e_bar=0.1, gamma=1.0
)


def scalar_channels(g):
    return ChannelSet(legit=(np.array([np.sqrt(g)]),), eav=(), user_distances=(10.0,), eav_distances=())


def grid_optimum(cfg, g, n=3000):
    """max v over a (q, rho) grid with v solved exactly; -inf when nothing is feasible."""
    P, gam, s2, ssp, om = cfg.p_total, cfg.gamma, cfg.sigma2_s, cfg.sigma2_sp, cfg.e_bar / cfg.eta
    q = np.linspace(0, P, n)[:, None]
    rho = np.linspace(cfg.rho_min, 1, n)[None, :]
    v_hi = np.minimum(P - q, (q * g / gam - s2 - ssp / rho) / g)
    with np.errstate(divide="ignore"):
        v_lo = np.maximum(0.0, (om / (1 - rho) - s2) / g - q)
    ok = v_hi >= v_lo
    return v_hi[ok].max() if ok.any() else -np.inf


@pytest.mark.parametrize(
    "g,P,gamma",
    [(0.5, 1.0, 1.0), (1.0, 1.0, 3.0), (0.3, 2.0, 0.5), (0.2, 1.0, 1.0), (0.5, 0.2, 4.0), (2.0, 0.5, 2.0)],
)
def test_scalar_case_matches_grid(g, P, gamma):
    cfg = SCALAR_BASE.with_(p_total=P, gamma=gamma)
    ref = grid_optimum(cfg, g)
    res = solve(build_perfect_csi(cfg, scalar_channels(g)))
    if np.isfinite(ref):
        assert res.status == OPTIMAL
        assert res.objective == pytest.approx(ref, abs=2e-3 * P)
        assert res.objective >= ref - 1e-9
    else:
        assert res.status == PRIMAL_INFEASIBLE


def test_budget_below_minimum_is_infeasible():
    g = 0.5
    lo, hi = 1e-3, 10.0
    for _ in range(40):
        mid = np.sqrt(lo * hi)
        lo, hi = (mid, hi) if not np.isfinite(grid_optimum(SCALAR_BASE.with_(p_total=mid), g, 800)) else (lo, mid)
    for scale, want in ((0.9, PRIMAL_INFEASIBLE), (1.1, OPTIMAL)):
        res = solve(build_perfect_csi(SCALAR_BASE.with_(p_total=scale * hi), scalar_channels(g)))
        assert res.status == want


def test_vanishing_targets_leave_whole_budget_to_noise():
    gaps = []
    for gamma in (1e-2, 1e-3, 1e-4):
        cfg = ScenarioConfig(gamma=gamma, eh_model="linear", e_bar=1e-9)
        res = solve(build_perfect_csi(cfg, default_channels()))
        assert res.optimal
        gaps.append(cfg.p_total - res.objective)
    assert gaps[0] > gaps[1] > gaps[2] >= 0
    assert gaps[2] < 1e-8 * cfg.p_total


# -- reductions and monotonicity ------------------------------------------


def feasible_seeds(count, n_t=4):
    base = ScenarioConfig()
    out, seed = [], 0
    while len(out) < count:
        ch = default_channels(seed, n_t)
        if solve(build_design("statistical", scenario_for(base, "statistical", 0.01), ch)).optimal:
            out.append(seed)
        seed += 1
    return out


SEEDS = feasible_seeds(4)


@pytest.mark.parametrize("seed", SEEDS)
def test_zero_uncertainty_reduces_to_perfect(seed):
    ch = default_channels(seed)
    base = ScenarioConfig()
    ref = solve(build_perfect_csi(base, ch), CERTIFY).objective
    for design in ("bounded", "statistical"):
        res = solve(build_design(design, scenario_for(base, design, 0.0), ch), CERTIFY)
        assert res.objective == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("seed", SEEDS)
def test_robust_objectives_are_ordered(seed):
    ch = default_channels(seed)
    base = ScenarioConfig()
    ref = solve(build_perfect_csi(base, ch), CERTIFY).objective
    prev = ref
    for eps2 in (0.001, 0.005, 0.01):
        res = solve(build_design("bounded", scenario_for(base, "bounded", eps2), ch), CERTIFY)
        val = res.objective if res.optimal else -np.inf
        assert val <= prev + 1e-7 * ref
        prev = val
    stat = scenario_for(base, "statistical", 0.01)
    loose = solve(build_design("statistical", stat, ch), CERTIFY)
    tight = solve(build_design("statistical", stat.with_(outage_p=0.01, outage_q=0.01), ch), CERTIFY)
    assert loose.optimal and loose.objective <= ref + 1e-7 * ref
    assert (tight.objective if tight.optimal else -np.inf) <= loose.objective + 1e-7 * ref


# -- Bernstein lowering ---------------------------------------------------


def bernstein_program(B, r, p):
    b = ProgramBuilder()
    s, x, y = b.scalar("s"), b.scalar("x"), b.scalar("y")
    bernstein_lower_to_cones(b, B, r, s, p, x, y, "out")
    return b.build(s, sense="min")


def test_bernstein_zero_matrix():
    prog = bernstein_program(np.zeros((3, 3)), np.zeros(3), 0.1)
    res = solve(prog, CERTIFY)
    d = prog.decode(res.x)
    assert res.optimal
    assert abs(d["x"]) < 1e-8 and abs(d["y"]) < 1e-8 and abs(d["s"]) < 1e-8


def test_bernstein_identity():
    res = solve(bernstein_program(np.eye(4), np.zeros(4), 0.1), CERTIFY)
    assert res.objective == pytest.approx(BERNSTEIN_A * 2 - 4, abs=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_bernstein_bound_is_safe(seed):
    rng = np.random.default_rng(seed)
    n, p = 4, 0.1
    B = random_hermitian(rng, n)
    r = 0.5 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    res = solve(bernstein_program(B, r, p), CERTIFY)
    s = res.objective
    E = (rng.standard_normal((100_000, n)) + 1j * rng.standard_normal((100_000, n))) / np.sqrt(2)
    val = np.real(np.einsum("ij,jk,ik->i", E.conj(), B, E)) + 2 * np.real(E.conj() @ r) + s
    assert np.mean(val >= 0) >= 1 - p


# -- input validation -----------------------------------------------------


def test_rejects_bad_inputs():
    ch = default_channels()
    with pytest.raises(ValueError, match="positive semidefinite"):
        build_statistical_robust(
            ScenarioConfig(uncertainty=UncertaintyModel.statistical([np.diag([1.0, -1.0, 1.0, 1.0])])), ch
        )
    with pytest.raises(ValueError):
        ScenarioConfig(outage_p=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(outage_q=1.5)
    with pytest.raises(ValueError):
        UncertaintyModel.bounded([-0.1])
    with pytest.raises(ValueError):
        ScenarioConfig(n_users=0)
    with pytest.raises(SaturationError):
        build_perfect_csi(ScenarioConfig(e_bar=dbm_to_watts(10.0)), ch)
    with pytest.raises(ValueError, match="users"):
        build_perfect_csi(ScenarioConfig(n_users=2), ch)
    with pytest.raises(ValueError, match="antennas"):
        build_perfect_csi(ScenarioConfig(n_t=6), ch)
    with pytest.raises(ValueError, match="unknown design"):
        build_design("robust", ScenarioConfig(), ch)
    with pytest.raises(ValueError, match="bounded uncertainty"):
        build_bounded_robust(scenario_for(ScenarioConfig(), "statistical", 0.01), ch)
