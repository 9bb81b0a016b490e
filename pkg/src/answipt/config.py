"""Scenario parameters and unit conversions.

All powers are stored in watts. dBm only appears at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def watts_to_dbm(p: float) -> float:
    return 10.0 * np.log10(p) + 30.0


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class EHParams:
    """Parametric (logistic) energy-harvesting model of one receiver.

    M is the saturation DC power in W, ``a`` the charging rate in 1/W, ``b``
    the turn-on power in W and ``zeta`` the splitter efficiency.
    """

    M: float = dbm_to_watts(10.0)
    a: float = 150.0
    b: float = 0.024
    zeta: float = 1.0

    def __post_init__(self):
        if not (self.M > 0 and self.a > 0 and self.b > 0):
            raise ValueError("EH parameters M, a, b must be positive")
        if not 0 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0, 1]")

    @property
    def omega(self) -> float:
        """Logistic offset 1 / (1 + exp(a b)); always in (0, 1/2)."""
        return 1.0 / (1.0 + np.exp(self.a * self.b))


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    """Channel-error model for the legitimate users.

    ``kind`` is ``"none"``, ``"bounded"`` (``epsilon`` holds per-user norm
    bounds) or ``"statistical"`` (``theta`` holds per-user covariances).
    """

    kind: str = "none"
    epsilon: tuple = ()
    theta: tuple = ()

    def __post_init__(self):
        if self.kind not in ("none", "bounded", "statistical"):
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")
        if any(e < 0 for e in self.epsilon):
            raise ValueError("error bounds must be non-negative")

    @classmethod
    def bounded(cls, epsilon) -> "UncertaintyModel":
        return cls("bounded", epsilon=tuple(float(e) for e in epsilon))

    @classmethod
    def statistical(cls, theta) -> "UncertaintyModel":
        return cls("statistical", theta=tuple(np.asarray(t, dtype=complex) for t in theta))


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and design parameters of one problem instance.

    Defaults follow the simulation setup of the reference system: three users
    at 10/14/18 m, four antennas, 30 dBm budget, M = 10 dBm, a = 150,
    b = 0.024, 8 dBm harvesting target and 10 % outage levels. Noise powers
    and the SINR target are not fixed by that setup and are configurable.
    """

    n_t: int = 4
    n_users: int = 3
    gamma: float = db_to_linear(4.0)
    e_bar: float = dbm_to_watts(8.0)
    p_total: float = dbm_to_watts(30.0)
    sigma2_s: float = dbm_to_watts(-50.0)
    sigma2_sp: float = dbm_to_watts(-50.0)
    sigma2_e: float = dbm_to_watts(-50.0)
    eh: EHParams = field(default_factory=EHParams)
    eh_model: str = "nonlinear"
    eta: float = 1.0
    uncertainty: UncertaintyModel = field(default_factory=UncertaintyModel)
    outage_p: float = 0.1
    outage_q: float = 0.1
    rho_min: float = 1e-6
    gamma_per_user: Optional[tuple] = None
    e_bar_per_user: Optional[tuple] = None

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("need at least one legitimate user")
        if self.n_t < 1:
            raise ValueError("need at least one transmit antenna")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.p_total <= 0:
            raise ValueError("p_total must be positive")
        if min(self.sigma2_s, self.sigma2_sp, self.sigma2_e) <= 0:
            raise ValueError("noise powers must be positive")
        if self.e_bar <= 0:
            raise ValueError("e_bar must be positive")
        if self.eh_model not in ("nonlinear", "linear"):
            raise ValueError(f"unknown EH model {self.eh_model!r}")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        for name in ("outage_p", "outage_q"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 0 < self.rho_min < 1:
            raise ValueError("rho_min must lie in (0, 1)")

    def gamma_k(self, k: int) -> float:
        return self.gamma if self.gamma_per_user is None else float(self.gamma_per_user[k])

    def e_bar_k(self, k: int) -> float:
        return self.e_bar if self.e_bar_per_user is None else float(self.e_bar_per_user[k])

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def epsilons(self) -> np.ndarray:
        u = self.uncertainty
        if u.kind != "bounded":
            return np.zeros(self.n_users)
        eps = np.broadcast_to(np.asarray(u.epsilon, dtype=float), (self.n_users,))
        return np.array(eps)

    def thetas(self) -> list:
        u = self.uncertainty
        if u.kind != "statistical":
            return [np.zeros((self.n_t, self.n_t), complex)] * self.n_users
        th = list(u.theta)
        if len(th) == 1:
            th = th * self.n_users
        if len(th) != self.n_users:
            raise ValueError("need one covariance per user")
        return th


def bounded_scenario(eps2: float, **kw) -> ScenarioConfig:
    """Scenario with a common squared error bound ``eps2`` for all users."""
    cfg = ScenarioConfig(**kw)
    eps = np.sqrt(eps2)
    return cfg.with_(uncertainty=UncertaintyModel.bounded([eps] * cfg.n_users))


def statistical_scenario(eps2: float, **kw) -> ScenarioConfig:
    """Scenario with covariance ``eps2 * I`` for every user's channel error."""
    cfg = ScenarioConfig(**kw)
    theta = eps2 * np.eye(cfg.n_t)
    return cfg.with_(uncertainty=UncertaintyModel.statistical([theta] * cfg.n_users))
