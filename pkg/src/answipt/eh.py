"""Energy-harvesting models: logistic (non-linear) and linear baseline."""

from __future__ import annotations

import numpy as np

from .config import EHParams, ScenarioConfig


class SaturationError(ValueError):
    """Harvesting target at or above the circuit's saturation power."""


def received_rf_power(h, Qs, V, rho: float, sigma2: float, zeta: float) -> float:
    """RF power routed to the harvester of a power-splitting receiver."""
    if not 0 < rho <= 1:
        raise ValueError(f"power-splitting ratio must lie in (0, 1], got {rho}")
    h = np.asarray(h, dtype=complex)
    total = sum(np.real(h.conj() @ Q @ h) for Q in Qs)
    total += np.real(h.conj() @ V @ h)
    return float(zeta * (1.0 - rho) * (total + sigma2))


def _logistic(P, p: EHParams):
    return p.M / (1.0 + np.exp(-p.a * (P - p.b)))


def nonlinear_eh_output(P, p: EHParams):
    """DC output of the logistic model, normalised so that zero input gives zero."""
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise ValueError("input power must be non-negative")
    om = p.omega
    out = (_logistic(P, p) - p.M * om) / (1.0 - om)
    return float(out) if out.ndim == 0 else out


def required_input_power(e_target: float, p: EHParams) -> float:
    """Smallest RF input power whose logistic DC output reaches ``e_target``."""
    if e_target <= 0:
        raise ValueError("harvesting target must be positive")
    if e_target >= p.M:
        raise SaturationError(
            f"harvesting target {e_target:.6g} W is not below the saturation "
            f"power M = {p.M:.6g} W of the non-linear EH model"
        )
    om = p.omega
    denom = e_target + (p.M - e_target) * om
    assert denom < p.M, "log argument must stay positive; check power units"
    return float(p.b - np.log(p.M / denom - 1.0) / p.a)


def linear_eh_output(P, eta: float):
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise ValueError("input power must be non-negative")
    out = eta * P
    return float(out) if out.ndim == 0 else out


def harvested_power(P, cfg: ScenarioConfig):
    """DC output for input ``P`` under the scenario's EH model."""
    if cfg.eh_model == "linear":
        return linear_eh_output(P, cfg.eta)
    return nonlinear_eh_output(P, cfg.eh)


def required_power(cfg: ScenarioConfig, k: int = 0) -> float:
    """Input power user ``k`` must receive to meet its harvesting target."""
    target = cfg.e_bar_k(k)
    if cfg.eh_model == "linear":
        if target <= 0:
            raise ValueError("harvesting target must be positive")
        return target / cfg.eta
    return required_input_power(target, cfg.eh)
