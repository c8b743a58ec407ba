"""Entropies, Eve-information bounds and secret key rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

from .measurement import ObservedStats

TrustMode = Literal["untrusted", "trusted"]

S_MAX = 2 * math.sqrt(2)
S_TOLERANCE = 1e-9
CRITICAL_EFFICIENCY = 2 / (1 + math.sqrt(2))


def binary_entropy(x: float) -> float:
    """h(x) = -x log2 x - (1-x) log2(1-x), with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        if -1e-12 < x < 0.0 or 1.0 < x < 1 + 1e-12:
            x = min(max(x, 0.0), 1.0)
        else:
            raise ValueError(f"binary entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    # log1p keeps full precision for the small-probability side.
    return -(x * math.log2(x) + (1 - x) * math.log1p(-x) / math.log(2))


def chsh_chi(S: float) -> float:
    """Eve's information under collective attacks for CHSH value S (clamped to [2, 2 sqrt2])."""
    if S > S_MAX + S_TOLERANCE:
        raise ValueError(f"CHSH value {S} exceeds Tsirelson's bound")
    if S <= 2.0:
        return 1.0
    S = min(S, S_MAX)
    root = math.sqrt(max((S / 2) ** 2 - 1, 0.0))
    return binary_entropy((1 + root) / 2)


def eve_info_untrusted(S: float, mu: float) -> float:
    """Bound (1 - mu) chi((S - 4 mu)/(1 - mu)) + mu, vacuous (1) once mu >= 1."""
    if mu < 0:
        raise ValueError(f"negative inconclusive ratio {mu}")
    if mu >= 1.0:
        return 1.0
    arg = (S - 4 * mu) / (1 - mu)
    if arg > S_MAX:
        # Tolerate rounding overshoot only.
        if arg > S_MAX + S_TOLERANCE:
            raise ValueError(f"effective CHSH value {arg} exceeds Tsirelson's bound")
        arg = S_MAX
    return min((1 - mu) * chsh_chi(arg) + mu, 1.0)


def eve_info_trusted(
    S_tilde: float, mu_tilde: float, mu_cc: float, mu_tilde_cc: float, eta_d: float
) -> float:
    """Single-photon events get the untrusted bound, the multi-photon remainder is given to Eve."""
    single = eta_d**2 * mu_tilde_cc
    if single > mu_cc + 1e-12:
        raise ValueError("inconsistent statistics: eta_d^2 mu~_cc exceeds mu_cc")
    if mu_cc <= 0:
        return 1.0
    frac = min(single / mu_cc, 1.0)
    return frac * eve_info_untrusted(S_tilde, mu_tilde) + (1 - frac)


@dataclass(frozen=True)
class KeyRateResult:
    """Key rate and the quantities that produced it.

    ``secret_fraction`` is ``1 - h(Q) - I_E`` and may be negative; the rates
    are clamped at zero.
    """

    mode: str
    K: float
    K_per_pulse: float
    secret_fraction: float
    Q: float
    S: float
    I_E: float
    mu: float
    mu_cc: float
    mu_ci: float
    mu_ic: float
    P_S: float
    P_H: float
    r: float

    @property
    def feasible(self) -> bool:
        return self.secret_fraction > 0

    def recompute(self) -> float:
        return self.r * self.P_S**2 * self.P_H * self.mu_cc * max(self.secret_fraction, 0.0)


def key_rate(mode: TrustMode, stats: ObservedStats, r: float, P_S: float, P_H: float) -> KeyRateResult:
    """K = r P_S^2 P_H mu_cc (1 - h(Q) - I_E)."""
    if mode == "untrusted":
        I_E = eve_info_untrusted(stats.S, stats.mu)
    elif mode == "trusted":
        I_E = eve_info_trusted(
            stats.S_tilde, stats.mu_tilde, stats.mu_cc, stats.mu_tilde_cc, stats.eta_d
        )
    else:
        raise ValueError(f"unknown trust mode {mode!r}")
    Q = min(max(stats.Q, 0.0), 1.0)
    fraction = 1 - binary_entropy(Q) - I_E
    per_pulse = P_S**2 * P_H * stats.mu_cc * max(fraction, 0.0)
    return KeyRateResult(
        mode=mode,
        K=r * per_pulse,
        K_per_pulse=per_pulse,
        secret_fraction=fraction,
        Q=stats.Q,
        S=stats.S if mode == "untrusted" else stats.S_tilde,
        I_E=I_E,
        mu=stats.mu if mode == "untrusted" else stats.mu_tilde,
        mu_cc=stats.mu_cc,
        mu_ci=stats.mu_ci,
        mu_ic=stats.mu_ic,
        P_S=P_S,
        P_H=P_H,
        r=r,
    )


def fiber_transmission(L_km: float, attenuation_db_per_km: float = 0.2) -> float:
    if L_km < 0:
        raise ValueError("negative distance")
    return 10 ** (-attenuation_db_per_km * L_km / 10)
