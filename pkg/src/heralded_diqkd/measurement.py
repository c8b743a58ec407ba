"""CHSH / QBER statistics of a heralded state.

Two independent routes are provided:

* :func:`click_statistics` rotates each side into its measurement basis and
  enumerates every detector click pattern with binomially thinned,
  number-resolving detectors.  It is the brute-force oracle.
* :class:`SectorMoments` holds, per (Alice, Bob) photon-number sector, the
  sector weight and the Stokes-operator second moments.  The closed-form
  conclusive probabilities and the component-weighted QBER / CHSH values are
  evaluated from it.  Everything stored is linear in the state, so moments of
  separately simulated components can simply be added.

A side is conclusive when exactly one of its two detectors clicks exactly
once.  With ``n`` photons on a side and exactly one detected, the outcome
statistics are those of the one-body reduced state, which is why the Stokes
moments divided by ``i * j`` give the conditional correlators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .amplifier import ALICE_MODES, BOB_MODES, OUT_H, OUT_V, HeraldedState, split_by_photon_number
from .fock_optics import (
    Ensemble,
    FockKet,
    ModeId,
    _occ_get,
    apply_annihilation,
    apply_creation,
    apply_phase,
    rotate_polarization,
    single_click_probability,
)

ALICE_SPATIAL = ALICE_MODES[0].spatial
BOB_SPATIAL = BOB_MODES[0].spatial

# Bloch angle in the x-z plane measured from +z: direction (sin phi, 0, cos phi).
ALICE_SETTINGS = {"x0": 0.0, "x1": math.pi / 4, "x2": -math.pi / 4}
BOB_SETTINGS = {"y1": 0.0, "y2": math.pi / 2}

KEY_SETTINGS = ("x0", "y1")
CHSH_TERMS = ((("x1", "y1"), 1), (("x1", "y2"), 1), (("x2", "y1"), 1), (("x2", "y2"), -1))
DEFAULT_SETTINGS = (KEY_SETTINGS,) + tuple(s for s, _ in CHSH_TERMS)

# Outcome index in the 3x3 joint tables.
PLUS, MINUS, INCONCLUSIVE = 0, 1, 2
OUTCOMES = (+1, -1, "i")


@dataclass(frozen=True)
class Settings:
    alice: str
    bob: str

    def __post_init__(self):
        if self.alice not in ALICE_SETTINGS or self.bob not in BOB_SETTINGS:
            raise ValueError(f"unknown settings ({self.alice}, {self.bob})")

    @property
    def angles(self) -> tuple[float, float]:
        return ALICE_SETTINGS[self.alice], BOB_SETTINGS[self.bob]


def _as_settings(s) -> Settings:
    return s if isinstance(s, Settings) else Settings(*s)


def rotation_for(bloch_angle: float) -> float:
    """Polarization rotation that maps the measurement direction onto h/v."""
    return -bloch_angle / 2


def rotate_into_basis(ket: FockKet, settings: Settings) -> FockKet:
    phi_a, phi_b = settings.angles
    ket = rotate_polarization(ket, ALICE_SPATIAL, rotation_for(phi_a))
    return rotate_polarization(ket, BOB_SPATIAL, rotation_for(phi_b))


def _side_outcomes(n_plus: int, n_minus: int, eta_d: float) -> tuple[float, float, float]:
    plus = single_click_probability(n_plus, eta_d) * (1 - eta_d) ** n_minus
    minus = single_click_probability(n_minus, eta_d) * (1 - eta_d) ** n_plus
    return plus, minus, 1.0 - plus - minus


# ---------------------------------------------------------------------------
# Brute-force click enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClickStats:
    """Normalized joint outcome tables per settings pair.

    ``joint[settings][a, b]`` with index order (+1, -1, inconclusive).
    """

    joint: Mapping[Settings, np.ndarray]

    def _key_table(self) -> np.ndarray:
        return self.joint[Settings(*KEY_SETTINGS)]

    @property
    def mu_cc(self) -> float:
        return float(self._key_table()[:2, :2].sum())

    @property
    def mu_ci(self) -> float:
        return float(self._key_table()[:2, 2].sum())

    @property
    def mu_ic(self) -> float:
        return float(self._key_table()[2, :2].sum())

    def correlator(self, settings) -> float:
        """<a b> on conclusive events, renormalized by mu_cc."""
        tab = self.joint[_as_settings(settings)]
        cc = tab[:2, :2].sum()
        return float((tab[0, 0] + tab[1, 1] - tab[0, 1] - tab[1, 0]) / cc)

    @property
    def Q(self) -> float:
        tab = self._key_table()
        return float((tab[0, 1] + tab[1, 0]) / tab[:2, :2].sum())

    @property
    def S(self) -> float:
        return math.fsum(sign * self.correlator(s) for s, sign in CHSH_TERMS)

    def conclusive_spread(self) -> float:
        """Largest settings-to-settings difference among mu_cc, mu_ci, mu_ic."""
        vals = np.array(
            [[t[:2, :2].sum(), t[:2, 2].sum(), t[2, :2].sum()] for t in self.joint.values()]
        )
        return float((vals.max(axis=0) - vals.min(axis=0)).max())


def photon_count_distribution(ensemble: Ensemble, settings) -> dict[tuple[int, int, int, int], float]:
    """Unnormalized distribution of (Alice +, Alice -, Bob +, Bob -) photon counts."""
    settings = _as_settings(settings)
    a_h, a_v = ALICE_MODES
    acc: dict[tuple[int, int, int, int], float] = {}
    for w, ket in ensemble:
        rotated = rotate_into_basis(ket, settings)
        for occ, amp in rotated.terms.items():
            key = (_occ_get(occ, a_h), _occ_get(occ, a_v), _occ_get(occ, OUT_H), _occ_get(occ, OUT_V))
            acc[key] = acc.get(key, 0.0) + w * abs(amp) ** 2
    return acc


def click_statistics(
    heralded: HeraldedState | Ensemble,
    eta_d: float,
    settings: Iterable = DEFAULT_SETTINGS,
    check_uniform: bool = True,
) -> ClickStats:
    """Enumerate click patterns of efficiency-``eta_d`` detectors on both sides."""
    ensemble = heralded.ensemble if isinstance(heralded, HeraldedState) else heralded
    total = ensemble.total_weight()
    joint = {}
    for s in settings:
        s = _as_settings(s)
        tab = np.zeros((3, 3))
        for (ap, am, bp, bm), prob in sorted(photon_count_distribution(ensemble, s).items()):
            tab += prob * np.outer(_side_outcomes(ap, am, eta_d), _side_outcomes(bp, bm, eta_d))
        joint[s] = tab / total
    stats = ClickStats(joint)
    if check_uniform and stats.conclusive_spread() > 1e-9:
        raise ValueError("conclusive probabilities depend on the settings")
    return stats


# ---------------------------------------------------------------------------
# Closed forms from per-sector moments
# ---------------------------------------------------------------------------


def _stokes(ket: FockKet, spatial: str, axis: str) -> FockKet:
    h, v = ModeId(spatial, "h"), ModeId(spatial, "v")
    if axis == "z":
        terms = {}
        for occ, amp in ket.terms.items():
            diff = _occ_get(occ, h) - _occ_get(occ, v)
            if diff:
                terms[occ] = amp * diff
        return FockKet(terms, ket.n_max)
    if axis == "x":
        return apply_creation(apply_annihilation(ket, v), h) + apply_creation(
            apply_annihilation(ket, h), v
        )
    raise ValueError(axis)


AXES = ("z", "x")


def _direction(phi: float) -> np.ndarray:
    """Components of the measurement direction along (z, x)."""
    return np.array([math.cos(phi), math.sin(phi)])


@dataclass(frozen=True)
class SectorMoments:
    """Per-sector weights P~_ij and Stokes moments <S_A^mu S_B^nu> (unnormalized).

    ``moments[i, j, mu, nu]`` with mu, nu indexing (z, x).
    """

    weight: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    moments: np.ndarray = field(default_factory=lambda: np.zeros((3, 3, 2, 2)))

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble) -> SectorMoments:
        weight = np.zeros((3, 3))
        moments = np.zeros((3, 3, 2, 2))
        for (i, j), part in split_by_photon_number(ensemble).items():
            if i > 2 or j > 2:
                if part.total_weight() > 0:
                    raise ValueError(f"sector ({i}, {j}) outside the 3x3 decomposition")
                continue
            weight[i, j] = part.total_weight()
            if i == 0 or j == 0:
                continue
            for w, ket in part:
                for nu, bax in enumerate(AXES):
                    sb = _stokes(ket, BOB_SPATIAL, bax)
                    for mu, aax in enumerate(AXES):
                        moments[i, j, mu, nu] += w * ket.inner(_stokes(sb, ALICE_SPATIAL, aax)).real
        return cls(weight, moments)

    @classmethod
    def from_heralded(cls, heralded: HeraldedState) -> SectorMoments:
        return cls.from_ensemble(heralded.ensemble)

    def __add__(self, other: SectorMoments) -> SectorMoments:
        return SectorMoments(self.weight + other.weight, self.moments + other.moments)

    def __mul__(self, factor: float) -> SectorMoments:
        return SectorMoments(self.weight * factor, self.moments * factor)

    __rmul__ = __mul__

    @property
    def P_H(self) -> float:
        return float(self.weight.sum())

    @property
    def P(self) -> np.ndarray:
        return self.weight / self.weight.sum()

    def correlator(self, i: int, j: int, settings) -> float:
        """Conditional correlator on rho_ij given one detected photon per side."""
        phi_a, phi_b = _as_settings(settings).angles
        m = _direction(phi_a) @ self.moments[i, j] @ _direction(phi_b)
        return float(m / (self.weight[i, j] * i * j))

    def with_visibility(self, V: float) -> SectorMoments:
        """Phase-flip admixture on Bob's side: the x component of Bob's Stokes vector scales by 2F-1."""
        F = visibility_fidelity(V)
        moments = self.moments.copy()
        moments[..., 1] *= 2 * F - 1
        return SectorMoments(self.weight.copy(), moments)


def sector_correlators(
    source: SectorMoments | HeraldedState, settings: Iterable = DEFAULT_SETTINGS
) -> dict[tuple[int, int], dict[Settings, float]]:
    """Correlators of every populated sector with at least one photon per side."""
    moments = source if isinstance(source, SectorMoments) else SectorMoments.from_heralded(source)
    out = {}
    for i in (1, 2):
        for j in (1, 2):
            if moments.weight[i, j] > 0:
                out[(i, j)] = {_as_settings(s): moments.correlator(i, j, s) for s in settings}
    return out


def conclusive_coefficients(eta_d: float) -> dict[tuple[int, int], float]:
    """Probability that sector (i, j) yields a conclusive result on both sides."""
    e = eta_d
    return {
        (1, 1): e**2,
        (2, 1): 2 * (1 - e) * e**2,
        (1, 2): 2 * (1 - e) * e**2,
        (2, 2): 4 * e**2 * (1 - e) ** 2,
    }


def closed_form_mu(P: np.ndarray, eta_d: float) -> tuple[float, float, float]:
    """(mu_cc, mu_ci, mu_ic) from the photon-number weights P_ij, i, j <= 2."""
    e = eta_d
    P = np.asarray(P)
    mu_cc = e**2 * P[1, 1] + 2 * (1 - e) * e**2 * (P[2, 1] + P[1, 2]) + 4 * e**2 * (1 - e) ** 2 * P[2, 2]
    two_two = 2 * e**3 * (1 - e) + 2 * e * (1 - e) ** 3
    mu_ci = (
        e * P[1, 0]
        + e * (1 - e) * P[1, 1]
        + 2 * e * (1 - e) ** 2 * P[2, 1]
        + (e**3 + e * (1 - e) ** 2) * P[1, 2]
        + 2 * e * (1 - e) * P[2, 0]
        + two_two * P[2, 2]
    )
    mu_ic = (
        e * P[0, 1]
        + e * (1 - e) * P[1, 1]
        + 2 * e * (1 - e) ** 2 * P[1, 2]
        + (e**3 + e * (1 - e) ** 2) * P[2, 1]
        + 2 * e * (1 - e) * P[0, 2]
        + two_two * P[2, 2]
    )
    return float(mu_cc), float(mu_ci), float(mu_ic)


def closed_form_QS(
    correlators: Mapping[tuple[int, int], Mapping], P: np.ndarray, eta_d: float
) -> tuple[float, float]:
    """QBER and CHSH value as detection-weighted sums of per-sector values.

    Each sector contributes its error rate (CHSH value) scaled by P_ij / mu_cc
    and by the probability that it gives a conclusive result on both sides.
    """
    mu_cc, _, _ = closed_form_mu(P, eta_d)
    key = Settings(*KEY_SETTINGS)
    Q = S = 0.0
    for ij, c in conclusive_coefficients(eta_d).items():
        if ij not in correlators or c == 0.0:
            continue
        corr = correlators[ij]
        frac = P[ij] / mu_cc
        Q += c * frac * (1 - corr[key]) / 2
        S += c * frac * sum(sign * corr[Settings(*s)] for s, sign in CHSH_TERMS)
    return float(Q), float(S)


# ---------------------------------------------------------------------------
# Trusted detectors
# ---------------------------------------------------------------------------


def binomial_thinning(gamma: Mapping[tuple[int, ...], float], eta_d: float) -> dict[tuple[int, ...], float]:
    """Click-count distribution from emitted-photon distribution: p_{n n'} = C(n', n) e^n (1-e)^(n'-n)."""
    delta: dict[tuple[int, ...], float] = {}
    for emitted, prob in gamma.items():
        per_channel = [
            [(n, math.comb(k, n) * eta_d**n * (1 - eta_d) ** (k - n)) for n in range(k + 1)]
            for k in emitted
        ]
        for combo in np.ndindex(*(len(c) for c in per_channel)):
            clicks = tuple(per_channel[c][idx][0] for c, idx in enumerate(combo))
            weight = prob
            for c, idx in enumerate(combo):
                weight *= per_channel[c][idx][1]
            delta[clicks] = delta.get(clicks, 0.0) + weight
    return delta


@dataclass(frozen=True)
class TrustedStats:
    gamma: Mapping[Settings, dict]
    delta: Mapping[Settings, dict]
    mu_tilde_cc: float
    mu_tilde_ci: float
    mu_tilde_ic: float
    S_tilde: float
    N: int

    @property
    def mu_tilde(self) -> float:
        if self.mu_tilde_cc <= 0:
            return math.inf
        return (self.mu_tilde_ci + self.mu_tilde_ic) / self.mu_tilde_cc


def trusted_statistics(
    heralded: HeraldedState, eta_d: float, settings: Iterable = DEFAULT_SETTINGS
) -> TrustedStats:
    """Emitted-photon (gamma) and click (delta) statistics for trusted detectors.

    The single-photon-per-side quantities are read from gamma directly; the
    CHSH value is evaluated on rho_11 with unit-efficiency detection.
    """
    total = heralded.P_H
    gamma, delta = {}, {}
    N = 0
    for s in settings:
        s = _as_settings(s)
        g = {k: v / total for k, v in photon_count_distribution(heralded.ensemble, s).items()}
        gamma[s] = g
        delta[s] = binomial_thinning(g, eta_d)
        N = max([N, *(max(k) for k in g)])
    g0 = gamma[_as_settings(next(iter(settings)))]

    def single(a: tuple[int, int]) -> bool:
        return sorted(a) == [0, 1]

    cc = sum(v for k, v in g0.items() if single(k[:2]) and single(k[2:]))
    ci = sum(v for k, v in g0.items() if single(k[:2]) and not single(k[2:]) and sum(k[2:]) != 1)
    ic = sum(v for k, v in g0.items() if single(k[2:]) and not single(k[:2]) and sum(k[:2]) != 1)
    sectors = heralded.sectors()
    if (1, 1) in sectors:
        S_tilde = click_statistics(sectors[(1, 1)], 1.0).S
    else:
        S_tilde = 0.0
    return TrustedStats(gamma, delta, cc, ci, ic, S_tilde, N)


# ---------------------------------------------------------------------------
# Visibility
# ---------------------------------------------------------------------------


def visibility_fidelity(V: float) -> float:
    """Weight of phi+ in the heralded entanglement for HOM visibility V."""
    if not 0.0 <= V <= 1.0:
        raise ValueError(f"visibility {V} outside [0, 1]")
    return (1 + V**3) / 2


def phase_flip(ensemble: Ensemble) -> Ensemble:
    """pi phase on Bob's v mode; maps phi+ to phi-."""
    return ensemble.map_kets(lambda k: apply_phase(k, OUT_V, math.pi))


def apply_visibility(heralded: HeraldedState, V: float) -> HeraldedState:
    """Replace rho by F rho + (1-F) Z rho Z with F = (1 + V^3)/2; sector weights unchanged."""
    F = visibility_fidelity(V)
    if F == 1.0:
        return heralded

    def noisy(ens: Ensemble) -> Ensemble:
        return ens.scaled(F) + phase_flip(ens).scaled(1 - F)

    patterns = {k: noisy(v) for k, v in heralded.patterns.items()}
    return HeraldedState(heralded.P_H, noisy(heralded.ensemble), patterns)


# ---------------------------------------------------------------------------
# Observed statistics for the key-rate formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservedStats:
    Q: float
    S: float
    mu_cc: float
    mu_ci: float
    mu_ic: float
    eta_d: float
    S_tilde: float = 0.0
    mu_tilde_cc: float = 0.0
    mu_tilde_ci: float = 0.0
    mu_tilde_ic: float = 0.0

    @property
    def mu(self) -> float:
        if self.mu_cc <= 0:
            return math.inf
        return (self.mu_ci + self.mu_ic) / self.mu_cc

    @property
    def mu_tilde(self) -> float:
        if self.mu_tilde_cc <= 0:
            return math.inf
        return (self.mu_tilde_ci + self.mu_tilde_ic) / self.mu_tilde_cc


def observed_statistics(moments: SectorMoments, eta_d: float) -> ObservedStats:
    """Closed-form statistics used by the key-rate formulas."""
    P = moments.P
    mu_cc, mu_ci, mu_ic = closed_form_mu(P, eta_d)
    corr = sector_correlators(moments)
    if mu_cc > 0:
        Q, S = closed_form_QS(corr, P, eta_d)
    else:
        Q, S = 0.5, 0.0
    S_tilde = (
        sum(sign * corr[(1, 1)][Settings(*s)] for s, sign in CHSH_TERMS) if (1, 1) in corr else 0.0
    )
    return ObservedStats(
        Q=Q,
        S=S,
        mu_cc=mu_cc,
        mu_ci=mu_ci,
        mu_ic=mu_ic,
        eta_d=eta_d,
        S_tilde=float(S_tilde),
        mu_tilde_cc=float(P[1, 1]),
        mu_tilde_ci=float(P[1, 0] + P[1, 2]),
        mu_tilde_ic=float(P[0, 1] + P[2, 1]),
    )
