"""Heralded polarization-qubit amplifier.

Two auxiliary photons (h and v) are split on a beamsplitter of transmission
``t`` into a Bell-measurement arm ``c`` and Bob's output arm ``out``.  The
incoming mode ``b`` is interfered with ``c`` on a 50/50 beamsplitter and the
four outputs ``d_h, dt_h, d_v, dt_v`` are watched by number-resolving
detectors.  A herald is exactly one click among the h detectors and exactly
one among the v detectors.  A click in ``dt_h`` (``dt_v``) is corrected with a
pi phase on ``out_h`` (``out_v``).

The entangled source sits next to Alice (modes ``a``); ``b`` goes through the
fiber.  All source branches are kept to second order in the pair
probabilities ``p`` and ``p'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Literal

import numpy as np

from .fock_optics import (
    Ensemble,
    FockKet,
    ModeId,
    apply_beamsplitter,
    apply_loss,
    apply_phase,
    detect_single_click,
)
from .sources import (
    A_H,
    A_V,
    B_H,
    B_V,
    SourceTerm,
    _check_pair_probability,
    heralded_photon_terms,
    pdc_pair_terms,
)

SourceKind = Literal["heralded", "on_demand"]

# Largest photon number in any kept source branch: a double pair plus two
# auxiliary photons.
AMP_N_MAX = 6
MAX_ORDER = 2

S_H, S_V = ModeId("s", "h"), ModeId("s", "v")
C_H, C_V = ModeId("c", "h"), ModeId("c", "v")
OUT_H, OUT_V = ModeId("out", "h"), ModeId("out", "v")
D_H, D_V = ModeId("d", "h"), ModeId("d", "v")
DT_H, DT_V = ModeId("dt", "h"), ModeId("dt", "v")

ALICE_MODES = (A_H, A_V)
BOB_MODES = (OUT_H, OUT_V)

HERALD_PATTERNS = tuple(product((D_H, DT_H), (D_V, DT_V)))


class AmplifierParameterError(ValueError):
    pass


@dataclass(frozen=True)
class AmplifierParams:
    t: float
    eta_t: float = 1.0
    eta_c: float = 1.0
    eta_d: float = 1.0
    p: float = 0.0
    p_prime: float = 0.0
    source_kind: SourceKind = "heralded"

    def __post_init__(self):
        if not 0.5 <= self.t < 1.0:
            raise AmplifierParameterError(f"t={self.t} outside [0.5, 1)")
        for name in ("eta_t", "eta_c", "eta_d"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise AmplifierParameterError(f"{name}={value} outside [0, 1]")
        if self.source_kind not in ("heralded", "on_demand"):
            raise AmplifierParameterError(f"unknown source kind {self.source_kind!r}")
        _check_pair_probability("p", self.p)
        _check_pair_probability("p_prime", self.p_prime)

    @property
    def success_probability_single(self) -> float:
        """P_S of one auxiliary single-photon source."""
        return self.p_prime * self.eta_d if self.source_kind == "heralded" else 1.0


def photon_numbers(ket: FockKet) -> set[tuple[int, int]]:
    """(Alice, Bob) photon numbers present in a heralded ket."""
    out = set()
    for occ in ket.terms:
        i = sum(n for m, n in occ if m in ALICE_MODES)
        j = sum(n for m, n in occ if m in BOB_MODES)
        out.add((i, j))
    return out


def split_by_photon_number(ensemble: Ensemble) -> dict[tuple[int, int], Ensemble]:
    """Project each branch onto definite (Alice, Bob) photon numbers.

    All measurements act locally and preserve photon number per side, so the
    sectors never interfere.
    """
    parts: dict[tuple[int, int], list] = {}
    for w, ket in ensemble:
        groups: dict[tuple[int, int], dict] = {}
        for occ, amp in ket.terms.items():
            i = sum(n for m, n in occ if m in ALICE_MODES)
            j = sum(n for m, n in occ if m in BOB_MODES)
            groups.setdefault((i, j), {})[occ] = amp
        for key, terms in groups.items():
            parts.setdefault(key, []).append((w, FockKet(terms, ket.n_max)))
    return {key: Ensemble.from_branches(b) for key, b in sorted(parts.items())}


@dataclass(frozen=True)
class HeraldedState:
    """Unnormalized state after a successful herald.

    ``ensemble`` has total weight ``P_H``; ``patterns`` keeps the contribution
    of each herald pattern (after its correction) separately.
    """

    P_H: float
    ensemble: Ensemble
    patterns: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble, patterns: dict | None = None) -> HeraldedState:
        return cls(ensemble.total_weight(), ensemble, patterns or {})

    def sectors(self) -> dict[tuple[int, int], Ensemble]:
        """Unnormalized components P~_ij rho_ij keyed by (i, j)."""
        return split_by_photon_number(self.ensemble)

    def rho(self, i: int, j: int) -> Ensemble:
        """Normalized rho_ij."""
        return self.sectors()[(i, j)].normalized()

    @property
    def P(self) -> np.ndarray:
        """3x3 array of P_ij = P~_ij / P_H (Alice i photons, Bob j photons)."""
        out = np.zeros((3, 3))
        for (i, j), ens in self.sectors().items():
            if i > 2 or j > 2:
                raise ValueError(f"sector ({i}, {j}) outside the 3x3 decomposition")
            out[i, j] = ens.total_weight()
        return out / self.P_H


def apply_losses(ens: Ensemble, eta_t: float, eta_c: float) -> Ensemble:
    """Coupling loss on every sourced mode, then fiber loss on ``b``."""
    for m in (A_H, A_V, B_H, B_V, S_H, S_V):
        ens = apply_loss(ens, m, eta_c)
    for m in (B_H, B_V):
        ens = apply_loss(ens, m, eta_t)
    return ens


def apply_optics(ens: Ensemble, t: float) -> Ensemble:
    """Split the auxiliary photons on the t-beamsplitter and mix b with c 50/50."""

    def optics(k: FockKet) -> FockKet:
        k = apply_beamsplitter(k, S_H, C_H, t, (OUT_H, C_H))
        k = apply_beamsplitter(k, S_V, C_V, t, (OUT_V, C_V))
        k = apply_beamsplitter(k, C_H, B_H, 0.5, (D_H, DT_H))
        return apply_beamsplitter(k, C_V, B_V, 0.5, (D_V, DT_V))

    return ens.map_kets(optics)


def _prepare(ket: FockKet, t: float, eta_t: float, eta_c: float) -> Ensemble:
    return apply_optics(apply_losses(Ensemble.pure(ket), eta_t, eta_c), t)


def herald(ens: Ensemble, eta_d: float) -> dict[tuple[ModeId, ModeId], Ensemble]:
    """Condition on each herald pattern and apply its phase correction."""
    out = {}
    for click_h, click_v in HERALD_PATTERNS:
        quiet_h = DT_H if click_h == D_H else D_H
        quiet_v = DT_V if click_v == D_V else D_V
        _, cond = detect_single_click(ens, click_h, [quiet_h], eta_d)
        _, cond = detect_single_click(cond, click_v, [quiet_v], eta_d)
        if click_h == DT_H:
            cond = cond.map_kets(lambda k: apply_phase(k, OUT_H, math.pi))
        if click_v == DT_V:
            cond = cond.map_kets(lambda k: apply_phase(k, OUT_V, math.pi))
        out[(click_h, click_v)] = cond
    return out


def ideal_amplify(
    alpha: complex, beta_h: complex, beta_v: complex, t: float
) -> tuple[float, FockKet]:
    """Amplify alpha|0> + (beta_h in_h^dag + beta_v in_v^dag)|0> with ideal resources.

    Returns the total success probability over the four herald patterns and
    the (unnormalized) output ket for the ``(d_h, d_v)`` pattern, on modes
    ``out_h, out_v``.
    """
    psi_in = (
        FockKet({(): complex(alpha)}, AMP_N_MAX)
        + FockKet.from_counts({B_H: 1}, beta_h, AMP_N_MAX)
        + FockKet.from_counts({B_V: 1}, beta_v, AMP_N_MAX)
    )
    aux = FockKet.from_counts({S_H: 1, S_V: 1}, 1.0, AMP_N_MAX)
    ens = _prepare(psi_in.tensor(aux), t, 1.0, 1.0)
    # Keep the pure ket: with unit efficiencies every conditioning is a projection.
    (_, ket), = ens.branches
    total = 0.0
    psi_out = None
    for (click_h, click_v), cond in herald(Ensemble.pure(ket), 1.0).items():
        total += cond.total_weight()
        if (click_h, click_v) == (D_H, D_V):
            psi_out = _project_pattern(ket, click_h, click_v)
    return total, psi_out


def _project_pattern(ket: FockKet, click_h: ModeId, click_v: ModeId) -> FockKet:
    """Coherent projection onto one photon in each clicked mode, vacuum in the others."""
    bell = (D_H, DT_H, D_V, DT_V)
    terms = {}
    for occ, amp in ket.terms.items():
        counts = {m: n for m, n in occ if m in bell}
        if counts == {click_h: 1, click_v: 1}:
            terms[tuple((m, n) for m, n in occ if m not in bell)] = amp
    return FockKet(terms, ket.n_max)


@dataclass(frozen=True)
class AmplifierComponent:
    """Heralded contribution of one source branch: weight coefficient * p**k * p'**m."""

    coefficient: float
    p_order: int
    p_prime_order: int
    patterns: dict

    def weight(self, p: float, p_prime: float) -> float:
        return self.coefficient * p**self.p_order * p_prime**self.p_prime_order

    @property
    def ensemble(self) -> Ensemble:
        ens = Ensemble()
        for part in self.patterns.values():
            ens = ens + part
        return ens


def _source_terms(source_kind: SourceKind, eta_d: float):
    pair = pdc_pair_terms(n_max=AMP_N_MAX)
    if source_kind == "heralded":
        aux_h = heralded_photon_terms(S_H, eta_d, AMP_N_MAX)
        aux_v = heralded_photon_terms(S_V, eta_d, AMP_N_MAX)
    else:
        aux_h = heralded_photon_terms(S_H, eta_d, AMP_N_MAX)[:1]
        aux_v = heralded_photon_terms(S_V, eta_d, AMP_N_MAX)[:1]
    return pair, aux_h, aux_v


@lru_cache(maxsize=4096)
def amplifier_components(
    t: float, eta_t: float, eta_c: float, eta_d: float, source_kind: SourceKind = "heralded"
) -> tuple[AmplifierComponent, ...]:
    """Heralded state resolved by source branch, independent of p and p'.

    Only branches up to second total order in (p, p') are kept.
    """
    pair, aux_h, aux_v = _source_terms(source_kind, eta_d)
    out = []
    for tp, th, tv in product(pair, aux_h, aux_v):
        tp: SourceTerm
        if tp.order + th.order + tv.order > MAX_ORDER:
            continue
        ket = tp.ket.tensor(th.ket).tensor(tv.ket)
        patterns = herald(_prepare(ket, t, eta_t, eta_c), eta_d)
        out.append(
            AmplifierComponent(
                tp.coefficient * th.coefficient * tv.coefficient,
                tp.order,
                th.order + tv.order,
                patterns,
            )
        )
    return tuple(out)


def run_amplifier(params: AmplifierParams) -> HeraldedState:
    """Full heralded state for the given source, loss and detector parameters."""
    comps = amplifier_components(
        params.t, params.eta_t, params.eta_c, params.eta_d, params.source_kind
    )
    p_prime = params.p_prime if params.source_kind == "heralded" else 0.0
    patterns = {pat: Ensemble() for pat in HERALD_PATTERNS}
    for comp in comps:
        w = comp.weight(params.p, p_prime)
        if w == 0.0:
            continue
        for pat, part in comp.patterns.items():
            patterns[pat] = patterns[pat] + part.scaled(w)
    ens = Ensemble()
    for part in patterns.values():
        ens = ens + part
    return HeraldedState.from_ensemble(ens, patterns)


def closed_form_PH(t: float, p: float, eta_t: float) -> float:
    """Herald probability with ideal single photons, couplings and detectors, first order in p."""
    return (1 - t) ** 2 + p * (1 - t) ** 2 * (1 - eta_t) + t * (1 - t) * p * eta_t
