"""Photon sources: PDC entangled pairs, heralded single photons, on-demand photons.

Ensembles follow perturbative bookkeeping: the leading branch has weight one
and higher-order branches carry weights proportional to powers of the pair
probability.  They are not renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fock_optics import DEFAULT_N_MAX, Ensemble, FockKet, ModeId, apply_creation

P_MAX = 0.1

A_H, A_V = ModeId("a", "h"), ModeId("a", "v")
B_H, B_V = ModeId("b", "h"), ModeId("b", "v")


class SourceParameterError(ValueError):
    pass


def _check_pair_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= P_MAX:
        raise SourceParameterError(f"{name}={value} outside [0, {P_MAX}]")


@dataclass(frozen=True)
class SourceTerm:
    """One branch of a perturbative source: weight = coefficient * x**order."""

    order: int
    coefficient: float
    ket: FockKet

    def weight(self, x: float) -> float:
        return self.coefficient * x**self.order


def _pair_creator(ket: FockKet, a: ModeId, b: ModeId) -> FockKet:
    return apply_creation(apply_creation(ket, a), b)


def pdc_pair_terms(
    a: tuple[ModeId, ModeId] = (A_H, A_V),
    b: tuple[ModeId, ModeId] = (B_H, B_V),
    n_max: int = DEFAULT_N_MAX,
) -> list[SourceTerm]:
    """Vacuum, single-pair and double-pair branches of the entangled source."""
    vac = FockKet.vacuum(n_max)

    def pair_op(ket: FockKet) -> FockKet:
        return _pair_creator(ket, a[0], b[0]) + _pair_creator(ket, a[1], b[1])

    single = pair_op(vac).scaled(1 / math.sqrt(2))
    double = pair_op(pair_op(vac)).scaled(1 / (2 * math.sqrt(3)))
    return [SourceTerm(0, 1.0, vac), SourceTerm(1, 1.0, single), SourceTerm(2, 0.75, double)]


def pdc_entangled_state(p: float, n_max: int = DEFAULT_N_MAX) -> Ensemble:
    """Entangled-pair source kept to second order in ``p``."""
    _check_pair_probability("p", p)
    return Ensemble.from_branches((t.weight(p), t.ket) for t in pdc_pair_terms(n_max=n_max))


def heralded_photon_terms(m: ModeId, eta_d: float, n_max: int = DEFAULT_N_MAX) -> list[SourceTerm]:
    """Branches of a PDC heralded photon in mode ``m`` (weights in powers of p')."""
    one = apply_creation(FockKet.vacuum(n_max), m)
    two = apply_creation(one, m).normalized()
    return [SourceTerm(0, 1.0, one), SourceTerm(1, 2.0 * (1.0 - eta_d), two)]


def heralded_single_photon(
    p_prime: float, eta_d: float, m: ModeId = ModeId("s", "h"), n_max: int = DEFAULT_N_MAX
) -> tuple[float, Ensemble]:
    """Heralding probability ``p' eta_d`` and the conditional state |1> + 2p'(1-eta_d)|2>."""
    _check_pair_probability("p_prime", p_prime)
    if not 0.0 <= eta_d <= 1.0:
        raise SourceParameterError(f"eta_d={eta_d} outside [0, 1]")
    terms = heralded_photon_terms(m, eta_d, n_max)
    return p_prime * eta_d, Ensemble.from_branches((t.weight(p_prime), t.ket) for t in terms)


def on_demand_photon(m: ModeId = ModeId("s", "h"), n_max: int = DEFAULT_N_MAX) -> tuple[float, Ensemble]:
    return 1.0, Ensemble.pure(apply_creation(FockKet.vacuum(n_max), m))
