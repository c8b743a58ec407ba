"""Oracle cross-checks run by ``heralded-diqkd validate``.

Every check returns ``(ok, detail)``.  They compare two independent routes to
the same quantity (brute-force enumeration against closed forms, full
simulation against rescaled tables, bisection against analytic thresholds).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .amplifier import (
    BOB_MODES,
    D_H,
    DT_H,
    AmplifierParams,
    HeraldedState,
    closed_form_PH,
    ideal_amplify,
    run_amplifier,
)
from .fock_optics import Ensemble, FockKet, ModeId, apply_beamsplitter, apply_loss
from .measurement import (
    DEFAULT_SETTINGS,
    SectorMoments,
    binomial_thinning,
    click_statistics,
    closed_form_mu,
    observed_statistics,
    photon_count_distribution,
)
from .optimizer import amplifier_moment_table, critical_coupling
from .security import CRITICAL_EFFICIENCY
from .sources import A_H, A_V

CheckResult = tuple[bool, str]

SIDE_MODES = ((A_H, A_V), BOB_MODES)


def random_ket(rng: np.random.Generator, n_a: int, n_b: int) -> FockKet:
    """Random state with exactly ``n_a`` photons at Alice and ``n_b`` at Bob."""
    ket = FockKet({}, 4)
    for ka in range(n_a + 1):
        for kb in range(n_b + 1):
            counts = {A_H: ka, A_V: n_a - ka, BOB_MODES[0]: kb, BOB_MODES[1]: n_b - kb}
            ket = ket + FockKet.from_counts(counts, complex(*rng.normal(size=2)), 4)
    return ket.normalized()


def random_heralded_state(rng: np.random.Generator, branches: int = 6) -> HeraldedState:
    """Mixture of random kets over the nine (i, j) sectors, i, j <= 2."""
    parts = []
    for _ in range(branches):
        i, j = rng.integers(0, 3, size=2)
        parts.append((float(rng.uniform(0.05, 1.0)), random_ket(rng, int(i), int(j))))
    # Keep a conclusive-conclusive component so mu_cc > 0.
    parts.append((float(rng.uniform(0.2, 1.0)), random_ket(rng, 1, 1)))
    return HeraldedState.from_ensemble(Ensemble.from_branches(parts))


def compare_routes(heralded: HeraldedState, eta_d: float) -> float:
    """Largest discrepancy between brute-force and closed-form mu, Q, S."""
    brute = click_statistics(heralded, eta_d)
    closed = observed_statistics(SectorMoments.from_heralded(heralded), eta_d)
    mu = closed_form_mu(heralded.P, eta_d)
    pairs = [
        (brute.mu_cc, mu[0]),
        (brute.mu_ci, mu[1]),
        (brute.mu_ic, mu[2]),
        (brute.mu_cc, closed.mu_cc),
        (brute.Q, closed.Q),
        (brute.S, closed.S),
    ]
    return max(abs(a - b) for a, b in pairs)


def thinning_discrepancy(heralded: HeraldedState, eta_d: float) -> float:
    """Binomially thinned photon counts against explicit detector loss."""
    lossy = heralded.ensemble
    for m in (*SIDE_MODES[0], *SIDE_MODES[1]):
        lossy = apply_loss(lossy, m, eta_d)
    worst = 0.0
    for s in DEFAULT_SETTINGS:
        thinned = binomial_thinning(photon_count_distribution(heralded.ensemble, s), eta_d)
        direct = photon_count_distribution(lossy, s)
        for k in set(thinned) | set(direct):
            worst = max(worst, abs(thinned.get(k, 0.0) - direct.get(k, 0.0)) / heralded.P_H)
    return worst


def normalization_discrepancy(heralded: HeraldedState, eta_d: float) -> float:
    worst = 0.0
    for s in DEFAULT_SETTINGS:
        gamma = photon_count_distribution(heralded.ensemble, s)
        worst = max(worst, abs(sum(gamma.values()) / heralded.P_H - 1))
        delta = binomial_thinning(gamma, eta_d)
        worst = max(worst, abs(sum(delta.values()) / heralded.P_H - 1))
    stats = click_statistics(heralded, eta_d)
    for table in stats.joint.values():
        worst = max(worst, abs(float(np.sum(table)) - 1))
    return worst


def check_hom() -> CheckResult:
    c, b = ModeId("c", "h"), ModeId("b", "h")
    ket = FockKet.from_counts({c: 1, b: 1}, 1.0)
    out = apply_beamsplitter(ket, c, b, 0.5, (D_H, DT_H))
    amp = abs(out.amplitude({D_H: 1, DT_H: 1}))
    return amp < 1e-12, f"coincidence amplitude {amp:.2e}"


def check_involution() -> CheckResult:
    rng = np.random.default_rng(1)
    x, y = ModeId("x", "h"), ModeId("y", "h")
    worst = 0.0
    for t in rng.uniform(0, 1, 5):
        ket = FockKet({}, 4)
        for n in range(3):
            for m in range(3):
                ket = ket + FockKet.from_counts({x: n, y: m}, complex(*rng.normal(size=2)), 4)
        ket = ket.normalized()
        back = apply_beamsplitter(apply_beamsplitter(ket, x, y, t), x, y, t)
        diff = back + ket.scaled(-1)
        worst = max(worst, math.sqrt(diff.norm2()), abs(ket.norm2() - 1))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def check_ideal_amplifier() -> CheckResult:
    worst = 0.0
    for t in (0.5, 0.7, 0.9, 0.99):
        alpha, bh, bv = 0.6, 0.48, 0.64j
        total, out = ideal_amplify(alpha, bh, bv, t)
        expected = (
            FockKet({(): alpha * (1 - t) / 2}, out.n_max)
            + FockKet.from_counts({BOB_MODES[0]: 1}, bh * math.sqrt(t * (1 - t)) / 2, out.n_max)
            + FockKet.from_counts({BOB_MODES[1]: 1}, bv * math.sqrt(t * (1 - t)) / 2, out.n_max)
        )
        diff = out + expected.scaled(-1)
        worst = max(worst, math.sqrt(diff.norm2()), abs(total - 4 * expected.norm2()))
    return worst < 1e-10, f"max deviation {worst:.2e}"


def check_herald_probability() -> CheckResult:
    worst = 0.0
    for p in (1e-4, 1e-3, 1e-2):
        for t, eta_t in ((0.9, 0.3), (0.98, 0.05)):
            params = AmplifierParams(t, eta_t, 1.0, 1.0, p, 0.0, "on_demand")
            dev = abs(run_amplifier(params).P_H - closed_form_PH(t, p, eta_t)) / p**2
            worst = max(worst, dev)
    return worst < 10, f"max |P_H - closed form| / p^2 = {worst:.3f}"


def check_closed_forms(n_states: int = 20, seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        worst = max(worst, compare_routes(random_heralded_state(rng), float(rng.uniform(0.3, 1.0))))
    return worst < 1e-10, f"{n_states} random states, max deviation {worst:.2e}"


def check_thinning(n_states: int = 10, seed: int = 11) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        hs = random_heralded_state(rng)
        eta = float(rng.uniform(0.3, 1.0))
        worst = max(worst, thinning_discrepancy(hs, eta), normalization_discrepancy(hs, eta))
    return worst < 1e-10, f"max deviation {worst:.2e}"


def check_moment_table() -> CheckResult:
    worst = 0.0
    for kind in ("heralded", "on_demand"):
        table = amplifier_moment_table(0.9, 0.95, kind)
        for t, eta_t, p, pp in ((0.98, 0.63, 2e-3, 3e-3), (0.7, 0.2, 1e-2, 5e-3)):
            pp = pp if kind == "heralded" else 0.0
            fast = table.evaluate(t, eta_t, p, pp)
            full = SectorMoments.from_heralded(
                run_amplifier(AmplifierParams(t, eta_t, 0.9, 0.95, p, pp, kind))
            )
            scale = full.weight.max()
            worst = max(
                worst,
                np.abs(fast.weight - full.weight).max() / scale,
                np.abs(fast.moments - full.moments).max() / scale,
            )
    return worst < 1e-10, f"max relative deviation {worst:.2e}"


def check_thresholds() -> CheckResult:
    values = [critical_coupling("untrusted", 1.0)]
    values += [critical_coupling("trusted", e) for e in (0.5, 0.8, 1.0)]
    worst = max(abs(v - CRITICAL_EFFICIENCY) for v in values)
    return worst < 1e-6, f"thresholds {', '.join(f'{v:.8f}' for v in values)}"


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "hom_dip": check_hom,
    "beamsplitter_involution": check_involution,
    "ideal_amplifier": check_ideal_amplifier,
    "herald_probability": check_herald_probability,
    "closed_form_vs_enumeration": check_closed_forms,
    "binomial_thinning": check_thinning,
    "moment_table_rescaling": check_moment_table,
    "efficiency_thresholds": check_thresholds,
}


def run_checks() -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
