"""End-to-end key-rate evaluation, parameter optimization and distance sweeps.

Fast evaluation relies on the structure of the amplifier: inside every
heralded branch the number of auxiliary photons ``n``, the number of them that
reach Bob ``j``, and the number of fiber photons kept/lost are fixed.  The
dependence on ``t`` and ``eta_t`` is therefore a common monomial
``t^j (1-t)^(n-j) eta_t^kept (1-eta_t)^lost`` per branch.  One simulation at
the reference point ``t = eta_t = 1/2`` is rescaled exactly to any
``(t, eta_t)``, and ``(p, p')`` enter as polynomial weights.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from itertools import product
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import minimize

from .amplifier import (
    B_H,
    B_V,
    BOB_MODES,
    MAX_ORDER,
    S_H,
    S_V,
    AMP_N_MAX,
    _source_terms,
    apply_optics,
    herald,
)
from .fock_optics import Ensemble, _occ_get, apply_loss, relabel
from .measurement import ObservedStats, SectorMoments, observed_statistics
from .security import KeyRateResult, TrustMode, fiber_transmission, key_rate
from .sources import A_H, A_V, pdc_pair_terms

log = logging.getLogger(__name__)

P_BOUNDS = (1e-5, 5e-2)
T_BOUNDS = (0.5, 0.9999)
GRID_P = 12
GRID_T = 24
PROBE_CEILING_KM = 1e4
DISTANCE_TOL_KM = 0.01

_REF = 0.5


@dataclass(frozen=True)
class Scenario:
    trust: TrustMode = "untrusted"
    source: Literal["heralded", "on_demand"] = "heralded"
    eta_c: float = 0.9
    eta_d: float = 0.95
    visibility: float = 1.0
    rep_rate_hz: float = 1e10
    attenuation_db_km: float = 0.2
    amplifier: bool = True

    def __post_init__(self):
        if self.trust not in ("untrusted", "trusted"):
            raise ValueError(f"unknown trust mode {self.trust!r}")
        if self.source not in ("heralded", "on_demand"):
            raise ValueError(f"unknown source {self.source!r}")
        for name in ("eta_c", "eta_d", "visibility"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.rep_rate_hz <= 0:
            raise ValueError("repetition rate must be positive")
        if self.attenuation_db_km < 0:
            raise ValueError("attenuation must be non-negative")


# Preset families: a) untrusted eta_d=0.95, b) trusted eta_d=0.8; the fig6-* presets add V=0.994.
PRESETS: dict[str, Scenario] = {
    "fig4-a-heralded": Scenario("untrusted", "heralded", eta_d=0.95),
    "fig4-a-ondemand": Scenario("untrusted", "on_demand", eta_d=0.95),
    "fig4-b-heralded": Scenario("trusted", "heralded", eta_d=0.8),
    "fig4-b-ondemand": Scenario("trusted", "on_demand", eta_d=0.8),
    "fig4-a-direct": Scenario("untrusted", "on_demand", eta_d=0.95, amplifier=False),
    "fig4-b-direct": Scenario("trusted", "on_demand", eta_d=0.8, amplifier=False),
}
for _name in ("a-heralded", "a-ondemand", "b-heralded", "b-ondemand"):
    PRESETS[f"fig6-{_name}"] = replace(PRESETS[f"fig4-{_name}"], visibility=0.994)


# ---------------------------------------------------------------------------
# Amplifier moment table
# ---------------------------------------------------------------------------


def _count(ket, modes) -> int:
    counts = {sum(_occ_get(occ, m) for m in modes) for occ in ket.terms}
    if len(counts) != 1:
        raise AssertionError("photon number not definite within a branch")
    return counts.pop()


def _group_by(ens: Ensemble, modes) -> dict[int, Ensemble]:
    out: dict[int, list] = {}
    for w, ket in ens:
        out.setdefault(_count(ket, modes), []).append((w, ket))
    return {k: Ensemble(tuple(v)) for k, v in sorted(out.items())}


@dataclass(frozen=True)
class MomentTable:
    """Stacked per-branch-class moments with their parameter exponents."""

    coefficient: np.ndarray  # (E,)
    p_order: np.ndarray  # (E,)
    p_prime_order: np.ndarray  # (E,)
    n_aux: np.ndarray  # (E,)
    b_before: np.ndarray  # (E,)
    b_after: np.ndarray  # (E,)
    weight: np.ndarray  # (E, 3, 3)
    moments: np.ndarray  # (E, 3, 3, 2, 2)

    def evaluate(self, t: float, eta_t: float, p: float, p_prime: float) -> SectorMoments:
        j = np.arange(3)
        n = self.n_aux[:, None]
        t_fac = t ** j[None, :] * (1 - t) ** np.clip(n - j[None, :], 0, None) / _REF**n
        t_fac = np.where(j[None, :] <= n, t_fac, 0.0)
        lost = self.b_before - self.b_after
        base = (
            self.coefficient
            * p**self.p_order
            * p_prime**self.p_prime_order
            * eta_t**self.b_after
            * (1 - eta_t) ** lost
            / _REF**self.b_before
        )
        scale = base[:, None] * t_fac  # (E, j)
        weight = np.einsum("ej,eij->ij", scale, self.weight)
        moments = np.einsum("ej,eijab->ijab", scale, self.moments)
        return SectorMoments(weight, moments)


@lru_cache(maxsize=64)
def amplifier_moment_table(eta_c: float, eta_d: float, source_kind: str) -> MomentTable:
    """Simulate the amplifier once at t = eta_t = 1/2, resolved by branch class."""
    pair, aux_h, aux_v = _source_terms(source_kind, eta_d)
    rows = []
    for tp, th, tv in product(pair, aux_h, aux_v):
        if tp.order + th.order + tv.order > MAX_ORDER:
            continue
        coef = tp.coefficient * th.coefficient * tv.coefficient
        ens = Ensemble.pure(tp.ket.tensor(th.ket).tensor(tv.ket))
        for m in (A_H, A_V, B_H, B_V, S_H, S_V):
            ens = apply_loss(ens, m, eta_c)
        for n_aux, by_aux in _group_by(ens, (S_H, S_V)).items():
            for b_before, by_b in _group_by(by_aux, (B_H, B_V)).items():
                lossy = by_b
                for m in (B_H, B_V):
                    lossy = apply_loss(lossy, m, _REF)
                for b_after, chunk in _group_by(lossy, (B_H, B_V)).items():
                    heralded = apply_optics(chunk, _REF)
                    parts = herald(heralded, eta_d)
                    total = Ensemble()
                    for part in parts.values():
                        total = total + part
                    sm = SectorMoments.from_ensemble(total)
                    rows.append(
                        (coef, tp.order, th.order + tv.order, n_aux, b_before, b_after, sm)
                    )
    return MomentTable(
        coefficient=np.array([r[0] for r in rows]),
        p_order=np.array([r[1] for r in rows]),
        p_prime_order=np.array([r[2] for r in rows]),
        n_aux=np.array([r[3] for r in rows]),
        b_before=np.array([r[4] for r in rows]),
        b_after=np.array([r[5] for r in rows]),
        weight=np.array([r[6].weight for r in rows]),
        moments=np.array([r[6].moments for r in rows]),
    )


# ---------------------------------------------------------------------------
# Direct transmission (no amplifier)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _direct_components(eta_side: float) -> tuple[tuple[int, float, SectorMoments], ...]:
    """Pair source midway between Alice and Bob, each arm of transmission ``eta_side``."""
    to_bob = {B_H: BOB_MODES[0], B_V: BOB_MODES[1]}
    out = []
    for term in pdc_pair_terms(n_max=AMP_N_MAX):
        ens = Ensemble.pure(relabel(term.ket, to_bob))
        for m in (A_H, A_V, *BOB_MODES):
            ens = apply_loss(ens, m, eta_side)
        out.append((term.order, term.coefficient, SectorMoments.from_ensemble(ens)))
    return tuple(out)


def direct_moments(scenario: Scenario, L_km: float, p: float) -> SectorMoments:
    eta_t = fiber_transmission(L_km, scenario.attenuation_db_km)
    eta_side = scenario.eta_c * math.sqrt(eta_t)
    total = SectorMoments()
    for order, coef, sm in _direct_components(eta_side):
        total = total + sm * (coef * p**order)
    return total


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def heralded_moments(
    scenario: Scenario, L_km: float, p: float, p_prime: float, t: float
) -> SectorMoments:
    """Sector moments of the heralded state, visibility included."""
    eta_t = fiber_transmission(L_km, scenario.attenuation_db_km)
    table = amplifier_moment_table(scenario.eta_c, scenario.eta_d, scenario.source)
    pp = p_prime if scenario.source == "heralded" else 0.0
    sm = table.evaluate(t, eta_t, p, pp)
    if scenario.visibility < 1.0:
        sm = sm.with_visibility(scenario.visibility)
    return sm


def _check_params(p: float, p_prime: float, t: float | None) -> None:
    for name, value in (("p", p), ("p_prime", p_prime)):
        if not 0.0 <= value <= 0.1:
            raise ValueError(f"{name}={value} outside [0, 0.1]")
    if t is not None and not 0.5 <= t < 1.0:
        raise ValueError(f"t={t} outside [0.5, 1)")


def evaluate_keyrate(
    scenario: Scenario, L_km: float, p: float, p_prime: float = 0.0, t: float | None = None
) -> KeyRateResult:
    """Sources -> amplifier (or direct link) -> visibility -> statistics -> key rate."""
    if L_km < 0:
        raise ValueError("negative distance")
    if scenario.amplifier:
        if t is None:
            raise ValueError("the amplifier needs a beamsplitter transmission t")
        _check_params(p, p_prime, t)
        sm = heralded_moments(scenario, L_km, p, p_prime, t)
        P_H = sm.P_H
        P_S = p_prime * scenario.eta_d if scenario.source == "heralded" else 1.0
    else:
        _check_params(p, 0.0, None)
        sm = direct_moments(scenario, L_km, p)
        P_H, P_S = 1.0, 1.0
    if P_H <= 0:
        stats = ObservedStats(Q=0.5, S=0.0, mu_cc=0.0, mu_ci=0.0, mu_ic=0.0, eta_d=scenario.eta_d)
    else:
        stats = observed_statistics(sm, scenario.eta_d)
    return key_rate(scenario.trust, stats, scenario.rep_rate_hz, P_S, P_H)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizationResult:
    L_km: float
    p: float
    p_prime: float
    t: float | None
    K: float
    result: KeyRateResult
    evaluations: int
    at_boundary: tuple[str, ...] = field(default_factory=tuple)

    def row(self) -> dict:
        r = self.result
        return {
            "L_km": self.L_km,
            "K_bits_per_s": self.K,
            "p": self.p,
            "p_prime": self.p_prime,
            "t": self.t,
            "Q": r.Q,
            "S": r.S,
            "P_H": r.P_H,
            "mu_cc": r.mu_cc,
        }


def _dimensions(scenario: Scenario) -> list[str]:
    if not scenario.amplifier:
        return ["p"]
    if scenario.source == "on_demand":
        return ["p", "t"]
    return ["p", "p_prime", "t"]


def _decode(x: Sequence[float], dims: list[str]) -> dict[str, float]:
    out = {"p": 0.0, "p_prime": 0.0, "t": None}
    for name, value in zip(dims, x):
        if name == "t":
            out["t"] = float(1.0 - 10.0**value)
        else:
            out[name] = float(10.0**value)
    return out


def _bounds(dims: list[str]) -> list[tuple[float, float]]:
    lo, hi = math.log10(P_BOUNDS[0]), math.log10(P_BOUNDS[1])
    t_lo, t_hi = math.log10(1 - T_BOUNDS[1]), math.log10(1 - T_BOUNDS[0])
    return [(t_lo, t_hi) if d == "t" else (lo, hi) for d in dims]


def optimize(scenario: Scenario, L_km: float) -> OptimizationResult:
    """Maximize the key rate over (p, p', t): coarse grid, then Nelder-Mead."""
    dims = _dimensions(scenario)
    bounds = _bounds(dims)
    axes = [np.linspace(lo, hi, GRID_T if d == "t" else GRID_P) for d, (lo, hi) in zip(dims, bounds)]
    evaluations = 0

    def rate(x) -> float:
        nonlocal evaluations
        evaluations += 1
        return evaluate_keyrate(scenario, L_km, **_decode(x, dims)).K

    best_x, best_k = None, -1.0
    for x in product(*axes):
        k = rate(x)
        if k > best_k:
            best_x, best_k = np.array(x), k

    if best_k > 0:
        steps = np.array([ax[1] - ax[0] for ax in axes])
        simplex = [best_x] + [best_x + np.eye(len(dims))[i] * steps[i] * 0.5 for i in range(len(dims))]
        simplex = np.array([np.clip(v, [b[0] for b in bounds], [b[1] for b in bounds]) for v in simplex])
        # Shrink any vertex that collapsed onto another after clipping.
        for i in range(1, len(simplex)):
            if np.allclose(simplex[i], simplex[0]):
                simplex[i] = best_x - np.eye(len(dims))[i - 1] * steps[i - 1] * 0.5
        res = minimize(
            lambda x: -rate(x) / best_k,
            best_x,
            method="Nelder-Mead",
            bounds=bounds,
            options={"initial_simplex": simplex, "xatol": 1e-4, "fatol": 1e-10, "maxiter": 600},
        )
        if -res.fun * best_k > best_k:
            best_x = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds])

    params = _decode(best_x, dims)
    result = evaluate_keyrate(scenario, L_km, **params)
    at_boundary = tuple(
        d for d, v, (lo, hi) in zip(dims, best_x, bounds)
        if d != "t" and (abs(v - lo) < 1e-6 or abs(v - hi) < 1e-6)
    )
    if at_boundary and result.K > 0:
        log.warning("optimum at search boundary for %s (L=%.3f km): %s", scenario, L_km, at_boundary)
    return OptimizationResult(
        L_km=L_km,
        p=params["p"],
        p_prime=params["p_prime"],
        t=params["t"],
        K=result.K,
        result=result,
        evaluations=evaluations,
        at_boundary=at_boundary,
    )


def _optimize_star(args):
    return optimize(*args)


def sweep_distance(
    scenario: Scenario, distances: Sequence[float], workers: int = 1
) -> list[OptimizationResult]:
    """One optimized point per distance, in input order."""
    if any(L < 0 for L in distances):
        raise ValueError("distances must be non-negative")
    jobs = [(scenario, float(L)) for L in distances]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_optimize_star, jobs))
    return [optimize(*job) for job in jobs]


class UnboundedDistanceError(RuntimeError):
    pass


def bisect_boundary(feasible, lo: float, hi: float, tol: float) -> float:
    """Largest x in [lo, hi] with feasible(x) True, assuming feasible(lo) and not feasible(hi)."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_distance(
    scenario: Scenario, tol: float = DISTANCE_TOL_KM, ceiling: float = PROBE_CEILING_KM
) -> float:
    """Largest distance with a positive optimized key rate (no-amplifier link only)."""
    if scenario.amplifier:
        raise ValueError("max_distance is defined for the direct link; amplified links have no hard limit")

    def feasible(L: float) -> bool:
        return optimize(scenario, L).result.feasible

    if not feasible(0.0):
        return 0.0
    if feasible(ceiling):
        raise UnboundedDistanceError(f"key still positive at {ceiling} km")
    return bisect_boundary(feasible, 0.0, ceiling, tol)


# ---------------------------------------------------------------------------
# Efficiency thresholds
# ---------------------------------------------------------------------------


def singlet_moments(eta_c: float) -> SectorMoments:
    """A perfect (a, out) Bell pair with coupling loss eta_c on each side."""
    pair = pdc_pair_terms()[1].ket
    ens = Ensemble.pure(relabel(pair, {B_H: BOB_MODES[0], B_V: BOB_MODES[1]}))
    for m in (A_H, A_V, *BOB_MODES):
        ens = apply_loss(ens, m, eta_c)
    return SectorMoments.from_ensemble(ens)


def singlet_keyrate(trust: TrustMode, eta_c: float, eta_d: float) -> KeyRateResult:
    stats = observed_statistics(singlet_moments(eta_c), eta_d)
    return key_rate(trust, stats, 1.0, 1.0, 1.0)


def critical_coupling(trust: TrustMode, eta_d: float = 1.0, tol: float = 1e-10) -> float:
    """Smallest eta_c giving a positive key on the lossy singlet, by bisection."""

    def infeasible(eta_c: float) -> bool:
        return not singlet_keyrate(trust, eta_c, eta_d).feasible

    if not singlet_keyrate(trust, 1.0, eta_d).feasible:
        return math.nan
    # bisect_boundary finds the last True point, so search on infeasibility.
    return bisect_boundary(infeasible, 0.5, 1.0, tol) + tol


def scenario_dict(scenario: Scenario) -> dict:
    return asdict(scenario)
