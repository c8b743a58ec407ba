"""Sparse truncated-Fock-space linear optics.

States are kets over named bosonic modes, stored as a map from a sparse
occupation pattern to a complex amplitude.  Mixed states are ensembles of
weighted kets.  Everything here is immutable; every operation returns a new
object.

Beamsplitter convention (two input modes ``m1``, ``m2`` mapped onto output
modes ``X``, ``Y``)::

    m1^dag -> sqrt(t) X^dag + sqrt(1-t) Y^dag
    m2^dag -> sqrt(1-t) X^dag - sqrt(t) Y^dag

With ``m1 = c``, ``m2 = in`` and ``t = 1/2`` this gives
``c^dag -> (d^dag + dt^dag)/sqrt2`` and ``in^dag -> (d^dag - dt^dag)/sqrt2``,
i.e. ``d = (c + in)/sqrt2`` and ``dt = (c - in)/sqrt2``.  The matrix is a real
symmetric orthogonal involution, so applying it twice is the identity.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

DEFAULT_N_MAX = 4

# Terms below this fraction of the largest amplitude in a ket are dropped
# (cancellation residue, e.g. Hong-Ou-Mandel coincidences).
AMPLITUDE_PRUNE = 1e-15
# Branches whose weight falls below this fraction of their parent are dropped.
BRANCH_PRUNE = 1e-15


class TruncationError(ValueError):
    """Raised when an operation would exceed the photon-number truncation."""


class ModeId(NamedTuple):
    """A bosonic mode: spatial label plus polarization (``"h"`` or ``"v"``).

    Tuple ordering gives the canonical total order of modes.
    """

    spatial: str
    pol: str

    def __str__(self) -> str:
        return f"{self.spatial}_{self.pol}"


def mode(label: str) -> ModeId:
    """Parse ``"a_h"`` style labels into a :class:`ModeId`."""
    spatial, _, pol = label.rpartition("_")
    if not spatial or pol not in ("h", "v"):
        raise ValueError(f"bad mode label {label!r}")
    return ModeId(spatial, pol)


# An occupation pattern: tuple of (mode, count) pairs, sorted by mode, count > 0.
Occupation = tuple


def _occ_get(occ: Occupation, m: ModeId) -> int:
    for mm, n in occ:
        if mm == m:
            return n
    return 0


def _occ_set(occ: Occupation, m: ModeId, n: int) -> Occupation:
    items = [(mm, k) for mm, k in occ if mm != m]
    if n > 0:
        items.append((m, n))
    items.sort()
    return tuple(items)


def _occ_total(occ: Occupation) -> int:
    return sum(n for _, n in occ)


@dataclass(frozen=True)
class FockKet:
    """Sparse superposition of Fock basis states (not necessarily normalized)."""

    terms: Mapping[Occupation, complex]
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        for occ in self.terms:
            if _occ_total(occ) > self.n_max:
                raise TruncationError(
                    f"term with {_occ_total(occ)} photons exceeds n_max={self.n_max}"
                )

    @classmethod
    def vacuum(cls, n_max: int = DEFAULT_N_MAX) -> FockKet:
        return cls({(): 1.0 + 0j}, n_max)

    @classmethod
    def from_counts(
        cls, counts: Mapping[ModeId, int], amplitude: complex = 1.0, n_max: int = DEFAULT_N_MAX
    ) -> FockKet:
        """Single normalized Fock basis state, e.g. ``{a_h: 1, b_h: 1}``."""
        occ = tuple(sorted((m, n) for m, n in counts.items() if n > 0))
        return cls({occ: complex(amplitude)}, n_max)

    @classmethod
    def _build(cls, acc: Mapping[Occupation, complex], n_max: int) -> FockKet:
        if not acc:
            return cls({}, n_max)
        biggest = max(abs(a) for a in acc.values())
        cut = biggest * AMPLITUDE_PRUNE
        return cls({o: a for o, a in acc.items() if abs(a) > cut}, n_max)

    def norm2(self) -> float:
        return sum(abs(a) ** 2 for a in self.terms.values())

    def normalized(self) -> FockKet:
        nrm = math.sqrt(self.norm2())
        if nrm == 0.0:
            raise ZeroDivisionError("cannot normalize the zero ket")
        return FockKet({o: a / nrm for o, a in self.terms.items()}, self.n_max)

    def scaled(self, factor: complex) -> FockKet:
        return FockKet._build({o: a * factor for o, a in self.terms.items()}, self.n_max)

    def amplitude(self, counts: Mapping[ModeId, int]) -> complex:
        occ = tuple(sorted((m, n) for m, n in counts.items() if n > 0))
        return self.terms.get(occ, 0j)

    def modes(self) -> set[ModeId]:
        return {m for occ in self.terms for m, _ in occ}

    def photon_count(self, modes: Iterable[ModeId]) -> set[int]:
        """Set of total photon numbers found in ``modes`` across the terms."""
        modes = set(modes)
        return {sum(n for m, n in occ if m in modes) for occ in self.terms}

    def with_n_max(self, n_max: int) -> FockKet:
        return FockKet(self.terms, n_max)

    def __add__(self, other: FockKet) -> FockKet:
        acc: dict[Occupation, complex] = defaultdict(complex, self.terms)
        for o, a in other.terms.items():
            acc[o] += a
        return FockKet._build(acc, max(self.n_max, other.n_max))

    def tensor(self, other: FockKet) -> FockKet:
        """Product state; the two kets must live on disjoint modes."""
        if self.modes() & other.modes():
            raise ValueError("tensor product of kets sharing modes")
        acc = {}
        for o1, a1 in self.terms.items():
            for o2, a2 in other.terms.items():
                acc[tuple(sorted(o1 + o2))] = a1 * a2
        return FockKet._build(acc, max(self.n_max, other.n_max))

    def inner(self, other: FockKet) -> complex:
        return sum(a.conjugate() * other.terms.get(o, 0j) for o, a in self.terms.items())


def apply_creation(state: FockKet, m: ModeId) -> FockKet:
    """Bosonic creation operator on mode ``m``: |n> -> sqrt(n+1)|n+1>."""
    acc = {}
    for occ, amp in state.terms.items():
        if _occ_total(occ) + 1 > state.n_max:
            raise TruncationError(f"creation on {m} exceeds n_max={state.n_max}")
        n = _occ_get(occ, m)
        acc[_occ_set(occ, m, n + 1)] = amp * math.sqrt(n + 1)
    return FockKet._build(acc, state.n_max)


def apply_annihilation(state: FockKet, m: ModeId) -> FockKet:
    acc = {}
    for occ, amp in state.terms.items():
        n = _occ_get(occ, m)
        if n:
            acc[_occ_set(occ, m, n - 1)] = amp * math.sqrt(n)
    return FockKet._build(acc, state.n_max)


def _two_mode_substitution(
    state: FockKet,
    m1: ModeId,
    m2: ModeId,
    u: tuple[tuple[complex, complex], tuple[complex, complex]],
    out: tuple[ModeId, ModeId],
) -> FockKet:
    """Substitute m1^dag -> u00 X^dag + u01 Y^dag, m2^dag -> u10 X^dag + u11 Y^dag."""
    x, y = out
    (u00, u01), (u10, u11) = u
    acc: dict[Occupation, complex] = defaultdict(complex)
    for occ, amp in state.terms.items():
        n1, n2 = _occ_get(occ, m1), _occ_get(occ, m2)
        rest = tuple((mm, k) for mm, k in occ if mm not in (m1, m2))
        if any(mm in (x, y) for mm, _ in rest):
            raise ValueError(f"output modes {x}, {y} already occupied")
        if n1 == 0 and n2 == 0:
            acc[occ] += amp
            continue
        pref = amp / math.sqrt(math.factorial(n1) * math.factorial(n2))
        for k1 in range(n1 + 1):
            c1 = math.comb(n1, k1) * u00**k1 * u01 ** (n1 - k1)
            if c1 == 0:
                continue
            for k2 in range(n2 + 1):
                c2 = math.comb(n2, k2) * u10**k2 * u11 ** (n2 - k2)
                if c2 == 0:
                    continue
                nx, ny = k1 + k2, n1 + n2 - k1 - k2
                coeff = pref * c1 * c2 * math.sqrt(math.factorial(nx) * math.factorial(ny))
                new = list(rest)
                if nx:
                    new.append((x, nx))
                if ny:
                    new.append((y, ny))
                acc[tuple(sorted(new))] += coeff
    return FockKet._build(acc, state.n_max)


def apply_beamsplitter(
    state: FockKet,
    in_mode: ModeId,
    refl_mode: ModeId,
    t: float,
    out_modes: tuple[ModeId, ModeId] | None = None,
) -> FockKet:
    """Mix two modes on a beamsplitter of intensity transmission ``t``.

    ``in_mode`` is transmitted into the first output mode and reflected into
    the second one (see the module docstring for the exact matrix).  By
    default the outputs keep the input labels.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmission t={t} outside [0, 1]")
    if in_mode == refl_mode:
        raise ValueError("beamsplitter needs two distinct modes")
    out = out_modes or (in_mode, refl_mode)
    st, sr = math.sqrt(t), math.sqrt(1.0 - t)
    return _two_mode_substitution(state, in_mode, refl_mode, ((st, sr), (sr, -st)), out)


def rotate_polarization(state: FockKet, spatial: str, angle: float) -> FockKet:
    """h^dag -> cos(a) h^dag + sin(a) v^dag, v^dag -> -sin(a) h^dag + cos(a) v^dag."""
    h, v = ModeId(spatial, "h"), ModeId(spatial, "v")
    c, s = math.cos(angle), math.sin(angle)
    return _two_mode_substitution(state, h, v, ((c, s), (-s, c)), (h, v))


def apply_phase(state: FockKet, m: ModeId, phi: float) -> FockKet:
    """Phase shifter: |n> -> exp(i n phi)|n> on mode ``m``."""
    acc = {}
    for occ, amp in state.terms.items():
        n = _occ_get(occ, m)
        acc[occ] = amp * complex(math.cos(n * phi), math.sin(n * phi)) if n else amp
    return FockKet._build(acc, state.n_max)


def relabel(state: FockKet, mapping: Mapping[ModeId, ModeId]) -> FockKet:
    acc = {}
    for occ, amp in state.terms.items():
        acc[tuple(sorted((mapping.get(m, m), n) for m, n in occ))] = amp
    if len(acc) != len(state.terms):
        raise ValueError("relabel merged distinct modes")
    return FockKet(acc, state.n_max)


@dataclass(frozen=True)
class Ensemble:
    """Weighted mixture ``rho = sum_k w_k |psi_k><psi_k|``.

    Kets need not be normalized; the probability mass of a branch is
    ``w_k * <psi_k|psi_k>``.  The total mass may differ from one.
    """

    branches: tuple[tuple[float, FockKet], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for w, _ in self.branches:
            if w < 0:
                raise ValueError(f"negative branch weight {w}")

    @classmethod
    def pure(cls, ket: FockKet, weight: float = 1.0) -> Ensemble:
        return cls(((float(weight), ket),))

    @classmethod
    def from_branches(cls, branches: Iterable[tuple[float, FockKet]]) -> Ensemble:
        """Drop empty kets and fold each ket's norm into its weight."""
        out = []
        for w, ket in branches:
            n2 = ket.norm2()
            if w <= 0.0 or n2 == 0.0:
                continue
            out.append((w * n2, ket.scaled(1.0 / math.sqrt(n2))))
        return cls(tuple(out))

    def __iter__(self) -> Iterator[tuple[float, FockKet]]:
        return iter(self.branches)

    def __len__(self) -> int:
        return len(self.branches)

    def __add__(self, other: Ensemble) -> Ensemble:
        return Ensemble(self.branches + other.branches)

    def total_weight(self) -> float:
        return math.fsum(w * k.norm2() for w, k in self.branches)

    def scaled(self, factor: float) -> Ensemble:
        if factor < 0:
            raise ValueError("negative scale")
        if factor == 0:
            return Ensemble()
        return Ensemble(tuple((w * factor, k) for w, k in self.branches))

    def normalized(self) -> Ensemble:
        tot = self.total_weight()
        if tot <= 0:
            raise ZeroDivisionError("ensemble has no probability mass")
        return self.scaled(1.0 / tot)

    def map_kets(self, fn) -> Ensemble:
        return Ensemble(tuple((w, fn(k)) for w, k in self.branches))

    def tensor(self, other: Ensemble) -> Ensemble:
        return Ensemble(
            tuple((w1 * w2, k1.tensor(k2)) for w1, k1 in self.branches for w2, k2 in other.branches)
        )


def apply_loss(state: Ensemble, m: ModeId, eta: float) -> Ensemble:
    """Loss channel of transmission ``eta`` on mode ``m``.

    Equivalent to a beamsplitter onto a fresh environment mode followed by a
    partial trace; each environment photon count becomes its own branch.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmission {eta} outside [0, 1]")
    if eta == 1.0:
        return state
    out = []
    for w, ket in state.branches:
        by_k: dict[int, dict[Occupation, complex]] = defaultdict(dict)
        for occ, amp in ket.terms.items():
            n = _occ_get(occ, m)
            for k in range(n + 1):
                kraus = math.sqrt(math.comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k)
                if kraus == 0.0:
                    continue
                by_k[k][_occ_set(occ, m, n - k)] = amp * kraus
        for k in sorted(by_k):
            new = FockKet._build(by_k[k], ket.n_max)
            n2 = new.norm2()
            if n2 > BRANCH_PRUNE:
                out.append((w * n2, new.scaled(1.0 / math.sqrt(n2))))
    return Ensemble(tuple(out))


def single_click_probability(n: int, eta_d: float) -> float:
    """P(exactly one click | n photons) for a number-resolving detector."""
    if n == 0:
        return 0.0
    return n * eta_d * (1.0 - eta_d) ** (n - 1)


def detect_single_click(
    state: Ensemble, click_mode: ModeId, quiet_modes: Sequence[ModeId], eta_d: float
) -> tuple[float, Ensemble]:
    """Condition on exactly one click in ``click_mode`` and none in ``quiet_modes``.

    Detectors are number resolving with per-photon efficiency ``eta_d``.  The
    detected modes are destroyed (left in vacuum).  Returns the unnormalized
    outcome probability and the conditioned ensemble whose total weight equals
    that probability.
    """
    if click_mode in quiet_modes:
        raise ValueError("click mode cannot also be a quiet mode")
    detected = (click_mode, *quiet_modes)
    out = []
    for w, ket in state.branches:
        groups: dict[tuple[int, ...], dict[Occupation, complex]] = defaultdict(dict)
        for occ, amp in ket.terms.items():
            counts = tuple(_occ_get(occ, m) for m in detected)
            if counts[0] == 0:
                continue
            rest = tuple((mm, k) for mm, k in occ if mm not in detected)
            groups[counts][rest] = amp
        for counts in sorted(groups):
            factor = single_click_probability(counts[0], eta_d)
            for m_quiet in counts[1:]:
                factor *= (1.0 - eta_d) ** m_quiet
            if factor == 0.0:
                continue
            new = FockKet(groups[counts], ket.n_max)
            n2 = new.norm2()
            if n2 * factor > BRANCH_PRUNE:
                out.append((w * factor * n2, new.scaled(1.0 / math.sqrt(n2))))
    result = Ensemble(tuple(out))
    return result.total_weight(), result


def photon_number_marginal(state: Ensemble, modes: Iterable[ModeId]) -> dict[int, float]:
    """Normalized distribution of the total photon number in ``modes``."""
    modes = set(modes)
    acc: dict[int, float] = defaultdict(float)
    for w, ket in state.branches:
        for occ, amp in ket.terms.items():
            acc[sum(n for m, n in occ if m in modes)] += w * abs(amp) ** 2
    tot = math.fsum(acc.values())
    if tot <= 0:
        raise ZeroDivisionError("ensemble has no probability mass")
    return {n: p / tot for n, p in sorted(acc.items())}
