import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heralded_diqkd.amplifier import (
    BOB_MODES,
    HERALD_PATTERNS,
    AmplifierParameterError,
    AmplifierParams,
    closed_form_PH,
    ideal_amplify,
    run_amplifier,
)
from heralded_diqkd.fock_optics import FockKet
from heralded_diqkd.measurement import SectorMoments, click_statistics
from heralded_diqkd.security import S_MAX

OUT_H, OUT_V = BOB_MODES


def expected_output(alpha, bh, bv, t):
    n = 6
    return (
        FockKet({(): alpha * (1 - t) / 2}, n)
        + FockKet.from_counts({OUT_H: 1}, bh * math.sqrt(t * (1 - t)) / 2, n)
        + FockKet.from_counts({OUT_V: 1}, bv * math.sqrt(t * (1 - t)) / 2, n)
    )


def distance(a, b):
    return math.sqrt((a + b.scaled(-1)).norm2())


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.5, 0.999),
    st.floats(-1, 1),
    st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False),
    st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False),
)
def test_ideal_amplifier_output_state(t, alpha, bh, bv):
    total, out = ideal_amplify(alpha, bh, bv, t)
    expected = expected_output(alpha, bh, bv, t)
    assert distance(out, expected) < 1e-10
    assert total == pytest.approx(4 * expected.norm2(), abs=1e-12)


def test_half_transmission_is_teleportation():
    alpha, bh, bv = 0.6, 0.48, 0.64j
    _, out = ideal_amplify(alpha, bh, bv, 0.5)
    psi_in = (
        FockKet({(): alpha}, 6)
        + FockKet.from_counts({OUT_H: 1}, bh, 6)
        + FockKet.from_counts({OUT_V: 1}, bv, 6)
    )
    assert distance(out, psi_in.scaled(0.25)) < 1e-10


def ideal_state(t, eta_t, p):
    return run_amplifier(AmplifierParams(t, eta_t, 1.0, 1.0, p, 0.0, "on_demand"))


@pytest.mark.parametrize("p", [1e-4, 1e-3, 1e-2])
@pytest.mark.parametrize("t,eta_t", [(0.9, 0.3), (0.98, 0.05), (0.6, 0.9)])
def test_ideal_limit_sector_weights(p, t, eta_t):
    hs = ideal_state(t, eta_t, p)
    weights = hs.P * hs.P_H
    assert abs(weights[0, 0] - (1 - t) ** 2) < 10 * p**2
    assert abs(weights[1, 0] - p * (1 - t) ** 2 * (1 - eta_t)) < 10 * p**2
    assert abs(weights[1, 1] - t * (1 - t) * p * eta_t) < 10 * p**2
    assert abs(hs.P_H - closed_form_PH(t, p, eta_t)) < 10 * p**2


def test_ideal_limit_entangled_component_is_bell_state():
    hs = ideal_state(0.95, 0.2, 1e-3)
    rho11 = hs.sectors()[(1, 1)]
    assert click_statistics(rho11, 1.0).S == pytest.approx(S_MAX, abs=1e-10)


def test_every_herald_pattern_is_corrected():
    hs = ideal_state(0.95, 0.2, 1e-3)
    assert set(hs.patterns) == set(HERALD_PATTERNS)
    for part in hs.patterns.values():
        sm = SectorMoments.from_ensemble(part)
        # Each corrected pattern alone carries a maximally entangled rho_11.
        corr = sm.moments[1, 1] / sm.weight[1, 1]
        assert np.allclose(corr, np.eye(2), atol=1e-10)


def test_weights_normalize_and_lossy_pipeline_runs():
    hs = run_amplifier(AmplifierParams(0.98, 0.63, 0.9, 0.95, 2e-3, 3e-3, "heralded"))
    assert hs.P.sum() == pytest.approx(1.0)
    assert (hs.P >= 0).all()
    assert hs.P_H == pytest.approx(hs.ensemble.total_weight())


@pytest.mark.parametrize(
    "kwargs",
    [dict(t=0.4), dict(t=1.0), dict(t=0.9, eta_c=1.2), dict(t=0.9, p=0.2), dict(t=0.9, source_kind="laser")],
)
def test_parameter_guards(kwargs):
    with pytest.raises((AmplifierParameterError, ValueError)):
        AmplifierParams(**kwargs)
