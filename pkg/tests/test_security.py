import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heralded_diqkd.measurement import ObservedStats
from heralded_diqkd.security import (
    CRITICAL_EFFICIENCY,
    S_MAX,
    binary_entropy,
    chsh_chi,
    eve_info_trusted,
    eve_info_untrusted,
    fiber_transmission,
    key_rate,
)

# Frozen from an independent 30-digit mpmath evaluation.
H_011 = 0.49991595816452799564
CHI_25 = 0.54356444319959640599
IE_26_005 = 0.53664994014629169046


def test_binary_entropy_values():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-15)
    assert binary_entropy(0.11) == pytest.approx(H_011, abs=1e-14)
    assert binary_entropy(1e-300) >= 0.0
    with pytest.raises(ValueError):
        binary_entropy(1.5)


def test_chi_values():
    assert chsh_chi(2.0) == pytest.approx(1.0, abs=1e-12)
    assert chsh_chi(S_MAX) == pytest.approx(0.0, abs=1e-12)
    assert chsh_chi(2.5) == pytest.approx(CHI_25, abs=1e-13)
    assert chsh_chi(1.2) == 1.0
    with pytest.raises(ValueError):
        chsh_chi(S_MAX + 1e-6)


def test_chi_monotone():
    S = np.linspace(2.0, S_MAX, 200)
    vals = [chsh_chi(s) for s in S]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_untrusted_bound_values():
    assert eve_info_untrusted(S_MAX, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert eve_info_untrusted(2.6, 0.05) == pytest.approx(IE_26_005, abs=1e-13)
    assert eve_info_untrusted(2.0, 0.1) == pytest.approx(1.0)
    assert eve_info_untrusted(2.5, 1.0) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(2.0, S_MAX), st.floats(2.0, S_MAX), st.floats(0.0, 0.3), st.floats(0.0, 0.3))
def test_untrusted_bound_monotonicity(S1, S2, mu1, mu2):
    lo_S, hi_S = sorted((S1, S2))
    lo_mu, hi_mu = sorted((mu1, mu2))
    assert eve_info_untrusted(hi_S, lo_mu) <= eve_info_untrusted(lo_S, lo_mu) + 1e-12
    assert eve_info_untrusted(lo_S, lo_mu) <= eve_info_untrusted(lo_S, hi_mu) + 1e-12
    assert 0.0 <= eve_info_untrusted(lo_S, hi_mu) <= 1.0


def secret_fraction_lossy_bell(eta: float) -> float:
    mu = 2 * eta * (1 - eta) / eta**2
    return 1 - binary_entropy(0.0) - eve_info_untrusted(S_MAX, mu)


def test_untrusted_threshold_in_closed_form():
    assert secret_fraction_lossy_bell(CRITICAL_EFFICIENCY + 1e-6) > 0
    assert secret_fraction_lossy_bell(CRITICAL_EFFICIENCY - 1e-6) <= 0


def test_trusted_bound_reduces_without_multiphotons():
    eta_d, mu_tilde_cc = 0.8, 0.7
    mu_cc = eta_d**2 * mu_tilde_cc
    assert eve_info_trusted(2.7, 0.2, mu_cc, mu_tilde_cc, eta_d) == pytest.approx(
        eve_info_untrusted(2.7, 0.2)
    )
    # Multi-photon conclusive events are handed to Eve.
    assert eve_info_trusted(2.7, 0.2, 2 * mu_cc, mu_tilde_cc, eta_d) == pytest.approx(
        0.5 * eve_info_untrusted(2.7, 0.2) + 0.5
    )
    with pytest.raises(ValueError):
        eve_info_trusted(2.7, 0.2, 0.5 * mu_cc, mu_tilde_cc, eta_d)


@pytest.mark.parametrize("eta_d", [0.5, 0.8, 1.0])
def test_trusted_threshold_independent_of_detectors(eta_d):
    def fraction(eta_c):
        mu_tilde = 2 * (1 - eta_c) / eta_c
        return 1 - eve_info_trusted(S_MAX, mu_tilde, eta_d**2 * eta_c**2, eta_c**2, eta_d)

    assert fraction(CRITICAL_EFFICIENCY + 1e-6) > 0
    assert fraction(CRITICAL_EFFICIENCY - 1e-6) <= 0


def test_ideal_device_gives_one_bit_per_pulse():
    stats = ObservedStats(Q=0.0, S=S_MAX, mu_cc=1.0, mu_ci=0.0, mu_ic=0.0, eta_d=1.0)
    result = key_rate("untrusted", stats, 1.0, 1.0, 1.0)
    assert result.K == 1.0
    assert result.secret_fraction == 1.0
    assert result.feasible


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.0, 0.1),
    st.floats(2.0, S_MAX),
    st.floats(0.01, 1.0),
    st.floats(0.0, 0.2),
    st.floats(1e-4, 1.0),
    st.floats(1e-6, 1.0),
)
def test_key_rate_is_recomputable_and_non_negative(Q, S, mu_cc, mu_ci, P_S, P_H):
    stats = ObservedStats(Q=Q, S=S, mu_cc=mu_cc, mu_ci=mu_ci, mu_ic=mu_ci, eta_d=1.0)
    result = key_rate("untrusted", stats, 1e10, P_S, P_H)
    assert result.K >= 0
    assert result.K == pytest.approx(result.recompute(), rel=1e-12)
    assert result.feasible == (result.secret_fraction > 0)


def test_unknown_mode():
    stats = ObservedStats(Q=0.0, S=S_MAX, mu_cc=1.0, mu_ci=0.0, mu_ic=0.0, eta_d=1.0)
    with pytest.raises(ValueError):
        key_rate("paranoid", stats, 1.0, 1.0, 1.0)


def test_fiber_transmission():
    assert fiber_transmission(0.0) == 1.0
    assert 0.79 <= fiber_transmission(5.0) <= 0.80
    assert fiber_transmission(50.0) == pytest.approx(0.1)
    assert fiber_transmission(10.0, 0.5) == pytest.approx(10 ** -0.5)
    with pytest.raises(ValueError):
        fiber_transmission(-1.0)
    assert math.isclose(fiber_transmission(20.0), fiber_transmission(10.0) ** 2)
