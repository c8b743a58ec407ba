import logging
import math
from dataclasses import replace

import pytest

from heralded_diqkd.optimizer import (
    P_BOUNDS,
    PRESETS,
    T_BOUNDS,
    Scenario,
    UnboundedDistanceError,
    bisect_boundary,
    critical_coupling,
    evaluate_keyrate,
    max_distance,
    optimize,
    singlet_keyrate,
    sweep_distance,
)
from heralded_diqkd.security import CRITICAL_EFFICIENCY, fiber_transmission

UNTRUSTED = PRESETS["fig4-a-heralded"]
DIRECT = PRESETS["fig4-a-direct"]


def test_scenario_guards():
    with pytest.raises(ValueError):
        Scenario(eta_c=1.5)
    with pytest.raises(ValueError):
        Scenario(source="laser")
    with pytest.raises(ValueError):
        Scenario(rep_rate_hz=0)


def test_presets_cover_both_figures():
    for name in ("a-heralded", "a-ondemand", "b-heralded", "b-ondemand"):
        assert PRESETS[f"fig4-{name}"].visibility == 1.0
        assert PRESETS[f"fig6-{name}"].visibility == 0.994
    assert PRESETS["fig4-b-heralded"].eta_d == 0.8
    assert PRESETS["fig4-a-heralded"].trust == "untrusted"


def test_reference_operating_point():
    result = evaluate_keyrate(UNTRUSTED, 10.0, 2e-3, 3e-3, 0.98)
    assert result.P_S == pytest.approx(3e-3 * 0.95)
    assert 0.5 / 60 <= result.K <= 2.0 / 60
    assert result.K == pytest.approx(result.recompute(), rel=1e-12)


def test_lossless_ideal_direct_link_gives_one_bit_per_conclusive_pair():
    ideal = Scenario(eta_c=1.0, eta_d=1.0, amplifier=False, source="on_demand")
    result = evaluate_keyrate(ideal, 0.0, 0.01)
    assert result.secret_fraction == pytest.approx(1.0, abs=1e-12)
    assert result.K == pytest.approx(ideal.rep_rate_hz * result.mu_cc, rel=1e-12)


def test_zero_visibility_kills_the_key():
    blind = replace(UNTRUSTED, visibility=0.0)
    assert evaluate_keyrate(blind, 10.0, 2e-3, 3e-3, 0.98).K == 0.0


def test_amplifier_needs_t():
    with pytest.raises(ValueError):
        evaluate_keyrate(UNTRUSTED, 10.0, 2e-3, 3e-3)
    with pytest.raises(ValueError):
        evaluate_keyrate(UNTRUSTED, -1.0, 2e-3, 3e-3, 0.98)


def test_optimum_reproduces_on_reevaluation():
    res = optimize(PRESETS["fig4-a-ondemand"], 50.0)
    again = evaluate_keyrate(PRESETS["fig4-a-ondemand"], 50.0, res.p, res.p_prime, res.t)
    assert again.K == res.K
    assert P_BOUNDS[0] <= res.p <= P_BOUNDS[1]
    assert T_BOUNDS[0] <= res.t <= T_BOUNDS[1]
    assert res.p_prime == 0.0


def test_boundary_optimum_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="heralded_diqkd.optimizer"):
        res = optimize(DIRECT, 0.5)
    assert res.at_boundary
    assert "search boundary" in caplog.text


def test_sweep_is_ordered_monotone_and_parallel_invariant():
    distances = [60.0, 20.0, 40.0]
    serial = sweep_distance(PRESETS["fig4-a-ondemand"], distances)
    parallel = sweep_distance(PRESETS["fig4-a-ondemand"], distances, workers=2)
    assert [r.L_km for r in serial] == distances
    assert [r.row() for r in serial] == [r.row() for r in parallel]
    ordered = sorted(serial, key=lambda r: r.L_km)
    assert all(a.K >= b.K for a, b in zip(ordered, ordered[1:]))
    # Longer links push the beamsplitter toward full transmission.
    assert all(a.t <= b.t + 1e-3 for a, b in zip(ordered, ordered[1:]))


def test_direct_link_threshold_matches_efficiency_product():
    def feasible(L):
        return evaluate_keyrate(DIRECT, L, 1e-9).feasible

    L_star = bisect_boundary(feasible, 0.0, 5.0, 1e-9)
    product = math.sqrt(fiber_transmission(L_star)) * DIRECT.eta_d * DIRECT.eta_c
    assert product == pytest.approx(CRITICAL_EFFICIENCY, abs=1e-6)


def test_max_distance_guards():
    with pytest.raises(ValueError):
        max_distance(UNTRUSTED)
    weak = replace(DIRECT, eta_c=0.8)
    assert max_distance(weak) == 0.0
    lossless = replace(DIRECT, eta_c=1.0, eta_d=1.0, attenuation_db_km=0.0)
    with pytest.raises(UnboundedDistanceError):
        max_distance(lossless)


def test_singlet_thresholds():
    assert critical_coupling("untrusted") == pytest.approx(CRITICAL_EFFICIENCY, abs=1e-8)
    assert critical_coupling("trusted", 0.5) == pytest.approx(CRITICAL_EFFICIENCY, abs=1e-8)
    # Untrusted detectors share the budget with coupling.
    assert critical_coupling("untrusted", 0.95) == pytest.approx(CRITICAL_EFFICIENCY / 0.95, abs=1e-8)
    assert math.isnan(critical_coupling("untrusted", 0.5))
    assert singlet_keyrate("untrusted", 1.0, 1.0).secret_fraction == pytest.approx(1.0)
