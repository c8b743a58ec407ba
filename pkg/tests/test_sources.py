import math

import pytest

from heralded_diqkd.fock_optics import ModeId
from heralded_diqkd.sources import (
    A_H,
    A_V,
    B_H,
    B_V,
    SourceParameterError,
    heralded_single_photon,
    on_demand_photon,
    pdc_entangled_state,
    pdc_pair_terms,
)

S_H = ModeId("s", "h")


def test_pair_terms_are_normalized_bell_and_double_pair():
    vac, single, double = pdc_pair_terms()
    assert (vac.order, single.order, double.order) == (0, 1, 2)
    assert double.coefficient == pytest.approx(0.75)
    for term in (vac, single, double):
        assert term.ket.norm2() == pytest.approx(1.0)
    assert single.ket.amplitude({A_H: 1, B_H: 1}) == pytest.approx(1 / math.sqrt(2))
    assert single.ket.amplitude({A_V: 1, B_V: 1}) == pytest.approx(1 / math.sqrt(2))
    # (x + y)^2 / (2 sqrt3) with x = a_h b_h, y = a_v b_v: three equal components.
    for counts in ({A_H: 2, B_H: 2}, {A_V: 2, B_V: 2}, {A_H: 1, B_H: 1, A_V: 1, B_V: 1}):
        assert abs(double.ket.amplitude(counts)) ** 2 == pytest.approx(1 / 3)


def test_entangled_state_weights():
    p = 0.01
    ens = pdc_entangled_state(p)
    assert ens.total_weight() == pytest.approx(1 + p + 0.75 * p**2)


@pytest.mark.parametrize("p", [-1e-3, 0.11])
def test_pair_probability_guard(p):
    with pytest.raises(SourceParameterError):
        pdc_entangled_state(p)
    with pytest.raises(SourceParameterError):
        heralded_single_photon(p, 0.9)


def test_perfect_herald_gives_pure_single_photon():
    P_S, ens = heralded_single_photon(3e-3, 1.0)
    assert P_S == pytest.approx(3e-3)
    assert len(ens.branches) == 1
    assert ens.total_weight() == pytest.approx(1.0)
    (_, ket), = ens.branches
    assert ket.amplitude({S_H: 1}) == pytest.approx(1.0)


def test_lossy_herald_admixes_two_photons():
    p_prime, eta_d = 4e-3, 0.8
    P_S, ens = heralded_single_photon(p_prime, eta_d)
    assert P_S == pytest.approx(p_prime * eta_d)
    weights = {max(k for _, k in next(iter(ket.terms))): w * ket.norm2() for w, ket in ens}
    assert weights[1] == pytest.approx(1.0)
    assert weights[2] == pytest.approx(2 * p_prime * (1 - eta_d))


def test_on_demand_source():
    P_S, ens = on_demand_photon()
    assert P_S == 1.0
    assert ens.total_weight() == pytest.approx(1.0)
