import random

import pytest

from germlab.core.coefficients import EXACT
from germlab.core.crsing import ELLIPTIC, InvolutionPair, NormalBlock
from germlab.core.errors import UnsupportedConfiguration
from germlab.core.linearize import apply_antilinear
from germlab.core.resonance import MonomialIdeal
from germlab.core.series import GermMap
from germlab.core.taulin import (
    check_ideal_compatibility,
    cutting_variety,
    formal_tau_linearizability,
    linearize_taus_on_ideal,
    quadric_equivalence,
)

HALF = EXACT.make("1/2")


def _rho_symmetric(psi0, rho):
    """(ψ0 + ρψ0ρ)/2 は ρ と可換"""
    total = psi0 + apply_antilinear(rho, psi0)
    return GermMap([component.scale(HALF) for component in total])


@pytest.fixture
def curved_pair(elliptic_pair, germ_builder):
    psi = _rho_symmetric(germ_builder(random.Random(11), 2, 4, density=0.5), elliptic_pair.rho)
    return elliptic_pair.conjugated(psi)


def test_linear_pair_is_linearizable(elliptic_pair):
    answer = formal_tau_linearizability(elliptic_pair)
    assert answer.status == "yes"
    assert answer.witness is None
    assert answer.result.psi == elliptic_pair.identity()


def test_quadric_equivalence_of_linear_pair(elliptic_pair):
    answer = quadric_equivalence(elliptic_pair, max_omega_k=3)
    assert answer.status == "biholomorphic"
    # |1/16 - 1/4| が最小の小分母
    assert [e.value for e in answer.omega.entries] == pytest.approx([3 / 16] * 3)


def test_curved_pair_linearizes_on_resonant_ideal(curved_pair):
    ideal = MonomialIdeal(2, [(1, 1)])
    result = linearize_taus_on_ideal(curved_pair, ideal)
    assert result.verification["involutions"] == {"tau1": True, "tau2": True}
    assert set(result.verification["pnormal"]) == {"eta1"}


def test_curved_pair_progress(curved_pair):
    seen = []
    linearize_taus_on_ideal(curved_pair, MonomialIdeal(2, [(1, 1)]), progress_callback=seen.append)
    assert seen == sorted(seen)
    assert seen[-1] == pytest.approx(1.0)


def test_ideal_compatibility(elliptic_pair):
    ip = elliptic_pair
    good = check_ideal_compatibility(MonomialIdeal(2, [(1, 1)]), ip.T1, ip.T2, ip.rho, 4, EXACT)
    assert good.compatible
    bad = check_ideal_compatibility(MonomialIdeal(2, [(2, 0)]), ip.T1, ip.T2, ip.rho, 4, EXACT)
    assert not bad.compatible
    assert bad.witnesses[0]["map"] == "T1"
    zero = check_ideal_compatibility(MonomialIdeal.zero(2), ip.T1, ip.T2, ip.rho, 4, EXACT)
    assert zero.vacuous


def test_incompatible_ideal_is_rejected(elliptic_pair):
    with pytest.raises(UnsupportedConfiguration):
        linearize_taus_on_ideal(elliptic_pair, MonomialIdeal(2, [(2, 0)]))


def test_cutting_variety_needs_decomposition(elliptic_pair):
    with pytest.raises(UnsupportedConfiguration):
        cutting_variety(elliptic_pair)


@pytest.mark.parametrize("seed", range(10))
def test_tau_round_trip_recovers_normalized_psi(germ_builder, seed):
    pair = InvolutionPair.from_normal_form([NormalBlock(ELLIPTIC, "1/4", A=[["2"]])], 0, 6, EXACT)
    psi0 = _rho_symmetric(germ_builder(random.Random(seed), 2, 6, max_degree=3), pair.rho)
    # η 成分の η 共鳴項 (a - b = -1) と ρ で対応する ζ 成分の項を落とす
    psi0 = GermMap(
        [
            psi0[0].project(lambda Q: Q[0] - Q[1] != 1),
            psi0[1].project(lambda Q: Q[0] - Q[1] != -1),
        ]
    )
    result = linearize_taus_on_ideal(pair.conjugated(psi0), MonomialIdeal.zero(2))
    assert result.psi == psi0
    assert result.verification["rho_commutes"]
    assert result.verification["pnormal"] == {"eta1": "holds"}
