import numpy as np
import pytest

from besovcap.qs import (
    GaugeParams,
    PowerGauge,
    SampledMap,
    TabulatedGauge,
    besov_morphism_norm,
    default_family,
    detector_configs,
    identity_map,
    kink_inverse_map,
    promote_gauge,
    qs_capacity_detector,
    qs_verdict,
    read_pairing_csv,
    snowflake_identity_map,
    weak_qs_constant,
)
from besovcap.space import gen_interval


def brute_H(m):
    DZ = m.domain.distance_matrix()
    DW = m.pulled_codomain_distances()
    n = m.domain.n
    best = 0.0
    for x in range(n):
        for y in range(n):
            for z in range(n):
                if len({x, y, z}) < 3 or DZ[x, z] > DZ[x, y]:
                    continue
                best = max(best, DW[x, z] / DW[x, y])
    return best


@pytest.mark.parametrize("make", [
    lambda: identity_map(gen_interval(4)),
    lambda: snowflake_identity_map(4),
    lambda: kink_inverse_map(3),
    lambda: kink_inverse_map(4),
])
def test_exhaustive_matches_brute_force(make):
    m = make()
    assert weak_qs_constant(m).H_hat == brute_H(m)


def test_identity_and_snowflake_exact():
    assert weak_qs_constant(identity_map(gen_interval(7))).H_hat == 1.0
    assert weak_qs_constant(snowflake_identity_map(7)).H_hat == 1.0


def test_kink_values():
    assert [weak_qs_constant(kink_inverse_map(k)).H_hat for k in (4, 5, 6)] == [4.0, 5.0, 8.0]


def test_enumerated_equals_exhaustive():
    m = kink_inverse_map(4)
    n = m.domain.n
    full = weak_qs_constant(m, triple_budget=n ** 3)
    assert full.mode == "enumerated"
    assert full.H_hat == weak_qs_constant(m).H_hat
    sampled = weak_qs_constant(m, triple_budget=500, seed=1)
    assert sampled.mode == "sampled" and sampled.H_hat <= full.H_hat
    with pytest.raises(ValueError):
        weak_qs_constant(m, exhaustive=False)


def test_locality_radius_lowers_value():
    m = kink_inverse_map(5)
    assert weak_qs_constant(m, rho=0.2).H_hat <= weak_qs_constant(m).H_hat


def test_sampled_map_validation():
    Z = gen_interval(2)
    with pytest.raises(ValueError):
        SampledMap(Z, Z, [0, 0, 1, 2, 3])
    with pytest.raises(ValueError):
        SampledMap(Z, gen_interval(3), np.arange(5))
    m = SampledMap(Z, Z, [4, 3, 2, 1, 0])
    assert list(m.inverse) == [4, 3, 2, 1, 0]


def test_gauge_promotion_example():
    params = GaugeParams(PowerGauge(), kappa=0.9, r0=0.3, diamZ=0.9, diamW=0.9)
    g = promote_gauge(params)
    assert g(1.0) == pytest.approx(6.0)
    assert g.branches(1.0) == pytest.approx([1, 1, 6, 6])


def test_gauge_validation():
    with pytest.raises(ValueError):
        TabulatedGauge([0.1, 0.2, 0.3], [1.0, 0.5, 2.0])
    with pytest.raises(ValueError):
        GaugeParams(PowerGauge(), kappa=1, r0=1, diamZ=1, diamW=1, C_L=1.0)
    wiggly = lambda t: np.asarray(t) * (1.5 + np.sin(np.log(np.asarray(t) + 1e-300) * 40))
    with pytest.raises(ValueError):
        promote_gauge(GaugeParams(wiggly, 1, 1, 1, 1))


def test_tabulated_gauge_interpolates():
    g = TabulatedGauge([1.0, 2.0], [1.0, 3.0])
    assert g(0.5) == pytest.approx(0.5)
    assert g(1.5) == pytest.approx(2.0)
    assert g(3.0) == pytest.approx(5.0)


def test_identity_morphism_is_one():
    m = identity_map(gen_interval(6))
    rep = besov_morphism_norm(m, default_family(m.codomain), 0.5, 0.5, 2.0)
    assert rep.sup == pytest.approx(1.0, abs=1e-9)


def test_morphism_scale_invariant():
    m = kink_inverse_map(5)
    fam = default_family(m.codomain, n=4)
    a = besov_morphism_norm(m, fam, 0.5, 0.5, 2.0).ratios
    b = besov_morphism_norm(m, [3.0 * f for f in fam], 0.5, 0.5, 2.0).ratios
    assert a == pytest.approx(b, rel=1e-12)


def test_morphism_excludes_constants():
    m = identity_map(gen_interval(4))
    rep = besov_morphism_norm(m, [np.ones(17), np.arange(17.0)], 0.5, 0.5, 2.0)
    assert rep.excluded == [0]
    with pytest.raises(ValueError):
        besov_morphism_norm(m, [np.ones(17)], 0.5, 0.5, 2.0)


def test_detector_identity_is_trivial():
    m = identity_map(gen_interval(5))
    rep = qs_capacity_detector(m, 0.5, 0.5, 2.0, detector_configs(m, 8), C_L=1.2)
    assert all(r.status == "trivial" for r in rep.rows)
    assert rep.max_implied["1-p"] == pytest.approx(4 * 1.2 ** 2)


def test_detector_kink_rows():
    m = kink_inverse_map(6)
    cfgs = detector_configs(m, 6)
    rep = qs_capacity_detector(m, 0.5, 0.5, 2.0, cfgs, C_L=1.05)
    active = [r for r in rep.rows if r.status == "ok"]
    assert active
    for r in active:
        assert r.cap_W > 0 and r.cap_Z > 0
        assert r.L / r.l > 4 * 1.05 ** 2
    # fewer configurations never raise the reported maximum
    sub = qs_capacity_detector(m, 0.5, 0.5, 2.0, cfgs[:3], C_L=1.05, T=rep.T)
    for key in rep.max_implied:
        assert sub.max_implied[key] <= rep.max_implied[key] + 1e-12
    assert rep.to_csv().splitlines()[0].startswith("x,y,z")


def test_verdicts():
    assert qs_verdict([4, 5, 8]) == "non-QS-trend"
    assert qs_verdict([1, 1, 1]) == "consistent-with-QS"
    assert qs_verdict([2, 5, 3]) == "inconclusive"
    assert qs_verdict([3]) == "inconclusive"


def test_pairing_csv():
    assert list(read_pairing_csv("z_index,w_index\n0,2\n1,0\n2,1\n", 3)) == [2, 0, 1]
    with pytest.raises(ValueError):
        read_pairing_csv("a,b\n0,0\n", 1)
    with pytest.raises(ValueError):
        read_pairing_csv("z_index,w_index\n0,0\n", 2)
