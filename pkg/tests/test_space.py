import json
import math

import numpy as np
import pytest

from besovcap.errors import ResourceLimitError
from besovcap.space import (
    ANALYTIC_Q,
    BallQuery,
    PointCloud,
    ahlfors_ratio_band,
    ball_masses,
    ball_measure,
    ball_members,
    estimate_ahlfors_Q,
    gen_cantor,
    gen_interval,
    gen_sierpinski_carpet,
    gen_sierpinski_gasket,
    gen_snowflake_interval,
    make_space,
)


@pytest.mark.parametrize("kind,level,n", [
    ("interval", 6, 65), ("cantor", 5, 32), ("carpet", 3, 512), ("gasket", 4, 81),
    ("snowflake", 5, 33),
])
def test_sizes(kind, level, n):
    c = make_space(kind, level)
    assert c.n == n
    assert 0 < c.diam < 1
    assert math.isclose(c.weights.sum(), 1.0)


def test_interval_diameter_and_spacing():
    c = gen_interval(4)
    assert c.diam == pytest.approx(0.9)
    assert c.min_gap == pytest.approx(0.9 / 16)
    assert c.mesh == pytest.approx(0.9 / 16)


def test_cantor_gaps():
    c = gen_cantor(3)
    D = c.distance_matrix()
    # smallest gap is one level-3 interval length (2 units of 3**-3, rescaled)
    assert D[D > 0].min() == pytest.approx(2 * 0.9 / 26)


def test_carpet_has_no_center_square():
    c = gen_sierpinski_carpet(1)
    assert c.n == 8
    assert not np.any(np.all(c.coords == [1, 1], axis=1))


def test_gasket_points_distinct():
    c = gen_sierpinski_gasket(3)
    assert len(np.unique(c.coords, axis=0)) == 27


def test_snowflake_distance():
    base = gen_interval(4)
    s = gen_snowflake_interval(4, 0.5)
    assert np.allclose(s.distance_matrix(), base.distance_matrix() ** 0.5)
    assert gen_snowflake_interval(4, 1.0) is not None


def test_explicit_metric_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 1)), [0.5, 0.5], metric_kind="explicit",
                   matrix=[[0, 0.3], [0.2, 0]])
    c = PointCloud(np.zeros((2, 1)), [0.5, 0.5], metric_kind="explicit",
                   matrix=[[0, 0.3], [0.3, 0]])
    assert c.diam == 0.3


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PointCloud(np.arange(3.0), [1, 0, 1], scale=0.1)
    with pytest.raises(ValueError):
        PointCloud(np.arange(3.0), [1, 1, 1], scale=1.0)  # diameter 2
    with pytest.raises(ValueError):
        make_space("torus", 3)
    with pytest.raises(ResourceLimitError):
        gen_sierpinski_carpet(6)


def test_round_trip_json():
    c = gen_cantor(4)
    d = json.loads(json.dumps(c.to_dict()))
    back = PointCloud.from_dict(d)
    assert np.array_equal(back.distance_matrix(), c.distance_matrix())
    assert back.name == c.name


def test_csv_header():
    text = gen_interval(2).to_csv()
    assert text.splitlines()[0].startswith("index")
    assert len(text.strip().splitlines()) == 6


def test_ball_queries(interval6):
    q = BallQuery(32, 0.9 / 64 * 2)
    assert list(ball_members(interval6, q)) == [30, 31, 32, 33, 34]
    assert ball_measure(interval6, q) == pytest.approx(5 / 65)
    open_q = BallQuery(32, 0.9 / 64 * 2, closed=False)
    assert list(ball_members(interval6, open_q)) == [31, 32, 33]
    with pytest.raises(IndexError):
        ball_members(interval6, BallQuery(99, 0.1))
    with pytest.raises(ValueError):
        BallQuery(0, 0.0)


def test_ball_masses_match_members(interval6):
    radii = np.array([0.01, 0.05, 0.3])
    M = ball_masses(interval6, [3, 40], radii)
    for a, c in enumerate([3, 40]):
        for b, r in enumerate(radii):
            assert M[a, b] == pytest.approx(ball_measure(interval6, BallQuery(c, r)))


@pytest.mark.parametrize("kind,level", [("interval", 10), ("cantor", 8), ("carpet", 4)])
def test_ahlfors_exponent(kind, level):
    est = estimate_ahlfors_Q(make_space(kind, level))
    assert est.status == "ok"
    assert abs(est.Q_hat - ANALYTIC_Q[kind]) <= 0.1


def test_ahlfors_small_cloud():
    assert estimate_ahlfors_Q(gen_interval(2)).status == "insufficient-scales"


def test_ahlfors_band_bounded():
    band = ahlfors_ratio_band(gen_interval(8), 1.0)
    assert 1 <= band < 4
