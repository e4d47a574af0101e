import math

import numpy as np
import pytest
from scipy.integrate import quad

from besovcap.filling import build_graph, build_nets
from besovcap.space import BallQuery, ball_measure, make_space
from besovcap.uniformize import (
    UniformParams,
    boundary_ball,
    codim_exponent_fit,
    codim_radii,
    d_eps,
    horizontal_length,
    uniformize,
    vertical_length,
)

EPS = math.log(2.0)


def test_params_relation():
    par = UniformParams.from_theta(2.0, 3.0, 0.4)
    assert par.beta == pytest.approx(EPS * 3.0 * 0.6)
    assert par.relation_residual < 1e-15
    back = UniformParams.from_beta(2.0, 3.0, par.beta)
    assert back.theta == pytest.approx(0.4)
    with pytest.raises(ValueError):
        UniformParams(EPS, 1.0, 2.0, 0.9)
    with pytest.raises(ValueError):
        UniformParams.from_theta(2.0, 2.0, 1.0)


@pytest.mark.parametrize("n", [0, 1, 4, 9])
def test_edge_lengths_match_quadrature(n):
    vert = quad(lambda t: math.exp(-EPS * (n + t)), 0, 1)[0]
    horiz = quad(lambda t: math.exp(-EPS * (n + min(t, 1 - t))), 0, 1, points=[0.5])[0]
    assert vertical_length(n, EPS) == pytest.approx(vert, rel=1e-12)
    assert horizontal_length(n, EPS) == pytest.approx(horiz, rel=1e-12)


def test_graph_lengths_use_lower_level(filled6):
    g = filled6.base
    e = g.edges
    low = np.minimum(g.level[e[:, 0]], g.level[e[:, 1]])
    for k in range(0, len(e), 11):
        f = horizontal_length if g.horizontal[k] else vertical_length
        assert filled6.edge_lengths[k] == pytest.approx(f(int(low[k]), EPS))


def test_mu_plus_is_ball_measure(filled6, interval6):
    g = filled6.base
    for v in range(0, g.n_vertices, 5):
        r = 2.0 ** -int(g.level[v])
        expect = ball_measure(interval6, BallQuery(int(g.point[v]), r))
        assert filled6.mu_plus[v] == pytest.approx(expect, rel=1e-14)


def test_mu_beta_damping(filled6):
    g = filled6.base
    beta = filled6.params.beta
    assert np.allclose(filled6.mu_beta, np.exp(-beta * g.level) * filled6.mu_plus)


def test_boundary_reps_are_nearest_deepest(filled6, interval6):
    g = filled6.base
    deepest = g.vertices_at(g.depth)
    D = interval6.dist(np.arange(interval6.n), g.point[deepest])
    for i, v in enumerate(filled6.boundary_reps):
        assert g.level[v] == g.depth
        assert interval6.dist([i], [g.point[v]])[0, 0] == D[i].min()


def test_d_eps_comparable_to_d():
    c = make_space("interval", 8)
    ug = uniformize(build_graph(build_nets(c), 1.5), UniformParams.from_theta(2.0, 2.0, 0.5))
    rng = np.random.default_rng(1)
    ratios = []
    for _ in range(40):
        x, y = rng.choice(c.n, 2, replace=False)
        d = c.dist([x], [y])[0, 0]
        if d < 4 * c.mesh:
            continue
        ratios.append(d_eps(ug, ug.boundary_reps[x], ug.boundary_reps[y]) / d)
    assert max(ratios) / min(ratios) < 4
    assert d_eps(ug, 3, 3) == 0.0


def test_boundary_ball(filled6):
    z = 20
    surrogate = boundary_ball(filled6, z, 0.2)
    exact = boundary_ball(filled6, z, 0.2, exact=True)
    assert filled6.boundary_reps[z] in exact
    assert len(surrogate) and len(exact)
    small = boundary_ball(filled6, z, 0.05)
    assert set(small) <= set(surrogate)
    with pytest.raises(ValueError):
        boundary_ball(filled6, z, 0.0)


def test_uniformize_rejects_mismatch(filled6):
    with pytest.raises(ValueError):
        uniformize(filled6.base, UniformParams.from_theta(3.0, 2.0, 0.5))


def _fit(kind, level, ratio):
    c = make_space(kind, level)
    p = 4.0 if ratio > 1 else 2.0
    par = UniformParams.from_beta(2.0, p, ratio * EPS)
    ug = uniformize(build_graph(build_nets(c), 1.5), par)
    return codim_exponent_fit(ug)


@pytest.mark.parametrize("kind,level", [("interval", 8), ("cantor", 8), ("carpet", 3)])
@pytest.mark.parametrize("ratio", [0.5, 1.0, 2.0])
def test_codim_slope(kind, level, ratio):
    fit = _fit(kind, level, ratio)
    assert fit.status == "ok"
    assert abs(fit.slope / ratio - 1) <= 0.15


@pytest.mark.parametrize("kind,level", [("gasket", 7), ("snowflake", 10)])
@pytest.mark.parametrize("ratio", [1.0, 2.0])
def test_codim_slope_other_spaces(kind, level, ratio):
    fit = _fit(kind, level, ratio)
    assert abs(fit.slope / ratio - 1) <= 0.15


def test_codim_radii_rule():
    c = make_space("interval", 8)
    radii = codim_radii(c, 2.0, 8)
    assert np.all(radii <= c.diam)
    assert np.all(np.diff(np.log2(radii)) == pytest.approx(-1.0))
    assert len(codim_radii(make_space("interval", 3), 2.0, 3)) < 4


def test_codim_insufficient_scales():
    c = make_space("interval", 3)
    ug = uniformize(build_graph(build_nets(c), 1.5), UniformParams.from_theta(2.0, 2.0, 0.5))
    assert codim_exponent_fit(ug).status == "insufficient-scales"
