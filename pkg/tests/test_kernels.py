import numpy as np
import pytest

from besovcap import _kernels_py, kernels
from besovcap.space import make_space

needs_compiled = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                    reason="compiled kernels not built")


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    c = make_space("cantor", 6)
    D = c.distance_matrix()
    DW = np.ascontiguousarray(make_space("snowflake", 6).distance_matrix()[:c.n, :c.n])
    ei, ej = (np.ascontiguousarray(a, dtype=np.intp) for a in np.nonzero(np.triu(D < 0.05, 1)))
    return {
        "D": D, "w": c.weights, "u": rng.uniform(size=c.n), "DW": DW,
        "ei": ei, "ej": ej, "c": rng.uniform(size=len(ei)),
        "triples": rng.integers(0, c.n, size=(3000, 3)).astype(np.intp),
    }


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.backend_module("python") is _kernels_py
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


def test_ball_mass_ties():
    D = np.array([[0, 1, 1, 2], [1, 0, 2, 1], [1, 2, 0, 1], [2, 1, 1, 0]], dtype=float)
    M = _kernels_py.ball_mass_matrix(D, np.ones(4))
    assert M[0].tolist() == [1, 3, 3, 4]


@needs_compiled
@pytest.mark.parametrize("p", [2.0, 2.7])
def test_backends_agree(data, p):
    py, cy = kernels.backend_module("python"), kernels.backend_module("cython")
    D, w, u = data["D"], data["w"], data["u"]
    M = py.ball_mass_matrix(D, w)
    assert np.array_equal(M, cy.ball_mass_matrix(D, w))
    W = py.besov_weights(D, M, w, 0.6 * p)
    assert np.allclose(W, cy.besov_weights(D, M, w, 0.6 * p), rtol=1e-13, atol=0)
    assert py.pair_energy(W, u, p) == pytest.approx(cy.pair_energy(W, u, p), rel=1e-12)
    e1, g1 = py.pair_energy_grad(W, u, p)
    e2, g2 = cy.pair_energy_grad(W, u, p)
    assert e1 == pytest.approx(e2, rel=1e-12)
    assert np.allclose(g1, g2, rtol=1e-10, atol=1e-12)
    a = py.edge_energy_grad(data["ei"], data["ej"], data["c"], u, p)
    b = cy.edge_energy_grad(data["ei"], data["ej"], data["c"], u, p)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert np.allclose(a[1], b[1], rtol=1e-10, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("rho", [np.inf, 0.1])
def test_weak_qs_backends_agree(data, rho):
    py, cy = kernels.backend_module("python"), kernels.backend_module("cython")
    D, DW = data["D"], data["DW"]
    a, b = py.weak_qs_exhaustive(D, DW, rho), cy.weak_qs_exhaustive(D, DW, rho)
    assert a[0] == b[0] and a[2] == b[2]
    a, b = py.weak_qs_triples(D, DW, data["triples"], rho), cy.weak_qs_triples(D, DW, data["triples"], rho)
    assert a[0] == b[0] and a[2] == b[2]


def test_gradient_matches_finite_differences(data):
    W = kernels.besov_weights(data["D"], kernels.ball_mass_matrix(data["D"], data["w"]), data["w"], 1.5)
    u = data["u"]
    _, g = kernels.pair_energy_grad(W, u, 2.5)
    h = 1e-6
    for i in (0, 7, 31):
        e = np.zeros_like(u)
        e[i] = h
        fd = (kernels.pair_energy(W, u + e, 2.5) - kernels.pair_energy(W, u - e, 2.5)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5)
