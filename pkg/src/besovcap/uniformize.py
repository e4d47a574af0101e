"""Uniformized metric and lifted measures on a filling graph."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra


@dataclass(frozen=True)
class UniformParams:
    """``epsilon = log(alpha)`` and the linked pair ``theta = 1 - beta / (epsilon p)``."""

    epsilon: float
    beta: float
    p: float
    theta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive (alpha > 1)")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.relation_residual > 1e-12:
            raise ValueError("theta and beta violate theta = 1 - beta/(epsilon p)")

    @classmethod
    def from_theta(cls, alpha, p, theta):
        eps = math.log(alpha)
        return cls(eps, eps * p * (1 - theta), p, theta)

    @classmethod
    def from_beta(cls, alpha, p, beta):
        eps = math.log(alpha)
        return cls(eps, beta, p, 1 - beta / (eps * p))

    @property
    def alpha(self):
        return math.exp(self.epsilon)

    @property
    def relation_residual(self):
        return abs(self.theta - (1 - self.beta / (self.epsilon * self.p)))


def vertical_length(n, eps):
    """``int_0^1 exp(-eps (n + t)) dt``."""
    return math.exp(-eps * n) * (1 - math.exp(-eps)) / eps


def horizontal_length(n, eps):
    """Tent profile ``n + min(t, 1 - t)`` integrated over a unit edge."""
    return 2 * math.exp(-eps * n) * (1 - math.exp(-eps / 2)) / eps


def ball_matrix(cloud, nets, offsets):
    """Sparse ``B[v, i] = w_i`` for ``i`` in the closed ball ``B(x_v, alpha**-n)``."""
    rows, cols = [], []
    for n, A in enumerate(nets.levels):
        rad = nets.alpha ** (-n)
        if rad < cloud.min_gap:
            a, b = np.arange(len(A)), A
        else:
            a, b = cloud.pairs_within(A, np.arange(cloud.n), rad, closed=True)
        rows.append(a + offsets[n])
        cols.append(b)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (int(offsets[-1]), cloud.n)
    return coo_matrix((cloud.weights[cols], (rows, cols)), shape=shape).tocsr()


def nearest_in(cloud, targets):
    """For every cloud point, the position in ``targets`` of its nearest member.

    Ties go to the smallest cloud index.
    """
    targets = np.asarray(targets, dtype=np.intp)
    order = np.argsort(targets, kind="stable")
    sorted_t = targets[order]
    out = np.empty(cloud.n, dtype=np.intp)
    for start in range(0, cloud.n, 512):
        rows = np.arange(start, min(start + 512, cloud.n))
        D = cloud.dist(rows, sorted_t)
        out[rows] = order[np.argmin(D, axis=1)]
    return out


@dataclass(frozen=True, eq=False)
class UniformizedGraph:
    base: object
    params: UniformParams
    edge_lengths: np.ndarray
    mu_plus: np.ndarray
    mu_beta: np.ndarray
    boundary_reps: np.ndarray
    balls: csr_matrix

    @property
    def cloud(self):
        return self.base.cloud

    @property
    def alpha(self):
        return self.base.alpha

    @cached_property
    def weighted_adjacency(self):
        n = self.base.n_vertices
        e = self.base.edges
        ell = self.edge_lengths
        A = coo_matrix((np.r_[ell, ell], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                       shape=(n, n))
        return A.tocsr()

    def distances_from(self, v):
        return dijkstra(self.weighted_adjacency, directed=False, indices=int(v))

    def level_totals(self):
        """Per-level sums of ``mu_beta``."""
        return np.bincount(self.base.level, weights=self.mu_beta)

    def vertices_csv(self):
        return self.base.vertices_csv({"mu_plus": self.mu_plus, "mu_beta": self.mu_beta})

    def edges_csv(self):
        return self.base.edges_csv({"ell_eps": self.edge_lengths})


def uniformize(graph, params, cloud=None):
    """Attach ``d_eps`` edge lengths, ``mu_plus``, ``mu_beta`` and boundary representatives."""
    cloud = graph.cloud if cloud is None else cloud
    if cloud is not graph.cloud:
        raise ValueError("graph was built over a different cloud")
    if not params.beta > 0:
        raise ValueError("beta must be positive")
    if abs(params.epsilon - math.log(graph.alpha)) > 1e-12:
        raise ValueError("epsilon must equal log(alpha) of the graph")
    eps = params.epsilon
    e = graph.edges
    n_low = np.minimum(graph.level[e[:, 0]], graph.level[e[:, 1]])
    vert = np.exp(-eps * n_low) * (1 - math.exp(-eps)) / eps
    horiz = 2 * np.exp(-eps * n_low) * (1 - math.exp(-eps / 2)) / eps
    ell = np.where(graph.horizontal, horiz, vert)
    B = ball_matrix(cloud, graph.nets, graph.offsets)
    mu_plus = B @ np.ones(cloud.n)
    mu_beta = np.exp(-params.beta * graph.level) * mu_plus
    deepest = graph.vertices_at(graph.depth)
    reps = deepest[nearest_in(cloud, graph.point[deepest])]
    return UniformizedGraph(graph, params, ell, mu_plus, mu_beta, reps, B)


def d_eps(ug, v, w):
    if v == w:
        return 0.0
    return float(ug.distances_from(v)[w])


def boundary_ball(ug, z, r, exact=False):
    """Vertices standing in for the ``d_eps`` ball about the boundary point ``z``.

    The default surrogate keeps ``(n, x)`` with ``max(alpha**-n, d(x, z)) < r``.
    ``exact=True`` runs a shortest-path search from the representative of
    ``z`` and keeps vertices with ``d_eps < r``.
    """
    g = ug.base
    if not 0 < r:
        raise ValueError("radius must be positive")
    if exact:
        d = ug.distances_from(ug.boundary_reps[z])
        return np.flatnonzero(d < r)
    dz = ug.cloud.row(z)[g.point]
    scale = g.alpha ** (-g.level.astype(np.float64))
    return np.flatnonzero(np.maximum(scale, dz) < r)


@dataclass
class CodimFit:
    slope: float
    residual: float
    n_samples: int
    radii: np.ndarray
    status: str = "ok"

    def __iter__(self):
        return iter((self.slope, self.residual))

    def to_dict(self):
        return {"slope": self.slope, "residual": self.residual,
                "n_samples": self.n_samples, "radii": [float(r) for r in self.radii],
                "status": self.status}


def codim_radii(cloud, alpha, depth, shell=2):
    """Dyadic radii ``alpha**-(j + 1/2)`` in ``(0, diam]`` whose leading level is resolved.

    The first level inside a ball of radius ``alpha**-(j + 1/2)`` is ``j + 1``;
    it must sit at least two sample spacings above the mesh and, with
    ``shell`` levels counted, within the built depth.
    """
    out = []
    j = 0
    while alpha ** -(j + 1.0) >= 2 * cloud.mesh:
        r = alpha ** -(j + 0.5)
        if r <= cloud.diam and (shell is None or j + shell <= depth):
            out.append(r)
        j += 1
    return np.array(out)


def codim_exponent_fit(ug, cloud=None, params=None, radii=None, shell=2, n_centers=32, seed=0):
    """Slope of ``log(mu_beta(ball) / nu(ball))`` against ``log r``; ideally ``beta/epsilon``.

    With ``shell=K`` only the ``K`` coarsest levels inside each boundary ball
    are summed. Those levels are comparable to the whole geometric sum with
    a constant independent of ``r``, and they stay above the sample
    resolution, where every vertex ball collapses to one point and the
    lifted mass loses its net overlap. ``shell=None`` sums every level.
    Each center contributes its own intercept, so the slope is the pooled
    within-center regression coefficient.
    """
    cloud = ug.cloud if cloud is None else cloud
    params = ug.params if params is None else params
    g = ug.base
    if radii is None:
        radii = codim_radii(cloud, g.alpha, g.depth, shell)
    radii = np.asarray(radii, dtype=np.float64)
    if len(radii) < 4:
        return CodimFit(math.nan, math.inf, 0, radii, "insufficient-scales")
    rng = np.random.default_rng(seed)
    centers = np.sort(rng.choice(cloud.n, size=min(cloud.n, n_centers), replace=False))
    scale = g.alpha ** (-g.level.astype(np.float64))
    Y = np.empty((len(centers), len(radii)))
    for a, z in enumerate(centers):
        row = cloud.row(z)
        key = np.maximum(scale, row[g.point])
        for b, r in enumerate(radii):
            inside = key < r
            if shell is not None:
                n0 = math.ceil(-math.log(r) / math.log(g.alpha) - 1e-12)
                inside &= g.level < n0 + shell
            num = ug.mu_beta[inside].sum()
            den = cloud.weights[row < r].sum()
            Y[a, b] = math.log(num / den)
    X = np.log(radii)
    Xc = X - X.mean()
    Yc = Y - Y.mean(axis=1, keepdims=True)
    slope = float((Yc * Xc).sum() / (len(centers) * (Xc ** 2).sum()))
    residual = float(np.sqrt(np.mean((Yc - slope * Xc) ** 2)))
    return CodimFit(slope, residual, Y.size, radii)
