"""Nested nets and the hyperbolic filling graph over a point cloud."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, shortest_path

from .errors import InvariantError


@dataclass(frozen=True, eq=False)
class NetHierarchy:
    """Levels ``A_0 ⊆ A_1 ⊆ ... ⊆ A_N`` of maximal ``alpha**-n``-separated sets.

    Each level lists cloud indices in insertion order, so ``levels[n]`` is a
    prefix of ``levels[n + 1]``.
    """

    cloud: object
    alpha: float
    levels: list
    status: str = "ok"

    @property
    def depth(self):
        return len(self.levels) - 1

    def radius(self, n):
        return self.alpha ** (-n)

    def check_invariants(self):
        """Separation, covering and nesting of every level; a single root."""
        cloud = self.cloud
        everything = np.arange(cloud.n)
        if len(self.levels[0]) != 1:
            raise InvariantError("level 0 must hold exactly one point")
        for n, A in enumerate(self.levels):
            r = self.radius(n)
            if n and not np.array_equal(A[:len(self.levels[n - 1])], self.levels[n - 1]):
                raise InvariantError(f"level {n - 1} is not a prefix of level {n}")
            if len(np.unique(A)) != len(A):
                raise InvariantError(f"level {n} repeats a point")
            for start in range(0, len(A), 512):
                D = cloud.dist(A[start:start + 512], A)
                D[np.arange(D.shape[0]), np.arange(start, start + D.shape[0])] = np.inf
                if D.min() < r:
                    raise InvariantError(f"level {n} is not {r}-separated")
            for start in range(0, cloud.n, 512):
                D = cloud.dist(everything[start:start + 512], A)
                if D.min(axis=1).max() >= r:
                    raise InvariantError(f"level {n} does not {r}-cover the sample")


def default_depth(cloud, alpha=2.0):
    """``ceil(log_alpha(diam / min_gap))``: the finest radius reaches the sample spacing."""
    return max(1, math.ceil(math.log(cloud.diam / cloud.min_gap) / math.log(alpha) - 1e-12))


def build_nets(cloud, alpha=2.0, N=None):
    """Greedy nested maximal separated nets.

    Level ``n`` starts from the members of level ``n - 1`` and then scans the
    remaining cloud points in ascending index order, admitting any point at
    distance ``>= alpha**-n`` from everything admitted so far.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if N is None:
        N = default_depth(cloud, alpha)
    if N < 1:
        raise ValueError("depth must be >= 1")
    if not cloud.diam < 1:
        raise ValueError("cloud diameter must be < 1")
    n_pts = cloud.n
    members = [0]
    in_net = np.zeros(n_pts, dtype=bool)
    in_net[0] = True
    # distance from every point to the current net
    md = cloud.row(0).copy()
    levels = [np.array(members, dtype=np.intp)]
    for n in range(1, N + 1):
        r = alpha ** (-n)
        for i in np.flatnonzero((md >= r) & ~in_net):
            if md[i] >= r:
                members.append(int(i))
                in_net[i] = True
                np.minimum(md, cloud.row(i), out=md)
        levels.append(np.array(members, dtype=np.intp))
    status = "ok"
    if alpha ** (-N) < cloud.min_gap / 2:
        status = "saturated"
    return NetHierarchy(cloud, float(alpha), levels, status)


@dataclass(frozen=True, eq=False)
class FillingGraph:
    """Vertices ``(n, x)`` for ``x`` in ``A_n``; vertex 0 is the root ``p0``.

    Vertex ids run level by level in net insertion order. ``edges`` holds
    each unordered pair once with the smaller id first, sorted.
    """

    nets: NetHierarchy
    tau: float
    level: np.ndarray
    point: np.ndarray
    edges: np.ndarray
    offsets: np.ndarray
    closed: bool = False
    root: int = 0

    @property
    def alpha(self):
        return self.nets.alpha

    @property
    def cloud(self):
        return self.nets.cloud

    @property
    def depth(self):
        return self.nets.depth

    @property
    def n_vertices(self):
        return len(self.level)

    def vertices_at(self, n):
        return np.arange(self.offsets[n], self.offsets[n + 1])

    @cached_property
    def horizontal(self):
        return self.level[self.edges[:, 0]] == self.level[self.edges[:, 1]]

    @cached_property
    def adjacency(self):
        n = self.n_vertices
        e = self.edges
        data = np.ones(2 * len(e))
        A = coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
        return A.tocsr()

    @cached_property
    def degree(self):
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.intp)

    @cached_property
    def root_distance(self):
        d = shortest_path(self.adjacency, unweighted=True, indices=self.root, directed=False)
        return d.astype(np.int64)

    def vertex_id(self, n, x):
        ids = self.vertices_at(n)
        hit = np.flatnonzero(self.point[ids] == x)
        if not len(hit):
            raise KeyError(f"point {x} is not in net level {n}")
        return int(ids[hit[0]])

    def check_invariants(self):
        """Raise :class:`InvariantError` when a structural property fails."""
        self.nets.check_invariants()
        ncomp, _ = connected_components(self.adjacency, directed=False)
        if ncomp != 1:
            raise InvariantError(f"filling graph has {ncomp} components")
        A = self.adjacency.tocoo()
        up = np.zeros(self.n_vertices, dtype=bool)
        mask = self.level[A.col] == self.level[A.row] - 1
        up[A.row[mask]] = True
        up[self.root] = True
        if not up.all():
            raise InvariantError("vertex without an uplink")
        if np.any(self.root_distance != self.level):
            raise InvariantError("root distance differs from level")

    # -- export -----------------------------------------------------------

    def vertex_table(self):
        return {"v_id": np.arange(self.n_vertices), "level": self.level,
                "point_index": self.point}

    def vertices_csv(self, extra=None):
        cols = self.vertex_table()
        if extra:
            cols.update(extra)
        return _table_csv(cols)

    def edges_csv(self, extra=None):
        cols = {"v_id": self.edges[:, 0], "w_id": self.edges[:, 1]}
        if extra:
            cols.update(extra)
        return _table_csv(cols)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "tau": self.tau,
            "closed_balls": self.closed,
            "depth": self.depth,
            "status": self.nets.status,
            "vertices": [[int(n), int(x)] for n, x in zip(self.level, self.point)],
            "edges": self.edges.tolist(),
        }


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (np.integer, int)) else str(v)


def _table_csv(cols):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(cols)
    writer.writerow(names)
    for row in zip(*(cols[k] for k in names)):
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def build_graph(nets, tau=1.5, closed=False):
    """Hyperbolic filling graph with the two neighbour rules.

    Same level ``n``: ``d(x, y) < 2 alpha**-n``. Adjacent levels ``n, n+1``:
    ``d(x, y) < tau (alpha**-n + alpha**-(n+1))``. ``closed=True`` swaps the
    strict inequalities for ``<=``.
    """
    if not tau > 1:
        raise ValueError(f"tau must exceed 1, got {tau}")
    cloud = nets.cloud
    alpha = nets.alpha
    sizes = np.array([len(a) for a in nets.levels])
    offsets = np.r_[0, np.cumsum(sizes)]
    level = np.repeat(np.arange(len(sizes)), sizes)
    point = np.concatenate(nets.levels)
    parts = []
    for n, A in enumerate(nets.levels):
        a, b = cloud.pairs_within(A, A, 2 * alpha ** (-n), closed=closed)
        keep = a < b
        parts.append(np.column_stack([a[keep] + offsets[n], b[keep] + offsets[n]]))
        if n + 1 < len(nets.levels):
            B = nets.levels[n + 1]
            rad = tau * (alpha ** (-n) + alpha ** (-n - 1))
            a, b = cloud.pairs_within(A, B, rad, closed=closed)
            parts.append(np.column_stack([a + offsets[n], b + offsets[n + 1]]))
    edges = np.concatenate(parts).astype(np.intp)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    g = FillingGraph(nets, float(tau), level, point, edges, offsets, closed)
    g.check_invariants()
    return g


def vertex_level(graph, v):
    return int(graph.level[v])


def graph_distance_to_root(graph, v):
    return int(graph.root_distance[v])


def bfs_distance_to_root(graph, v):
    """Plain BFS oracle, independent of the cached all-vertex solve."""
    order, pred = breadth_first_order(graph.adjacency, graph.root, directed=False)
    d = 0
    while v != graph.root:
        v = pred[v]
        d += 1
    return d
