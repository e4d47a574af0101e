"""Finitely sampled compact metric measure spaces.

Generators store integer lattice coordinates together with a ``scale``
factor, so every pairwise distance is ``scale * |lattice difference|``
(raised to ``gamma`` for snowflaked metrics). Equal lattice gaps therefore
give bit-identical distances, which the triple scans in :mod:`besovcap.qs`
rely on.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResourceLimitError

METRIC_KINDS = ("euclidean", "snowflake", "explicit")
MAX_POINTS = 1 << 21
_BLOCK = 512


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite sample ``(Z, d, nu)``.

    ``coords`` has shape ``(N, dim)``; physical coordinates are
    ``coords * scale``. For ``metric_kind == "explicit"`` the distances come
    from ``matrix`` and ``coords`` is only carried along for export.
    """

    coords: np.ndarray
    weights: np.ndarray
    metric_kind: str = "euclidean"
    gamma: float = 1.0
    scale: float = 1.0
    matrix: np.ndarray | None = None
    name: str = ""
    diam: float | None = field(default=None)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        weights = np.asarray(self.weights, dtype=np.float64)
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        if weights.shape != (coords.shape[0],):
            raise ValueError("weights must have one entry per point")
        if coords.shape[0] == 0:
            raise ValueError("empty point cloud")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("weights must be finite and strictly positive")
        if self.metric_kind == "snowflake" and not 0 < self.gamma <= 1:
            raise ValueError(f"snowflake exponent must lie in (0, 1], got {self.gamma}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", weights)
        if self.metric_kind == "explicit":
            if self.matrix is None:
                raise ValueError("explicit metric needs a distance matrix")
            mat = np.asarray(self.matrix, dtype=np.float64)
            n = coords.shape[0]
            if mat.shape != (n, n):
                raise ValueError("distance matrix shape does not match the point count")
            if not np.allclose(mat, mat.T, rtol=0, atol=0) or np.any(np.diag(mat) != 0):
                raise ValueError("distance matrix must be symmetric with zero diagonal")
            object.__setattr__(self, "matrix", mat)
        if self.diam is None:
            object.__setattr__(self, "diam", self._compute_diam())
        if not 0 < self.diam < 1:
            raise ValueError(f"diameter must lie in (0, 1), got {self.diam}")

    # -- distances --------------------------------------------------------

    def __len__(self):
        return self.coords.shape[0]

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def points(self):
        """Physical coordinates."""
        return self.coords * self.scale

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def dist(self, I, J):
        """Distance block ``d(I[a], J[b])`` for index arrays (or scalars)."""
        I = np.atleast_1d(np.asarray(I, dtype=np.intp))
        J = np.atleast_1d(np.asarray(J, dtype=np.intp))
        if self.metric_kind == "explicit":
            return self.matrix[np.ix_(I, J)]
        A = self.coords[I]
        B = self.coords[J]
        if A.shape[1] == 1:
            d = np.abs(A[:, 0][:, None] - B[:, 0][None, :])
        else:
            diff = A[:, None, :] - B[None, :, :]
            d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        d = d * self.scale
        if self.metric_kind == "snowflake" and self.gamma != 1.0:
            d = d ** self.gamma
        return d

    def row(self, i):
        return self.dist([i], np.arange(self.n))[0]

    def pair_dist(self, I, J):
        """Elementwise distances ``d(I[k], J[k])``."""
        I = np.asarray(I, dtype=np.intp)
        J = np.asarray(J, dtype=np.intp)
        if self.metric_kind == "explicit":
            return self.matrix[I, J]
        diff = self.coords[I] - self.coords[J]
        if diff.shape[1] == 1:
            d = np.abs(diff[:, 0])
        else:
            d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        d = d * self.scale
        if self.metric_kind == "snowflake" and self.gamma != 1.0:
            d = d ** self.gamma
        return d

    def pairs_within(self, I, J, radius, closed=True):
        """All ``(a, b)`` with ``d(I[a], J[b]) <= radius`` (``<`` when open).

        Returns two position arrays sorted lexicographically. Candidate pairs
        come from a k-d tree on the lattice coordinates and are then filtered
        with the exact distance oracle.
        """
        I = np.atleast_1d(np.asarray(I, dtype=np.intp))
        J = np.atleast_1d(np.asarray(J, dtype=np.intp))
        if self.metric_kind == "explicit":
            A, B = [], []
            for start in range(0, len(I), _BLOCK):
                block = self.matrix[np.ix_(I[start:start + _BLOCK], J)]
                mask = block <= radius if closed else block < radius
                a, b = np.nonzero(mask)
                A.append(a + start)
                B.append(b)
            return np.concatenate(A), np.concatenate(B)
        r = radius
        if self.metric_kind == "snowflake" and self.gamma != 1.0:
            r = radius ** (1.0 / self.gamma)
        tree = cKDTree(self.coords[J])
        hits = tree.query_ball_point(self.coords[I], r / self.scale * (1 + 1e-9) + 1e-12)
        counts = np.fromiter((len(h) for h in hits), dtype=np.intp, count=len(I))
        a = np.repeat(np.arange(len(I)), counts)
        b = np.fromiter((j for h in hits for j in h), dtype=np.intp, count=int(counts.sum()))
        d = self.pair_dist(I[a], J[b])
        keep = d <= radius if closed else d < radius
        a, b = a[keep], b[keep]
        order = np.lexsort((b, a))
        return a[order], b[order]

    def distance_matrix(self):
        if self.metric_kind == "explicit":
            return self.matrix
        return self._full_matrix

    @cached_property
    def _full_matrix(self):
        return self.dist(np.arange(self.n), np.arange(self.n))

    def _blocks(self):
        idx = np.arange(self.n)
        for start in range(0, self.n, _BLOCK):
            rows = idx[start:start + _BLOCK]
            yield rows, self.dist(rows, idx)

    def _compute_diam(self):
        if self.metric_kind != "explicit" and self.coords.shape[1] == 1:
            lo, hi = np.argmin(self.coords[:, 0]), np.argmax(self.coords[:, 0])
            return float(self.dist(lo, hi)[0, 0])
        return float(max(block.max() for _, block in self._blocks()))

    @cached_property
    def min_gap(self):
        """Smallest positive pairwise distance."""
        if self.n < 2:
            return self.diam
        best = np.inf
        for rows, block in self._blocks():
            block = block.copy()
            block[np.arange(len(rows)), rows] = np.inf
            best = min(best, block.min())
        return float(best)

    @cached_property
    def nn_dist(self):
        """Nearest-neighbour distance of every point."""
        out = np.empty(self.n)
        for rows, block in self._blocks():
            block = block.copy()
            block[np.arange(len(rows)), rows] = np.inf
            out[rows] = block.min(axis=1)
        return out

    @cached_property
    def mesh(self):
        """Covering gap: the largest nearest-neighbour distance."""
        if self.n < 2:
            return self.diam
        return float(self.nn_dist.max())

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        out = {
            "metric_kind": self.metric_kind,
            "points": self.coords.tolist(),
            "weights": self.weights.tolist(),
            "diam": self.diam,
            "scale": self.scale,
            "name": self.name,
        }
        if self.metric_kind == "snowflake":
            out["gamma"] = self.gamma
        if self.metric_kind == "explicit":
            out["matrix"] = self.matrix.ravel().tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        n = len(data["points"])
        matrix = None
        if data["metric_kind"] == "explicit":
            matrix = np.asarray(data["matrix"], dtype=np.float64).reshape(n, n)
        return cls(
            coords=np.asarray(data["points"], dtype=np.float64).reshape(n, -1),
            weights=np.asarray(data["weights"], dtype=np.float64),
            metric_kind=data["metric_kind"],
            gamma=float(data.get("gamma", 1.0)),
            scale=float(data.get("scale", 1.0)),
            matrix=matrix,
            name=data.get("name", ""),
            diam=data.get("diam"),
        )

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        dim = self.coords.shape[1]
        writer.writerow(["index", *[f"x{k}" for k in range(dim)], "weight"])
        for i, (pt, w) in enumerate(zip(self.points, self.weights)):
            writer.writerow([i, *[repr(float(c)) for c in pt], repr(float(w))])
        return buf.getvalue()


def _check_size(n):
    if n > MAX_POINTS:
        raise ResourceLimitError(f"{n} points exceeds the budget of {MAX_POINTS}")


def _uniform(n):
    return np.full(n, 1.0 / n)


def gen_interval(k):
    """``2**k + 1`` equally spaced points on a segment of diameter 0.9."""
    if k < 1:
        raise ValueError("level must be >= 1")
    if k > 30:
        raise ResourceLimitError(f"interval level {k} is too large")
    n = 2 ** k + 1
    _check_size(n)
    coords = np.arange(n, dtype=np.float64)[:, None]
    return PointCloud(coords, _uniform(n), scale=0.9 / 2 ** k, name=f"interval({k})")


def cantor_lattice(k):
    """Left endpoints of the level-``k`` middle-thirds intervals, in units of ``3**-k``."""
    j = np.zeros(1, dtype=np.int64)
    for _ in range(k):
        j = np.concatenate([3 * j, 3 * j + 2])
    return np.sort(j)


def gen_cantor(k):
    if k < 1:
        raise ValueError("level must be >= 1")
    if 2 ** k > MAX_POINTS:
        raise ResourceLimitError(f"cantor level {k} is too large")
    j = cantor_lattice(k).astype(np.float64)[:, None]
    n = len(j)
    return PointCloud(j, _uniform(n), scale=0.9 / (3 ** k - 1), name=f"cantor({k})")


def _carpet_lattice(k):
    pts = np.zeros((1, 2), dtype=np.int64)
    offsets = np.array([(a, b) for a in range(3) for b in range(3) if (a, b) != (1, 1)])
    for _ in range(k):
        pts = (3 * pts[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order]


def gen_sierpinski_carpet(k):
    """Centers of the ``8**k`` level-``k`` subsquares, rescaled to diameter 0.9."""
    if k < 1:
        raise ValueError("level must be >= 1")
    if k > 5:
        raise ResourceLimitError("carpet levels above 5 exceed the point budget")
    pts = _carpet_lattice(k).astype(np.float64)
    side = 3 ** k - 1
    scale = 0.9 / (math.sqrt(2.0) * side)
    cloud = PointCloud(pts, _uniform(len(pts)), scale=scale, name=f"carpet({k})",
                       diam=0.9)
    # diameter from the oracle itself so that corner distances match exactly
    corner = cloud.dist([0], [len(pts) - 1])[0, 0]
    return PointCloud(pts, cloud.weights, scale=scale, name=cloud.name, diam=float(corner))


def gen_sierpinski_gasket(k):
    """Centers of the ``3**k`` level-``k`` subtriangles, rescaled to diameter 0.9."""
    if k < 1:
        raise ValueError("level must be >= 1")
    if k > 9:
        raise ResourceLimitError("gasket levels above 9 exceed the point budget")
    ab = np.zeros((1, 2), dtype=np.int64)
    offsets = np.array([(0, 0), (1, 0), (0, 1)])
    for _ in range(k):
        ab = (2 * ab[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    ab = ab[np.lexsort((ab[:, 1], ab[:, 0]))]
    xy = np.column_stack([ab[:, 0] + 0.5 * ab[:, 1], ab[:, 1] * (math.sqrt(3.0) / 2)])
    scale = 0.9 / (2 ** k - 1)
    return PointCloud(xy, _uniform(len(xy)), scale=scale, name=f"gasket({k})")


def gen_snowflake_interval(k, gamma):
    """Interval samples with the snowflaked metric ``|x - y| ** gamma``."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    base = gen_interval(k)
    if gamma == 1:
        return base
    return PointCloud(base.coords, base.weights, metric_kind="snowflake", gamma=gamma,
                      scale=base.scale, name=f"snowflake({k},{gamma})")


GENERATORS = {
    "interval": gen_interval,
    "cantor": gen_cantor,
    "carpet": gen_sierpinski_carpet,
    "gasket": gen_sierpinski_gasket,
}

ANALYTIC_Q = {
    "interval": 1.0,
    "cantor": math.log(2) / math.log(3),
    "carpet": math.log(8) / math.log(3),
    "gasket": math.log(3) / math.log(2),
}


def make_space(kind, level, gamma=None):
    if kind == "snowflake":
        return gen_snowflake_interval(level, 0.5 if gamma is None else gamma)
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown space {kind!r}") from None
    return gen(level)


# -- balls ----------------------------------------------------------------

@dataclass(frozen=True)
class BallQuery:
    center: int
    radius: float
    closed: bool = True

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")


def _check_query(cloud, q):
    if not 0 <= q.center < cloud.n:
        raise IndexError(f"center {q.center} out of range")
    if q.radius > 2 * cloud.diam:
        raise ValueError("ball radius exceeds twice the diameter")


def ball_members(cloud, q):
    _check_query(cloud, q)
    d = cloud.row(q.center)
    mask = d <= q.radius if q.closed else d < q.radius
    mask[q.center] = True
    return np.flatnonzero(mask)


def ball_measure(cloud, q):
    return float(cloud.weights[ball_members(cloud, q)].sum())


def ball_masses(cloud, centers, radii, closed=True):
    """Matrix of ``nu(B(c, r))`` for every center ``c`` and radius ``r``."""
    centers = np.atleast_1d(np.asarray(centers, dtype=np.intp))
    radii = np.asarray(radii, dtype=np.float64)
    D = cloud.dist(centers, np.arange(cloud.n))
    order = np.argsort(D, axis=1, kind="stable")
    Ds = np.take_along_axis(D, order, axis=1)
    cw = np.cumsum(cloud.weights[order], axis=1)
    side = "right" if closed else "left"
    out = np.empty((len(centers), len(radii)))
    for a in range(len(centers)):
        k = np.searchsorted(Ds[a], radii, side=side)
        out[a] = np.where(k > 0, cw[a, np.maximum(k - 1, 0)], 0.0)
    return out


# -- Ahlfors regularity ---------------------------------------------------

@dataclass
class AhlforsEstimate:
    Q_hat: float
    residual: float
    radii: np.ndarray
    status: str = "ok"

    def __iter__(self):
        return iter((self.Q_hat, self.residual))


def estimate_ahlfors_Q(cloud, n_centers=64, n_radii=10, seed=0):
    """Mass-radius exponent of ``cloud``.

    Radii are geometric on ``[2h, diam/4]`` with ``h`` the covering gap.
    The slope is fitted to the upper envelope ``max_c nu(B(c, r))`` over the
    seeded centers, since balls near the edge of a finite sample are
    truncated and drag a pooled fit low. The residual is the RMS scatter of
    each center's log-masses about a line of that slope.
    """
    if cloud.diam <= 0:
        raise ValueError("degenerate cloud: all points coincide")
    n_radii = max(int(n_radii), 8)
    if cloud.n < 16:
        return AhlforsEstimate(math.nan, math.inf, np.empty(0), "insufficient-scales")
    h = cloud.mesh
    r_hi = cloud.diam / 4
    r_lo = 2 * h
    status = "ok"
    if r_hi / r_lo < 4:
        r_lo = r_hi / 4
        if r_lo < h * (1 - 1e-12):
            status = "insufficient-scales"
    radii = np.geomspace(r_lo, r_hi, n_radii)
    rng = np.random.default_rng(seed)
    centers = np.sort(rng.choice(cloud.n, size=min(cloud.n, max(n_centers, 32)), replace=False))
    logm = np.log(ball_masses(cloud, centers, radii))
    x = np.log(radii)
    slope = float(np.polyfit(x, logm.max(axis=0), 1)[0])
    dev = logm - slope * x[None, :]
    dev -= dev.mean(axis=1, keepdims=True)
    residual = float(np.sqrt(np.mean(dev ** 2)))
    return AhlforsEstimate(slope, residual, radii, status)


def ahlfors_ratio_band(cloud, Q, n_centers=32, seed=0):
    """Smallest ``C`` with ``nu(B(x,r)) / r**Q`` in ``[1/C', C'']``, reported as max/min ratio.

    Radii run dyadically from the minimum gap up to the diameter.
    """
    rng = np.random.default_rng(seed)
    centers = rng.choice(cloud.n, size=min(cloud.n, n_centers), replace=False)
    radii = cloud.diam * 2.0 ** -np.arange(0, 64)
    radii = radii[radii >= cloud.mesh]
    m = ball_masses(cloud, centers, radii)
    ratio = m / radii[None, :] ** Q
    return float(ratio.max() / ratio.min())
