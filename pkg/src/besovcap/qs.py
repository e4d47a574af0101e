"""Quasisymmetry tests for sampled homeomorphisms between point clouds."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from . import kernels
from .energy import Condenser, besov_capacity, besov_energy
from .space import PointCloud, gen_interval, gen_snowflake_interval

EXHAUSTIVE_MAX = 200


@dataclass(frozen=True, eq=False)
class SampledMap:
    """``phi(domain[i]) = codomain[pairing[i]]``."""

    domain: PointCloud
    codomain: PointCloud
    pairing: np.ndarray

    def __post_init__(self):
        pairing = np.asarray(self.pairing, dtype=np.intp)
        n = self.domain.n
        if self.codomain.n != n:
            raise ValueError("domain and codomain must have the same size")
        if pairing.shape != (n,) or not np.array_equal(np.sort(pairing), np.arange(n)):
            raise ValueError("pairing must be a bijection of the index sets")
        object.__setattr__(self, "pairing", pairing)

    @property
    def inverse(self):
        inv = np.empty_like(self.pairing)
        inv[self.pairing] = np.arange(len(self.pairing))
        return inv

    def pulled_codomain_distances(self):
        """``DW[i, j] = d_W(phi(z_i), phi(z_j))``."""
        D = self.codomain.distance_matrix()
        return D[np.ix_(self.pairing, self.pairing)]


def identity_map(cloud):
    return SampledMap(cloud, cloud, np.arange(cloud.n))


def snowflake_identity_map(k, gamma=0.5):
    """Identity from the interval onto its snowflake ``|x - y|**gamma``."""
    Z = gen_interval(k)
    return SampledMap(Z, gen_snowflake_interval(k, gamma), np.arange(Z.n))


def kink_lattice(k):
    """``kappa(j / 2**k)`` in units of ``4**-k``, where ``kappa(x) = x`` on ``[0, 1/2]``
    and ``1/2 + (x - 1/2)**2`` beyond."""
    j = np.arange(2 ** k + 1, dtype=np.int64)
    half = 2 ** (k - 1)
    return np.where(j <= half, j * 2 ** k, 2 ** (2 * k - 1) + (j - half) ** 2)


def kink_inverse_map(k):
    """``phi = kappa**-1`` from the kinked sample onto the dyadic grid of level ``k``."""
    if k < 2:
        raise ValueError("kink level must be >= 2")
    c = kink_lattice(k).astype(np.float64)[:, None]
    n = len(c)
    Z = PointCloud(c, np.full(n, 1.0 / n), scale=0.9 / (0.75 * 4.0 ** k), name=f"kink({k})")
    return SampledMap(Z, gen_interval(k), np.arange(n))


# -- weak quasisymmetry ----------------------------------------------------

@dataclass
class WeakQSResult:
    H_hat: float
    triple: tuple
    n_triples: int
    mode: str

    def __float__(self):
        return self.H_hat


def weak_qs_constant(m, triple_budget=None, rho=math.inf, seed=0, exhaustive=None):
    """Largest ``d_W(phi x, phi z) / d_W(phi x, phi y)`` over triples with ``d_Z(x, z) <= d_Z(x, y)``.

    With ``rho`` finite only triples with ``diam{x, y, z} <= rho`` count.
    Exhaustive mode runs by default for at most 200 points; a budget that
    covers every ordered triple enumerates them all, otherwise triples are
    drawn with a seeded generator.
    """
    n = m.domain.n
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_MAX and triple_budget is None
    DZ = m.domain.distance_matrix()
    DW = m.pulled_codomain_distances()
    if exhaustive:
        if n > EXHAUSTIVE_MAX:
            raise ValueError(f"exhaustive mode is limited to {EXHAUSTIVE_MAX} points")
        best, arg, count = kernels.weak_qs_exhaustive(DZ, DW, rho)
        return WeakQSResult(float(best), tuple(int(a) for a in arg), int(count), "exhaustive")
    if triple_budget is None or triple_budget < 1:
        raise ValueError("sampled mode needs triple_budget >= 1")
    total = n * (n - 1) * (n - 2)
    if triple_budget >= total:
        x, y, z = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
        triples = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
        mode = "enumerated"
    else:
        rng = np.random.default_rng(seed)
        triples = rng.integers(0, n, size=(int(triple_budget), 3))
        mode = "sampled"
    best, arg, count = kernels.weak_qs_triples(DZ, DW, triples, rho)
    return WeakQSResult(float(best), tuple(int(a) for a in arg), int(count), mode)


def weak_qs_scan(maps, **kwargs):
    """``H_hat`` for each map of a refinement family, in order."""
    return [weak_qs_constant(m, **kwargs).H_hat for m in maps]


# -- gauges ----------------------------------------------------------------

@dataclass(frozen=True)
class PowerGauge:
    """``eta(t) = C t**a``."""

    C: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if not (self.C > 0 and self.a > 0):
            raise ValueError("power gauge needs C > 0 and a > 0")

    def __call__(self, t):
        return self.C * np.asarray(t, dtype=np.float64) ** self.a


@dataclass(frozen=True, eq=False)
class TabulatedGauge:
    """Piecewise-linear gauge through ``(0, 0)`` and the given samples.

    Beyond the last sample the final segment is extended.
    """

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.shape != v.shape or t.ndim != 1 or not len(t):
            raise ValueError("gauge table needs matching 1-d arrays")
        if t[0] == 0:
            if v[0] != 0:
                raise ValueError("gauge must vanish at 0")
            t, v = t[1:], v[1:]
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("gauge abscissae must be positive and increasing")
        if np.any(v <= 0):
            raise ValueError("gauge must be positive on (0, inf)")
        if np.any(np.diff(v) < 0):
            raise ValueError("gauge is not monotone on its table")
        object.__setattr__(self, "t", np.r_[0.0, t])
        object.__setattr__(self, "values", np.r_[0.0, v])

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = np.interp(t, self.t, self.values)
        slope = (self.values[-1] - self.values[-2]) / (self.t[-1] - self.t[-2])
        return np.where(t > self.t[-1], self.values[-1] + slope * (t - self.t[-1]), out)


@dataclass(frozen=True)
class GaugeParams:
    eta: object
    kappa: float
    r0: float
    diamZ: float
    diamW: float
    C_L: float = 2.0

    def __post_init__(self):
        for name in ("kappa", "r0", "diamZ", "diamW"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.C_L > 1:
            raise ValueError("C_L must exceed 1")


@dataclass(frozen=True)
class PromotedGauge:
    params: GaugeParams

    def branches(self, t):
        p = self.params
        t = np.asarray(t, dtype=np.float64)
        eta = p.eta
        k = p.diamW / p.kappa
        return np.stack([
            eta(t),
            k * eta(t),
            k * eta(2 * p.diamZ / p.r0 * t),
            k / eta(p.r0 / (2 * p.diamZ)) * eta(t),
        ])

    def __call__(self, t):
        return self.branches(t).max(axis=0)


def promote_gauge(params, check_grid=None):
    """Global gauge ``eta_hat`` from a local weak-QS gauge: the max of four branches."""
    grid = np.geomspace(1e-6, 1e6, 241) if check_grid is None else np.asarray(check_grid)
    vals = np.asarray(params.eta(grid), dtype=np.float64)
    if np.any(np.diff(vals) < 0):
        raise ValueError("eta is not monotone on the check grid")
    if np.any(vals <= 0) or float(np.asarray(params.eta(0.0))) != 0.0:
        raise ValueError("eta must vanish at 0 and be positive elsewhere")
    return PromotedGauge(params)


# -- Besov morphism norm -----------------------------------------------------

@dataclass
class MorphismReport:
    ratios: list
    sup: float
    excluded: list = field(default_factory=list)


def default_family(W, n=12, seed=0):
    """Seeded tent functions ``(1 - d(w, c)/rho)_+`` on the codomain."""
    rng = np.random.default_rng(seed)
    centers = rng.choice(W.n, size=min(n, W.n), replace=False)
    radii = W.diam * 2.0 ** -rng.uniform(1, 4, size=len(centers))
    return [np.maximum(1 - W.row(c) / r, 0.0) for c, r in zip(centers, radii)]


def besov_morphism_norm(m, family, theta_Z, theta_W, p):
    """Per-function ratio of the Besov energy of ``f o phi`` on Z to that of ``f`` on W."""
    if not len(family):
        raise ValueError("test family is empty")
    ratios, excluded = [], []
    for k, f in enumerate(family):
        f = np.asarray(f, dtype=np.float64)
        ew = besov_energy(m.codomain, f, theta_W, p)
        if ew == 0:
            excluded.append(k)
            ratios.append(math.nan)
            continue
        ratios.append(besov_energy(m.domain, f[m.pairing], theta_Z, p) / ew)
    good = [r for r in ratios if not math.isnan(r)]
    if not good:
        raise ValueError("every test function has zero energy")
    return MorphismReport(ratios, max(good), excluded)


# -- capacity distortion detector --------------------------------------------

@dataclass
class DetectorRow:
    x: int
    y: int
    z: int
    L: float
    l: float
    cap_W: float = math.nan
    cap_Z: float = math.nan
    implied: dict = field(default_factory=dict)
    status: str = "ok"


@dataclass
class DetectorReport:
    rows: list
    max_implied: dict
    T: float
    A: dict
    C_L: float
    sharp: bool

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "z", "L", "l", "cap_W", "cap_Z",
                         "implied_1_minus_p", "implied_minus_p", "status"])
        for r in self.rows:
            writer.writerow([r.x, r.y, r.z, repr(r.L), repr(r.l), repr(r.cap_W), repr(r.cap_Z),
                             repr(r.implied.get("1-p", math.nan)),
                             repr(r.implied.get("-p", math.nan)), r.status])
        return buf.getvalue()

    def to_dict(self):
        return {"max_implied": self.max_implied, "T": self.T, "A": self.A,
                "C_L": self.C_L, "sharp": self.sharp, "n_rows": len(self.rows)}


def _mesh_adjacency(cloud):
    a, b = cloud.pairs_within(np.arange(cloud.n), np.arange(cloud.n),
                              cloud.mesh * (1 + 1e-9), closed=True)
    keep = a != b
    return coo_matrix((np.ones(keep.sum()), (a[keep], b[keep])), shape=(cloud.n, cloud.n)).tocsr()


def _bfs(adj, allowed, src):
    """Hop distances and predecessors from ``src`` inside the ``allowed`` node set."""
    nodes = np.flatnonzero(allowed)
    local = np.full(len(allowed), -1)
    local[nodes] = np.arange(len(nodes))
    if local[src] < 0:
        return nodes, local, None, None
    sub = adj[nodes][:, nodes]
    dist, pred = shortest_path(sub, unweighted=True, directed=False, indices=local[src],
                               return_predecessors=True)
    return nodes, local, dist, pred


def _path(nodes, local, pred, src, dst):
    path = [local[dst]]
    while path[-1] != local[src]:
        path.append(pred[path[-1]])
    return np.sort(nodes[path])


def _chain(adj, allowed, src, dst):
    """Fewest-hop path from ``src`` to ``dst`` through ``allowed`` nodes, or None."""
    nodes, local, dist, pred = _bfs(adj, allowed, src)
    if dist is None or local[dst] < 0 or not np.isfinite(dist[local[dst]]):
        return None
    return _path(nodes, local, pred, src, dst)


def _far_chain(adj, allowed, src, d_center, reach):
    """Path from ``src`` inside ``allowed`` to the nearest node with ``d_center > reach``.

    Falls back to the reachable node farthest from the center.
    """
    nodes, local, dist, pred = _bfs(adj, allowed, src)
    if dist is None:
        return None, False
    reached = nodes[np.isfinite(dist)]
    dc = d_center[reached]
    far = dc > reach
    if far.any():
        cand = reached[far]
        w = int(cand[np.argmin(d_center[cand])])
    else:
        w = int(reached[np.argmax(dc)])
    return _path(nodes, local, pred, src, w), bool(far.any())


def detector_configs(m, n_configs=16, seed=0):
    """Seeded triples ``(x, y, z)`` with ``d_Z(x, y) <= d_Z(x, z)``, worst weak-QS triple first."""
    DZ = m.domain.distance_matrix()
    out = []
    if m.domain.n <= EXHAUSTIVE_MAX:
        res = weak_qs_constant(m)
        x, far, near = res.triple
        out.append((x, near, far))
    rng = np.random.default_rng(seed)
    n = m.domain.n
    while len(out) < n_configs:
        x, y, z = (int(v) for v in rng.integers(0, n, 3))
        if len({x, y, z}) < 3:
            continue
        if DZ[x, y] > DZ[x, z]:
            y, z = z, y
        out.append((x, y, z))
    return out


def qs_capacity_detector(m, theta_Z, theta_W, p, configs, C_L=1.2, Q_Z=None, T=None,
                         family=None, tol=None):
    """Capacity-distortion bound on ``L/l`` per configuration.

    For ``x, y, z`` with ``d_Z(x, y) <= d_Z(x, z)`` set ``L = d_W(phi x, phi y)``
    and ``l = d_W(phi x, phi z)``. Rows with ``L <= 4 C_L^2 l`` imply the
    trivial bound ``4 C_L^2``. Otherwise a chain ``E`` from ``phi y`` to a far
    point avoids ``B(phi x, 2 C_L l)``, a chain ``F`` from ``phi x`` to
    ``phi z`` stays in ``B(phi x, C_L l)``, and both capacities are computed.
    With ``T`` the morphism constant and ``A`` the largest
    ``cap_W / log(L/(C_L^2 l))**beta`` over the grid, the row implies
    ``L/l <= C_L^2 exp((cap_Z / (T A))**(1/beta))`` for each reading
    ``beta`` in ``{1 - p, -p}``.
    """
    W = m.codomain
    phi = m.pairing
    inv = m.inverse
    DW = W.distance_matrix()
    if T is None:
        fam = default_family(W) if family is None else family
        T = besov_morphism_norm(m, fam, theta_Z, theta_W, p).sup
    sharp = Q_Z is not None and abs(theta_Z * p - Q_Z) < 1e-9
    adj = _mesh_adjacency(W)
    rows = []
    for x, y, z in configs:
        wx, wy, wz = int(phi[x]), int(phi[y]), int(phi[z])
        L, l = float(DW[wx, wy]), float(DW[wx, wz])
        row = DetectorRow(x, y, z, L, l)
        if L <= 4 * C_L ** 2 * l:
            row.status = "trivial"
            rows.append(row)
            continue
        dx = DW[wx]
        E, reached = _far_chain(adj, dx >= 2 * C_L * l, wy, dx, C_L ** 2 * L)
        F = _chain(adj, dx < C_L * l, wx, wz)
        if E is None or F is None:
            row.status = "no-chain"
            rows.append(row)
            continue
        if not reached:
            row.status = "short-chain"
        rw = besov_capacity(W, Condenser(E, F), theta_W, p, tol=tol)
        rz = besov_capacity(m.domain, Condenser(inv[E], inv[F]), theta_Z, p, tol=tol)
        row.cap_W, row.cap_Z = rw.value, rz.value
        if not (rw.success and rz.success):
            row.status = "solver-failure"
        elif row.status == "short-chain":
            row.status = "ok"
        rows.append(row)
    readings = {"1-p": 1.0 - p, "-p": -float(p)}
    A = {}
    max_implied = {}
    active = [r for r in rows if r.status == "ok"]
    for key, beta in readings.items():
        if active:
            A[key] = max(r.cap_W / math.log(r.L / (C_L ** 2 * r.l)) ** beta for r in active)
        else:
            A[key] = math.nan
        best = 4 * C_L ** 2 if any(r.status == "trivial" for r in rows) else 0.0
        for r in rows:
            if r.status == "trivial":
                r.implied[key] = 4 * C_L ** 2
            elif r.status == "ok":
                r.implied[key] = C_L ** 2 * math.exp((r.cap_Z / (T * A[key])) ** (1.0 / beta))
                best = max(best, r.implied[key])
        max_implied[key] = best
    return DetectorReport(rows, max_implied, float(T), A, C_L, sharp)


def qs_verdict(values):
    """Trend verdict over refinement levels.

    ``non-QS-trend`` when the values increase strictly and at least double,
    ``consistent-with-QS`` when they stay within a factor 1.5, otherwise
    ``inconclusive``. A single level is always inconclusive.
    """
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2 or not np.all(np.isfinite(v)):
        return "inconclusive"
    if np.all(np.diff(v) > 0) and v[-1] / v[0] >= 2:
        return "non-QS-trend"
    if v.max() / v.min() <= 1.5:
        return "consistent-with-QS"
    return "inconclusive"


def read_pairing_csv(text, n):
    """Parse ``z_index,w_index`` rows into a pairing array of length ``n``."""
    pairing = np.full(n, -1, dtype=np.intp)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != ["z_index", "w_index"]:
        raise ValueError("pairing CSV needs the header z_index,w_index")
    for row in reader:
        if not row:
            continue
        zi, wi = int(row[0]), int(row[1])
        if not 0 <= zi < n:
            raise ValueError(f"z_index {zi} out of range")
        pairing[zi] = wi
    if np.any(pairing < 0):
        raise ValueError("pairing does not cover every domain index")
    return pairing
    return pairing
