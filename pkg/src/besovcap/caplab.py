"""Annulus scaling experiments, Hausdorff content and the Loewner-type bound."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix

from .energy import Condenser, besov_capacity, besov_energy

CASE2_TOL = 1e-9
MIN_FIT_POINTS = 4
MIN_FIT_SPAN = 8.0


def case_tag(p, theta, Q):
    if not (p > 0 and theta > 0 and Q > 0):
        raise ValueError("p, theta and Q must be positive")
    d = p * theta - Q
    if abs(d) < CASE2_TOL:
        return 2
    return 1 if d > 0 else 3


@dataclass(frozen=True)
class AnnulusSpec:
    x0: int
    r: float
    R: float

    def __post_init__(self):
        if not 0 < self.r < self.R / 2:
            raise ValueError(f"annulus needs 0 < r < R/2, got r={self.r}, R={self.R}")

    def check(self, cloud):
        if not 0 <= self.x0 < cloud.n:
            raise IndexError(f"center {self.x0} out of range")
        if self.R / 2 > cloud.diam:
            raise ValueError("annulus needs R/2 <= diam")

    def condenser(self, cloud):
        """Plates ``closed B(x0, r)`` and ``Z minus B(x0, R)``."""
        d = cloud.row(self.x0)
        return Condenser(np.flatnonzero(d <= self.r), np.flatnonzero(d >= self.R))


def predicted_annulus_bound(r, R, p, theta, Q):
    """Case-dependent product ``xi(R) Xi(r) Psi(R/r)`` with unit constants."""
    tag = case_tag(p, theta, Q)
    if not 0 < r < R / 2:
        raise ValueError(f"annulus needs 0 < r < R/2, got r={r}, R={R}")
    if tag == 1:
        return R ** (Q - theta * p), 1
    if tag == 2:
        return math.log(R / r) ** (1 - p), 2
    return r ** (Q - theta * p), 3


def _set_distance(cloud, members):
    if not len(members):
        return np.full(cloud.n, np.inf)
    out = np.full(cloud.n, np.inf)
    for start in range(0, len(members), 512):
        block = cloud.dist(np.arange(cloud.n), members[start:start + 512])
        np.minimum(out, block.min(axis=1), out=out)
    return out


def lipschitz_cutoff(cloud, spec, variant):
    """Piecewise-linear cutoffs: ``caseR`` is ``(1 - 2 dist(x, B(x0, R/2))/R)_+``,
    ``caser`` is ``(1 - dist(x, B(x0, r))/r)_+``. Set distances are taken
    within the sample and balls are closed."""
    d0 = cloud.row(spec.x0)
    if variant == "caseR":
        dist = _set_distance(cloud, np.flatnonzero(d0 <= spec.R / 2))
        return np.maximum(1 - 2 * dist / spec.R, 0.0)
    if variant == "caser":
        dist = _set_distance(cloud, np.flatnonzero(d0 <= spec.r))
        return np.maximum(1 - dist / spec.r, 0.0)
    raise ValueError(f"unknown cutoff variant {variant!r}")


def log_cutoff(cloud, spec):
    """``min((log(R/d)/log(R/r))_+, 1)`` with value 1 at ``x0``."""
    d = cloud.row(spec.x0)
    out = np.ones(cloud.n)
    pos = d > 0
    out[pos] = np.clip(np.log(spec.R / d[pos]) / math.log(spec.R / spec.r), 0.0, 1.0)
    return out


def log_cutoff_gradient_bound(ug, spec):
    """``1 / (log(R/r) d(x, x0))`` on ``r <= d < R`` at vertex centers, else 0."""
    d = ug.cloud.row(spec.x0)[ug.base.point]
    inside = (d >= spec.r) & (d < spec.R)
    out = np.zeros(len(d))
    out[inside] = 1.0 / (math.log(spec.R / spec.r) * d[inside])
    return out


def cutoff_for_case(cloud, spec, tag):
    if tag == 1:
        return lipschitz_cutoff(cloud, spec, "caseR")
    if tag == 2:
        return log_cutoff(cloud, spec)
    return lipschitz_cutoff(cloud, spec, "caser")


# -- scaling reports -------------------------------------------------------

@dataclass
class AnnulusRow:
    r: float
    R: float
    case: int
    capacity: float
    predicted: float
    testfn_energy: float
    status: str


@dataclass
class ScalingReport:
    rows: list
    fitted_exponent: float
    target_exponent: float
    residual: float
    fit_variable: str
    alt_target_exponent: float | None = None
    matches: str | None = None
    status: str = "ok"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r", "R", "case", "capacity", "predicted", "testfn_energy", "status"])
        for row in self.rows:
            writer.writerow([repr(row.r), repr(row.R), row.case, repr(row.capacity),
                             repr(row.predicted), repr(row.testfn_energy), row.status])
        return buf.getvalue()

    def to_dict(self):
        return {
            "fitted_exponent": self.fitted_exponent,
            "target_exponent": self.target_exponent,
            "alt_target_exponent": self.alt_target_exponent,
            "matches": self.matches,
            "residual": self.residual,
            "fit_variable": self.fit_variable,
            "status": self.status,
            "n_rows": len(self.rows),
            "case_tag": self.rows[0].case if self.rows else None,
        }


def fit_exponent(x, y, span):
    """Least-squares slope of ``y`` on ``x``; refuses short or narrow grids."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < MIN_FIT_POINTS or span < MIN_FIT_SPAN * (1 - 1e-12):
        return math.nan, math.nan, "insufficient-span"
    slope, icept = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + icept)) ** 2)))
    return float(slope), res, "ok"


def annulus_experiment(cloud, x0, grid, p, theta, Q, tol=None, workers=1):
    """Besov capacities of ``(closed B(x0, r), Z minus B(x0, R))`` over a grid of ``(r, R)``.

    Case 2 regresses ``log cap`` on ``log log(R/r)``; cases 1 and 3 on
    ``log R`` and ``log r``. The fit needs at least four points spanning a
    factor of 8 in ``R/r``, ``R`` or ``r`` respectively.
    """
    tag = case_tag(p, theta, Q)
    specs = [AnnulusSpec(x0, r, R) for r, R in grid]
    for s in specs:
        s.check(cloud)

    def run(spec):
        pred, _ = predicted_annulus_bound(spec.r, spec.R, p, theta, Q)
        try:
            cond = spec.condenser(cloud)
        except ValueError as exc:
            return AnnulusRow(spec.r, spec.R, tag, math.nan, pred, math.nan, f"bad-condenser: {exc}")
        rep = besov_capacity(cloud, cond, theta, p, tol=tol)
        u = cutoff_for_case(cloud, spec, tag)
        ute = besov_energy(cloud, u, theta, p)
        status = "ok" if rep.success else rep.status
        return AnnulusRow(spec.r, spec.R, tag, rep.value, pred, ute, status)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, specs))
    else:
        rows = [run(s) for s in specs]
    good = [row for row in rows if row.status == "ok"]
    r = np.array([row.r for row in good])
    R = np.array([row.R for row in good])
    y = np.log([row.capacity for row in good]) if good else np.array([])
    alt = None
    if tag == 2:
        var = "log(log(R/r))"
        x = np.log(np.log(R / r)) if good else np.array([])
        span = (R / r).max() / (R / r).min() if good else 0.0
        target, alt = 1 - p, -p
    elif tag == 1:
        var, x = "log(R)", np.log(R)
        span = R.max() / R.min() if good else 0.0
        target = Q - theta * p
    else:
        var, x = "log(r)", np.log(r)
        span = r.max() / r.min() if good else 0.0
        target = Q - theta * p
    slope, res, status = fit_exponent(x, y, span)
    if len(good) < len(rows) and status == "ok":
        status = "partial"
    matches = None
    if alt is not None and not math.isnan(slope):
        matches = "1-p" if abs(slope - target) <= abs(slope - alt) else "-p"
    return ScalingReport(rows, slope, target, res, var, alt, matches, status)


def c0_constant(alpha, tau):
    """``C_0 = 2 tau alpha``: the lower-bound regime is ``R < diam / (4 C_0)``."""
    return 2 * tau * alpha


def annulus_grid(case, cloud, alpha=2.0, tau=1.5):
    """Default grids clipped to the lower-bound regime ``R < diam / (4 C_0)``.

    case 2: fixed ``R``, ``R/r`` in {8, 16, 32, 64};
    case 3: fixed ``R``, ``r = R/2.5`` halved four times;
    case 1: fixed ``r``, ``R`` doubled four times up to the regime's top.
    """
    R_top = 0.98 * cloud.diam / (4 * c0_constant(alpha, tau))
    if case == 2:
        return [(R_top / q, R_top) for q in (8, 16, 32, 64)]
    if case == 3:
        return [(R_top / 2.5 * 2.0 ** -j, R_top) for j in range(5)]
    if case == 1:
        R0 = R_top * 2.0 ** -4
        return [(R0 / 2.5, R0 * 2.0 ** j) for j in range(5)]
    raise ValueError(f"unknown case {case!r}")


# -- Hausdorff content -----------------------------------------------------

@dataclass
class ContentEstimate:
    s: float
    value: float
    cover: list = field(default_factory=list)
    diam_anchor: float | None = None

    def to_dict(self):
        return {"s": self.s, "value": self.value,
                "cover": [[int(c), float(r), float(d)] for c, r, d in self.cover],
                "diam_anchor": self.diam_anchor}


def _one_center(cloud, members):
    D = cloud.dist(members, members)
    ecc = D.max(axis=1)
    k = int(np.argmin(ecc))
    return int(members[k]), float(ecc[k]), float(D.max())


def _split(cloud, members, tau):
    """Bisect clusters by farthest-point seeds until each diameter is below ``tau``."""
    out = []
    stack = [members]
    while stack:
        m = stack.pop()
        D = cloud.dist(m, m)
        if D.max() < tau or len(m) == 1:
            out.append(m)
            continue
        a = int(np.argmax(D[0]))
        b = int(np.argmax(D[a]))
        left = D[a] <= D[b]
        stack.extend([m[~left], m[left]])
    return out


def hausdorff_content(cloud, E, s, tau=math.inf):
    """Greedy upper bound for ``H^s_tau(E)`` with sample balls.

    ``E`` is split into components at mesh scale, components wider than
    ``tau`` are bisected, and clusters are merged while that lowers
    ``sum diam^s``. The cover lists ``(center, radius, diam)`` per cluster:
    the closed ball about the cluster's best center contains the cluster,
    and the value is the sum of the cluster diameters to the power ``s``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    if not tau > 0:
        raise ValueError("tau must be positive")
    E = np.unique(np.asarray(E, dtype=np.intp))
    if not len(E):
        return ContentEstimate(s, 0.0, [], 0.0)
    if len(E) == 1:
        return ContentEstimate(s, 0.0, [(int(E[0]), 0.0, 0.0)], 0.0)
    h = cloud.mesh
    a, b = cloud.pairs_within(E, E, h * (1 + 1e-9), closed=True)
    A = coo_matrix((np.ones(len(a)), (a, b)), shape=(len(E), len(E)))
    ncomp, labels = connected_components(A, directed=False)
    clusters = []
    for k in range(ncomp):
        clusters.extend(_split(cloud, E[labels == k], tau))
    diam_E = float(cloud.dist(E, E).max()) if len(E) <= 4000 else math.nan

    def cdiam(m):
        return float(cloud.dist(m, m).max()) if len(m) > 1 else 0.0

    diams = [cdiam(m) for m in clusters]
    if len(clusters) <= 400:
        merged = True
        while merged and len(clusters) > 1:
            merged = False
            best = (0.0, None)
            for i in range(len(clusters)):
                for j in range(i + 1, len(clusters)):
                    dij = float(cloud.dist(clusters[i], clusters[j]).max())
                    dij = max(dij, diams[i], diams[j])
                    if dij >= tau:
                        continue
                    gain = diams[i] ** s + diams[j] ** s - dij ** s
                    if gain > best[0] + 1e-15:
                        best = (gain, (i, j, dij))
            if best[1] is not None:
                i, j, dij = best[1]
                clusters[i] = np.concatenate([clusters[i], clusters[j]])
                diams[i] = dij
                del clusters[j], diams[j]
                merged = True
    cover = []
    value = 0.0
    for m, dm in sorted(zip(clusters, diams), key=lambda t: int(t[0].min())):
        if len(m) == 1:
            cover.append((int(m[0]), 0.0, 0.0))
            continue
        c, rad, _ = _one_center(cloud, m)
        cover.append((c, rad, dm))
        value += dm ** s
    return ContentEstimate(s, value, cover, diam_E)


# -- Loewner-type bound ----------------------------------------------------

def loewner_lower_bound(contentE, contentF, R, s, theta, p, Q):
    """``min(H(E), H(F)) / R^(s - Q + theta p)`` under the bound's hypotheses."""
    if not 0 < s < Q:
        raise ValueError(f"need 0 < s < Q, got s={s}, Q={Q}")
    if not p > max(1.0, Q - s):
        raise ValueError(f"need p > max(1, Q - s), got p={p}, Q - s={Q - s}")
    if not (Q - s) / p < theta:
        raise ValueError(f"need (Q - s)/p < theta, got {(Q - s) / p} >= {theta}")
    if not theta < 1:
        raise ValueError(f"need theta < 1, got {theta}")
    if not R > 0:
        raise ValueError("R must be positive")
    return min(contentE, contentF) / R ** (s - Q + theta * p)


@dataclass
class LoewnerRow:
    R: float
    content_E: float
    content_F: float
    capacity: float
    lower_bound: float
    ratio: float
    status: str


@dataclass
class LoewnerReport:
    rows: list
    constant: float
    spread: float

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["R", "content_E", "content_F", "capacity", "lower_bound", "ratio", "status"])
        for row in self.rows:
            writer.writerow([repr(row.R), repr(row.content_E), repr(row.content_F),
                             repr(row.capacity), repr(row.lower_bound), repr(row.ratio), row.status])
        return buf.getvalue()

    def to_dict(self):
        return {"constant": self.constant, "spread": self.spread, "n_rows": len(self.rows)}


def quarter_segments(cloud, x0, R):
    """Opposite quarter pieces of the segment of length ``R`` centered at ``x0``.

    Only meaningful for clouds on a line; distances are measured from ``x0``
    with the sign of the coordinate offset.
    """
    offset = (cloud.coords[:, 0] - cloud.coords[x0, 0]) * cloud.scale
    E = np.flatnonzero((offset >= -R / 2) & (offset <= -R / 4))
    F = np.flatnonzero((offset >= R / 4) & (offset <= R / 2))
    return E, F


def loewner_experiment(cloud, configs, s, theta, p, Q, tol=None, workers=1):
    """Capacity against the Loewner-type lower bound for each ``(E, F, R)``."""

    def run(cfg):
        E, F, R = cfg
        cE = hausdorff_content(cloud, E, s).value
        cF = hausdorff_content(cloud, F, s).value
        lb = loewner_lower_bound(cE, cF, R, s, theta, p, Q)
        rep = besov_capacity(cloud, Condenser(E, F), theta, p, tol=tol)
        ratio = rep.value / lb if lb > 0 else math.inf
        return LoewnerRow(R, cE, cF, rep.value, lb, ratio, "ok" if rep.success else rep.status)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, configs))
    else:
        rows = [run(c) for c in configs]
    ratios = np.array([row.ratio for row in rows if row.status == "ok" and np.isfinite(row.ratio)])
    if not len(ratios):
        return LoewnerReport(rows, math.nan, math.nan)
    return LoewnerReport(rows, float(ratios.min()), float(ratios.max() / ratios.min()))
