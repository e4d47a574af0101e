"""Besov and Newton energies, condenser capacities, extension and trace."""

from __future__ import annotations

import csv
import io
import logging
import math
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from . import kernels
from .errors import ResourceLimitError

log = logging.getLogger(__name__)

MAX_DENSE = 5000
DEFAULT_TOL_LINEAR = 1e-8
DEFAULT_TOL_DESCENT = 1e-6
DEFAULT_MAX_ITER = 100_000


# -- condensers and reports ------------------------------------------------

@dataclass(frozen=True)
class Condenser:
    E: np.ndarray
    F: np.ndarray
    arena: str = "cloud"

    def __post_init__(self):
        E = np.unique(np.asarray(self.E, dtype=np.intp))
        F = np.unique(np.asarray(self.F, dtype=np.intp))
        if self.arena not in ("cloud", "graph"):
            raise ValueError(f"unknown arena {self.arena!r}")
        if not len(E) or not len(F):
            raise ValueError("condenser plates must be nonempty")
        if np.intersect1d(E, F).size:
            raise ValueError("condenser plates E and F intersect")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "F", F)


@dataclass
class SolveReport:
    value: float
    iterations: int
    final_optimality: float
    minimizer: np.ndarray
    status: str = "converged"
    method: str = ""
    p: float = 2.0
    theta: float | None = None
    arena: str = "cloud"
    E_size: int = 0
    F_size: int = 0
    seed: int | None = None

    @property
    def success(self):
        return self.status in ("converged", "no-free-nodes", "direct")

    def to_dict(self):
        return {
            "value": self.value,
            "iterations": self.iterations,
            "optimality": self.final_optimality,
            "status": self.status,
            "method": self.method,
            "p": self.p,
            "theta": self.theta,
            "arena": self.arena,
            "E_size": self.E_size,
            "F_size": self.F_size,
            "seed": self.seed,
        }

    def minimizer_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "value"])
        for i, v in enumerate(self.minimizer):
            writer.writerow([i, repr(float(v))])
        return buf.getvalue()


# -- Besov form ------------------------------------------------------------

_FORM_CACHE = weakref.WeakKeyDictionary()


def besov_form(cloud, theta, p):
    """Symmetric pair weights ``W`` with ``energy(u) = sum_{i<j} W_ij |u_i - u_j|^p``.

    ``W_ij = K_ij + K_ji`` where ``K_xz = w_x w_z / (d(x,z)^{theta p} nu(closed B(x, d(x,z))))``.
    """
    if cloud.n > MAX_DENSE:
        raise ResourceLimitError(
            f"dense Besov assembly is limited to {MAX_DENSE} points, got {cloud.n}")
    s = float(theta) * float(p)
    per_cloud = _FORM_CACHE.setdefault(cloud, {})
    if s not in per_cloud:
        D = cloud.distance_matrix()
        if "M" not in per_cloud:
            per_cloud["M"] = kernels.ball_mass_matrix(D, cloud.weights)
        # keep one exponent at a time; each matrix is N^2 doubles
        for key in [k for k in per_cloud if k != "M"]:
            del per_cloud[key]
        per_cloud[s] = kernels.besov_weights(D, per_cloud["M"], cloud.weights, s)
    return per_cloud[s]


def _check_exponents(theta, p):
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if theta is not None and not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")


def besov_energy(cloud, u, theta, p):
    _check_exponents(theta, p)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (cloud.n,):
        raise ValueError("function must have one value per cloud point")
    return kernels.pair_energy(besov_form(cloud, theta, p), u, p)


# -- Newton form -----------------------------------------------------------

def newton_conductances(ug, p):
    """``c_e = (mu_beta(v)/deg(v) + mu_beta(w)/deg(w)) / ell_e^p``."""
    g = ug.base
    e = g.edges
    share = ug.mu_beta / g.degree
    return (share[e[:, 0]] + share[e[:, 1]]) / ug.edge_lengths ** p


def newton_energy(ug, U, p):
    _check_exponents(None, p)
    U = np.asarray(U, dtype=np.float64)
    e = ug.base.edges
    return edge_energy(e[:, 0], e[:, 1], newton_conductances(ug, p), U, p)


def edge_energy(ei, ej, c, U, p):
    return kernels.edge_energy_grad(ei, ej, c, U, p)[0]


# -- solvers ---------------------------------------------------------------

def _linear_solve(A, b, tol, max_iter):
    """Jacobi-preconditioned CG; direct Cholesky or sparse LU when CG stalls."""
    diag = A.diagonal() if sp.issparse(A) else np.diag(A).copy()
    n = len(b)
    M = LinearOperator((n, n), matvec=lambda x: x / diag, dtype=np.float64)
    its = [0]

    def count(_):
        its[0] += 1

    bnorm = np.linalg.norm(b)
    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=count)
    res = np.linalg.norm(A @ x - b) / (bnorm if bnorm > 0 else 1.0)
    method = "cg"
    if info != 0 or res > tol:
        log.info("CG stopped at relative residual %.3g; using a direct solve", res)
        if sp.issparse(A):
            x = spsolve(A.tocsc(), b)
        else:
            x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), b)
        res = np.linalg.norm(A @ x - b) / (bnorm if bnorm > 0 else 1.0)
        method = "direct"
    return x, its[0], res, method


def _spg(fg, u, free, tol, max_iter, memory=10):
    """Spectral projected gradient on the box ``[0, 1]`` over the free nodes.

    Barzilai-Borwein steps with a nonmonotone Armijo backtrack. Stops once
    the best energy has changed by at most ``tol`` (relative) over the last
    ``memory`` iterations.
    """
    u = u.copy()
    f, g = fg(u)
    hist = [f]
    pg = np.clip(u[free] - g[free], 0, 1) - u[free]
    gmax = np.max(np.abs(pg)) if pg.size else 0.0
    if gmax == 0.0:
        return u, f, 0, 0.0, True
    lam = 1.0 / gmax
    change = math.inf
    for k in range(1, max_iter + 1):
        d = np.clip(u[free] - lam * g[free], 0, 1) - u[free]
        gd = float(g[free] @ d)
        if gd >= 0:
            return u, f, k, 0.0, True
        fmax = max(hist[-memory:])
        t = 1.0
        while True:
            trial = u.copy()
            trial[free] += t * d
            ft, gt = fg(trial)
            if ft <= fmax + 1e-4 * t * gd or t < 1e-12:
                break
            t *= 0.5
        s = trial[free] - u[free]
        y = gt[free] - g[free]
        sy = float(s @ y)
        lam = float(s @ s) / sy if sy > 0 else 1e10 / max(gmax, 1e-300)
        lam = min(max(lam, 1e-30), 1e30)
        u, f, g = trial, ft, gt
        hist.append(f)
        if len(hist) > memory:
            old = min(hist[:-memory])
            new = min(hist[-memory:])
            change = (old - new) / max(abs(new), 1e-300)
            if change <= tol:
                return u, f, k, change, True
    return u, f, max_iter, change, False


def _capacity(n, E, F, p, tol, max_iter, energy_grad, laplacian, solver):
    fixed = np.zeros(n, dtype=bool)
    fixed[E] = True
    fixed[F] = True
    free = np.flatnonzero(~fixed)
    u = np.zeros(n)
    u[E] = 1.0
    if not len(free):
        return u, energy_grad(u)[0], 0, 0.0, "no-free-nodes", "none"
    if solver == "auto":
        solver = "linear" if p == 2 else "descent"
    if solver == "linear":
        if p != 2:
            raise ValueError("the linear solver needs p = 2")
        L = laplacian()
        if sp.issparse(L):
            L = L.tocsr()
            A = L[free][:, free]
            b = -np.asarray(L[free][:, E].sum(axis=1)).ravel()
        else:
            A = L[np.ix_(free, free)]
            b = -L[np.ix_(free, E)].sum(axis=1)
        x, its, res, method = _linear_solve(A, b, tol, max_iter)
        u[free] = x
        status = "converged" if res <= tol else "failed"
        return u, energy_grad(u)[0], its, float(res), status, method
    if solver != "descent":
        raise ValueError(f"unknown solver {solver!r}")
    u[free] = 0.5
    u, f, its, change, ok = _spg(energy_grad, u, free, tol, max_iter)
    return u, f, its, float(change), "converged" if ok else "max-iter", "spg"


def _dense_laplacian(W):
    L = -W.copy()
    L[np.diag_indices_from(L)] = W.sum(axis=1)
    return L


def besov_capacity(cloud, cond, theta, p, tol=None, max_iter=DEFAULT_MAX_ITER,
                   solver="auto", seed=None):
    """Minimize the Besov energy over ``u = 1`` on ``E``, ``u = 0`` on ``F``."""
    _check_exponents(theta, p)
    if cond.arena != "cloud":
        raise ValueError("Besov capacity needs a cloud condenser")
    if tol is None:
        tol = DEFAULT_TOL_LINEAR if p == 2 and solver != "descent" else DEFAULT_TOL_DESCENT
    W = besov_form(cloud, theta, p)
    u, value, its, opt, status, method = _capacity(
        cloud.n, cond.E, cond.F, p, tol, max_iter,
        lambda x: kernels.pair_energy_grad(W, x, p),
        lambda: _dense_laplacian(W), solver)
    return SolveReport(value, its, opt, u, status, method, p, theta, "cloud",
                       len(cond.E), len(cond.F), seed)


def edge_capacity(n, ei, ej, c, cond, p, tol=None, max_iter=DEFAULT_MAX_ITER,
                  solver="auto"):
    """Condenser capacity of the edge energy ``sum_e c_e |U(v) - U(w)|^p``."""
    _check_exponents(None, p)
    ei = np.asarray(ei, dtype=np.intp)
    ej = np.asarray(ej, dtype=np.intp)
    c = np.asarray(c, dtype=np.float64)
    if tol is None:
        tol = DEFAULT_TOL_LINEAR if p == 2 and solver != "descent" else DEFAULT_TOL_DESCENT

    def laplacian():
        A = sp.coo_matrix((np.r_[c, c], (np.r_[ei, ej], np.r_[ej, ei])), shape=(n, n)).tocsr()
        return sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A

    u, value, its, opt, status, method = _capacity(
        n, cond.E, cond.F, p, tol, max_iter,
        lambda x: kernels.edge_energy_grad(ei, ej, c, x, p), laplacian, solver)
    return SolveReport(value, its, opt, u, status, method, p, None, "graph",
                       len(cond.E), len(cond.F))


def newton_capacity(ug, cond, p, tol=None, max_iter=DEFAULT_MAX_ITER, solver="auto", seed=None):
    if cond.arena != "graph":
        raise ValueError("Newton capacity needs a graph condenser")
    e = ug.base.edges
    rep = edge_capacity(ug.base.n_vertices, e[:, 0], e[:, 1], newton_conductances(ug, p),
                        cond, p, tol, max_iter, solver)
    rep.seed = seed
    return rep


# -- extension and trace ---------------------------------------------------

def extend(cloud, ug, u):
    """Ball averages ``Eu(n, x) = average of u over the closed ball B(x, alpha**-n)``."""
    if ug.cloud is not cloud:
        raise ValueError("uniformized graph was built over a different cloud")
    u = np.asarray(u, dtype=np.float64)
    return (ug.balls @ u) / ug.mu_plus


def trace(cloud, ug, U):
    """Read ``U`` off at each point's deepest-level representative."""
    if ug.cloud is not cloud:
        raise ValueError("uniformized graph was built over a different cloud")
    return np.asarray(U, dtype=np.float64)[ug.boundary_reps]


def extension_energy_ratio(cloud, ug, u, theta, p):
    """Newton energy of ``extend(u)`` over the Besov energy of ``u``; 0 for constants."""
    be = besov_energy(cloud, u, theta, p)
    if be == 0:
        return 0.0
    return newton_energy(ug, extend(cloud, ug, u), p) / be


def boundary_condenser(ug, cond):
    """Graph condenser on the deepest-level representatives of a cloud condenser."""
    E = np.unique(ug.boundary_reps[cond.E])
    F = np.unique(ug.boundary_reps[cond.F])
    return Condenser(E, F, "graph")


def sample_lipschitz(cloud, u):
    """``max |u(x) - u(y)| / d(x, y)`` over sample pairs."""
    u = np.asarray(u, dtype=np.float64)
    best = 0.0
    for start in range(0, cloud.n, 512):
        rows = np.arange(start, min(start + 512, cloud.n))
        D = cloud.dist(rows, np.arange(cloud.n))
        diff = np.abs(u[rows, None] - u[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(D > 0, diff / D, 0.0)
        best = max(best, float(q.max()))
    return best


def lipschitz_family(cloud, n=20, seed=0):
    """Seeded Lipschitz test functions: tents, clipped ramps, distances and folded sines."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        d = cloud.row(int(rng.integers(cloud.n)))
        rho = cloud.diam * 2.0 ** -rng.uniform(0, 3)
        kind = k % 4
        if kind == 0:
            u = np.maximum(1 - d / rho, 0.0)
        elif kind == 1:
            u = np.minimum(d / rho, 1.0)
        elif kind == 2:
            u = d.copy()
        else:
            u = np.abs(np.sin(d / rho))
        out.append(u)
    return out
