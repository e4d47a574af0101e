"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Every function here returns the same values as its compiled twin up to
floating-point summation order.
"""

import numpy as np


def ball_mass_matrix(D, w):
    """Closed-ball masses ``M[i, j] = sum(w[k] for d(i, k) <= d(i, j))``."""
    D = np.asarray(D, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    order = np.argsort(D, axis=1, kind="stable")
    Ds = np.take_along_axis(D, order, axis=1)
    cw = np.cumsum(w[order], axis=1)
    out = np.empty_like(D)
    rows = np.arange(D.shape[0])[:, None]
    # last position holding each distance value, so ties share one mass
    last = np.empty_like(order)
    for i in range(D.shape[0]):
        last[i] = np.searchsorted(Ds[i], Ds[i], side="right") - 1
    out[rows, order] = np.take_along_axis(cw, last, axis=1)
    return out


def besov_weights(D, M, w, s):
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    Dn = D.copy()
    np.fill_diagonal(Dn, 1.0)
    Mn = np.array(M, dtype=np.float64)
    np.fill_diagonal(Mn, 1.0)
    K = np.outer(w, w) / (Dn ** s * Mn)
    np.fill_diagonal(K, 0.0)
    W = K + K.T
    W[np.arange(n), np.arange(n)] = 0.0
    return W


def pair_energy(W, u, p):
    u = np.asarray(u, dtype=np.float64)
    A = np.abs(u[:, None] - u[None, :]) ** p
    return float(np.sum(np.triu(W * A, 1)))


def pair_energy_grad(W, u, p):
    u = np.asarray(u, dtype=np.float64)
    diff = u[:, None] - u[None, :]
    a = np.abs(diff)
    total = float(np.sum(np.triu(W * a ** p, 1)))
    grad = p * np.sum(W * np.sign(diff) * a ** (p - 1.0), axis=1)
    return total, grad


def edge_energy_grad(ei, ej, c, u, p):
    u = np.asarray(u, dtype=np.float64)
    diff = u[ei] - u[ej]
    a = np.abs(diff)
    total = float(np.sum(c * a ** p))
    t = p * c * np.sign(diff) * a ** (p - 1.0)
    grad = np.zeros_like(u)
    np.add.at(grad, ei, t)
    np.add.at(grad, ej, -t)
    return total, grad


def weak_qs_exhaustive(DZ, DW, rho):
    DZ = np.asarray(DZ, dtype=np.float64)
    DW = np.asarray(DW, dtype=np.float64)
    n = DZ.shape[0]
    best, arg, count = -np.inf, (-1, -1, -1), 0
    idx = np.arange(n)
    for x in range(n):
        dxy = DZ[x][:, None]
        dxz = DZ[x][None, :]
        ok = (dxz <= dxy) & (dxy <= rho) & (DZ <= rho)
        ok &= (idx[:, None] != x) & (idx[None, :] != x) & (idx[:, None] != idx[None, :])
        cnt = int(ok.sum())
        if not cnt:
            continue
        count += cnt
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = DW[x][None, :] / DW[x][:, None]
        ratio = np.where(ok, ratio, -np.inf)
        k = int(np.argmax(ratio))
        if ratio.flat[k] > best:
            best = float(ratio.flat[k])
            arg = (x, k // n, k % n)
    return best, arg, count


def weak_qs_triples(DZ, DW, triples, rho):
    DZ = np.asarray(DZ, dtype=np.float64)
    DW = np.asarray(DW, dtype=np.float64)
    t = np.asarray(triples, dtype=np.intp).reshape(-1, 3)
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    ok = (x != y) & (x != z) & (y != z)
    ok &= DZ[x, z] <= DZ[x, y]
    ok &= (DZ[x, y] <= rho) & (DZ[y, z] <= rho)
    count = int(ok.sum())
    if not count:
        return -np.inf, (-1, -1, -1), 0
    ratio = np.where(ok, DW[x, z] / np.where(ok, DW[x, y], 1.0), -np.inf)
    k = int(np.argmax(ratio))
    return float(ratio[k]), (int(x[k]), int(y[k]), int(z[k])), count
