"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback takes over. Set ``BESOVCAP_PURE=1`` to force the fallback.
"""

import importlib
import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)


def _load_compiled():
    try:
        return importlib.import_module("besovcap._kernels")
    except ImportError:
        return None


_compiled = None if os.environ.get("BESOVCAP_PURE") else _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
if _compiled is None:
    log.debug("compiled kernels unavailable; using numpy fallback")


def backend_module(name=None):
    """Return the kernel module for ``name`` ("cython", "python") or the active one."""
    name = name or BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        mod = _compiled or _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    out = ["python"]
    if (_compiled or _load_compiled()) is not None:
        out.insert(0, "cython")
    return out


_active = backend_module()


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a):
    return np.ascontiguousarray(a, dtype=np.intp)


def ball_mass_matrix(D, w):
    return _active.ball_mass_matrix(_f(D), _f(w))


def besov_weights(D, M, w, s):
    return _active.besov_weights(_f(D), _f(M), _f(w), float(s))


def pair_energy(W, u, p):
    return _active.pair_energy(_f(W), _f(u), float(p))


def pair_energy_grad(W, u, p):
    return _active.pair_energy_grad(_f(W), _f(u), float(p))


def edge_energy_grad(ei, ej, c, u, p):
    return _active.edge_energy_grad(_i(ei), _i(ej), _f(c), _f(u), float(p))


def weak_qs_exhaustive(DZ, DW, rho):
    return _active.weak_qs_exhaustive(_f(DZ), _f(DW), float(rho))


def weak_qs_triples(DZ, DW, triples, rho):
    return _active.weak_qs_triples(_f(DZ), _f(DW), _i(triples).reshape(-1, 3), float(rho))
