"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 800] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from besovcap import kernels
from besovcap.space import make_space


def cases(n, seed):
    rng = np.random.default_rng(seed)
    cloud = make_space("interval", int(np.ceil(np.log2(n))))
    D = cloud.distance_matrix()
    w = cloud.weights
    m = len(w)
    u = rng.uniform(size=m)
    small = np.ascontiguousarray(D[:150, :150])
    small_w = np.ascontiguousarray(make_space("snowflake", 8).distance_matrix()[:150, :150])
    triples = rng.integers(0, 150, size=(20000, 3))
    ei, ej = (np.ascontiguousarray(a, dtype=np.intp) for a in np.nonzero(np.triu(D < 4.0 / m, 1)))
    c = rng.uniform(size=len(ei))

    def prepare(mod):
        M = mod.ball_mass_matrix(D, w)
        W = mod.besov_weights(D, M, w, 1.0)
        return M, W

    return {
        "ball_mass_matrix": lambda mod, pre: mod.ball_mass_matrix(D, w),
        "besov_weights": lambda mod, pre: mod.besov_weights(D, pre[0], w, 1.0),
        "pair_energy": lambda mod, pre: mod.pair_energy(pre[1], u, 2.5),
        "pair_energy_grad": lambda mod, pre: mod.pair_energy_grad(pre[1], u, 2.5),
        "edge_energy_grad": lambda mod, pre: mod.edge_energy_grad(ei, ej, c, u, 2.5),
        "weak_qs_exhaustive": lambda mod, pre: mod.weak_qs_exhaustive(small, small_w, np.inf),
        "weak_qs_triples": lambda mod, pre: mod.weak_qs_triples(small, small_w, triples, np.inf),
    }, prepare, m


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=800, help="approximate sample size")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    table, prepare, m = cases(args.n, args.seed)
    backends = kernels.available_backends()
    mods = {b: kernels.backend_module(b) for b in backends}
    pre = {b: prepare(mods[b]) for b in backends}
    print(f"n = {m} points, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for name, fn in table.items():
        times = {}
        for b in backends:
            times[b] = min(timeit.repeat(lambda: fn(mods[b], pre[b]), number=1, repeat=args.repeat))
        line = f"{name:<20}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
