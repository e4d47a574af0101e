"""Command-line front end.

Every run writes its artifacts plus ``manifest.json`` into ``--out``.
Settings resolve as defaults, then ``--config`` JSON, then ``BESOVCAP_*``
environment variables, then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .caplab import (
    annulus_experiment,
    annulus_grid,
    case_tag,
    loewner_experiment,
    quarter_segments,
)
from .energy import Condenser, besov_capacity, boundary_condenser, newton_capacity
from .errors import InvariantError, ResourceLimitError
from .filling import build_graph, build_nets
from .qs import (
    SampledMap,
    besov_morphism_norm,
    default_family,
    detector_configs,
    identity_map,
    kink_inverse_map,
    qs_capacity_detector,
    qs_verdict,
    read_pairing_csv,
    snowflake_identity_map,
    weak_qs_constant,
)
from .space import ANALYTIC_Q, PointCloud, make_space
from .uniformize import UniformParams, codim_exponent_fit, uniformize

log = logging.getLogger("besovcap")

COMMANDS = ("gen", "fill", "cap", "scaling", "loewner", "qs")
SPACES = ("interval", "cantor", "carpet", "gasket", "snowflake")

DEFAULTS = {
    "space": "interval",
    "level": 6,
    "gamma": 0.5,
    "alpha": 2.0,
    "tau": 1.5,
    "depth": None,
    "p": 2.0,
    "theta": 0.5,
    "seed": 0,
    "tol": None,
    "out": "out",
    "workers": None,
    "E": None,
    "F": None,
    "arena": "cloud",
    "case": "auto",
    "x0": None,
    "s": 0.5,
    "map": "kink",
    "levels": "4,5,6",
    "C_L": 1.2,
    "domain": None,
    "codomain": None,
    "pairing": None,
}

_TYPES = {
    "level": int, "gamma": float, "alpha": float, "tau": float, "depth": int,
    "p": float, "theta": float, "seed": int, "tol": float, "workers": int,
    "x0": int, "s": float, "C_L": float,
}


class ConfigError(ValueError):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="besovcap", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with settings")
        p.add_argument("--space", choices=SPACES)
        p.add_argument("--level", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--depth", type=int)
        p.add_argument("--p", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--out")
        p.add_argument("--workers", type=int)
        if name == "cap":
            p.add_argument("--E", help="index list such as 0:10,12")
            p.add_argument("--F", help="index list such as 40:65")
            p.add_argument("--arena", choices=("cloud", "graph", "both"))
        if name == "scaling":
            p.add_argument("--case", choices=("auto", "1", "2", "3"))
            p.add_argument("--x0", type=int)
        if name == "loewner":
            p.add_argument("--s", type=float)
        if name == "qs":
            p.add_argument("--map", choices=("identity", "snowflake", "kink"))
            p.add_argument("--levels", help="comma-separated refinement levels")
            p.add_argument("--C-L", dest="C_L", type=float)
            p.add_argument("--domain", help="domain cloud JSON (with --pairing)")
            p.add_argument("--codomain", help="codomain cloud JSON (with --pairing)")
            p.add_argument("--pairing", help="CSV with z_index,w_index")
    return parser


def resolve_config(args, environ=None):
    """Merge defaults, config file, ``BESOVCAP_*`` variables and explicit flags."""
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        env = environ.get("BESOVCAP_" + key.upper())
        if env is not None:
            cfg[key] = _TYPES.get(key, str)(env)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg["space"] not in SPACES:
        raise ConfigError(f"space must be one of {SPACES}")
    if not 0 < cfg["theta"] < 1:
        raise ConfigError("theta must lie in (0, 1)")
    if not cfg["p"] > 1:
        raise ConfigError("p must exceed 1")
    if not cfg["alpha"] > 1:
        raise ConfigError("alpha must exceed 1")
    if not cfg["tau"] > 1:
        raise ConfigError("tau must exceed 1")
    if not cfg["level"] >= 1:
        raise ConfigError("level must be >= 1")
    if cfg["depth"] is not None and cfg["depth"] < 1:
        raise ConfigError("depth must be >= 1")
    if not 0 < cfg["gamma"] <= 1:
        raise ConfigError("gamma must lie in (0, 1]")
    if cfg["tol"] is not None and not cfg["tol"] > 0:
        raise ConfigError("tol must be positive")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    beta = derived_beta(cfg)
    if not beta > 0:
        raise ConfigError("derived beta = log(alpha) p (1 - theta) must be positive")


def derived_beta(cfg):
    return math.log(cfg["alpha"]) * cfg["p"] * (1 - cfg["theta"])


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, data):
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def parse_index_list(text, n):
    """``"0:10,12,20:25"`` to a sorted index array (slices are half-open)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b)))
        else:
            out.append(int(part))
    idx = np.unique(np.array(out, dtype=np.intp))
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise ConfigError(f"index out of range for a cloud of {n} points")
    return idx


def space_Q(cfg):
    if cfg["space"] == "snowflake":
        return 1.0 / cfg["gamma"]
    return ANALYTIC_Q[cfg["space"]]


def _cloud(cfg):
    return make_space(cfg["space"], cfg["level"], cfg["gamma"])


def _filling(cfg, cloud):
    nets = build_nets(cloud, cfg["alpha"], cfg["depth"])
    graph = build_graph(nets, cfg["tau"])
    params = UniformParams.from_theta(cfg["alpha"], cfg["p"], cfg["theta"])
    return nets, graph, uniformize(graph, params)


# -- commands --------------------------------------------------------------

def cmd_gen(cfg, out, manifest):
    cloud = _cloud(cfg)
    write_json(out / "cloud.json", cloud.to_dict())
    (out / "cloud.csv").write_text(cloud.to_csv())
    manifest["results"] = {"n_points": cloud.n, "diam": cloud.diam}
    return ["cloud.json", "cloud.csv"], 0


def cmd_fill(cfg, out, manifest):
    cloud = _cloud(cfg)
    nets, graph, ug = _filling(cfg, cloud)
    fit = codim_exponent_fit(ug, seed=cfg["seed"])
    bundle = graph.to_dict()
    bundle["mu_plus"] = ug.mu_plus
    bundle["mu_beta"] = ug.mu_beta
    bundle["ell_eps"] = ug.edge_lengths
    write_json(out / "graph.json", bundle)
    (out / "vertices.csv").write_text(ug.vertices_csv())
    (out / "edges.csv").write_text(ug.edges_csv())
    write_json(out / "codim.json", fit.to_dict())
    manifest["results"] = {"n_vertices": graph.n_vertices, "n_edges": len(graph.edges),
                           "depth": graph.depth, "net_status": nets.status,
                           "codim_slope": fit.slope, "codim_target": ug.params.beta / ug.params.epsilon}
    return ["graph.json", "vertices.csv", "edges.csv", "codim.json"], 0


def cmd_cap(cfg, out, manifest):
    cloud = _cloud(cfg)
    if cfg["E"] is None or cfg["F"] is None:
        raise ConfigError("cap needs --E and --F")
    cond = Condenser(parse_index_list(cfg["E"], cloud.n), parse_index_list(cfg["F"], cloud.n))
    reports = {}
    files = []
    if cfg["arena"] in ("cloud", "both"):
        rep = besov_capacity(cloud, cond, cfg["theta"], cfg["p"], tol=cfg["tol"], seed=cfg["seed"])
        reports["besov"] = rep
        (out / "minimizer.csv").write_text(rep.minimizer_csv())
        files.append("minimizer.csv")
    if cfg["arena"] in ("graph", "both"):
        _, _, ug = _filling(cfg, cloud)
        rep = newton_capacity(ug, boundary_condenser(ug, cond), cfg["p"], tol=cfg["tol"],
                              seed=cfg["seed"])
        reports["newton"] = rep
        (out / "minimizer_graph.csv").write_text(rep.minimizer_csv())
        files.append("minimizer_graph.csv")
    data = {k: r.to_dict() for k, r in reports.items()}
    if len(reports) == 2:
        data["ratio_besov_over_newton"] = reports["besov"].value / reports["newton"].value
    write_json(out / "cap.json", data)
    manifest["results"] = {k: r.value for k, r in reports.items()}
    status = 0 if all(r.success for r in reports.values()) else 1
    return ["cap.json", *files], status


def cmd_scaling(cfg, out, manifest):
    cloud = _cloud(cfg)
    Q = space_Q(cfg)
    tag = case_tag(cfg["p"], cfg["theta"], Q)
    if cfg["case"] != "auto" and int(cfg["case"]) != tag:
        raise ConfigError(f"case {cfg['case']} requested but p*theta - Q selects case {tag}")
    x0 = cloud.n // 2 if cfg["x0"] is None else cfg["x0"]
    grid = annulus_grid(tag, cloud, cfg["alpha"], cfg["tau"])
    rep = annulus_experiment(cloud, x0, grid, cfg["p"], cfg["theta"], Q, tol=cfg["tol"],
                             workers=cfg["workers"])
    (out / "scaling.csv").write_text(rep.to_csv())
    summary = rep.to_dict()
    summary["Q"] = Q
    summary["x0"] = x0
    write_json(out / "scaling.json", summary)
    manifest["results"] = summary
    status = 0 if all(r.status == "ok" for r in rep.rows) else 1
    return ["scaling.csv", "scaling.json"], status


def cmd_loewner(cfg, out, manifest):
    cloud = _cloud(cfg)
    if cloud.coords.shape[1] != 1 or cloud.metric_kind != "euclidean":
        raise ConfigError("loewner runs on the interval (quarter segments need a line)")
    Q = space_Q(cfg)
    x0 = cloud.n // 2
    configs = []
    for R in (0.4, 0.2, 0.1):
        E, F = quarter_segments(cloud, x0, R)
        configs.append((E, F, R))
    rep = loewner_experiment(cloud, configs, cfg["s"], cfg["theta"], cfg["p"], Q,
                             tol=cfg["tol"], workers=cfg["workers"])
    (out / "loewner.csv").write_text(rep.to_csv())
    write_json(out / "loewner.json", rep.to_dict())
    manifest["results"] = rep.to_dict()
    status = 0 if all(r.status == "ok" for r in rep.rows) else 1
    return ["loewner.csv", "loewner.json"], status


def _qs_maps(cfg):
    if cfg["pairing"]:
        if not (cfg["domain"] and cfg["codomain"]):
            raise ConfigError("--pairing needs --domain and --codomain")
        Z = PointCloud.from_dict(json.loads(Path(cfg["domain"]).read_text()))
        W = PointCloud.from_dict(json.loads(Path(cfg["codomain"]).read_text()))
        pairing = read_pairing_csv(Path(cfg["pairing"]).read_text(), Z.n)
        return [("input", SampledMap(Z, W, pairing))]
    levels = [int(v) for v in str(cfg["levels"]).split(",") if v.strip()]
    makers = {
        "identity": lambda k: identity_map(make_space("interval", k)),
        "snowflake": lambda k: snowflake_identity_map(k, cfg["gamma"]),
        "kink": kink_inverse_map,
    }
    return [(k, makers[cfg["map"]](k)) for k in levels]


def cmd_qs(cfg, out, manifest):
    p, theta = cfg["p"], cfg["theta"]
    H, morph, maxima, rows = {}, {}, {}, []
    for key, m in _qs_maps(cfg):
        if m.domain.n <= 200:
            res = weak_qs_constant(m)
        else:
            res = weak_qs_constant(m, triple_budget=200_000, seed=cfg["seed"])
        H[str(key)] = res.H_hat
        fam = default_family(m.codomain, seed=cfg["seed"])
        T = besov_morphism_norm(m, fam, theta, theta, p).sup
        morph[str(key)] = T
        det = qs_capacity_detector(m, theta, theta, p, detector_configs(m, 12, cfg["seed"]),
                                   C_L=cfg["C_L"], Q_Z=None, T=T, tol=cfg["tol"])
        maxima[str(key)] = det.max_implied
        for r in det.rows:
            rows.append({"level": key, "x": r.x, "y": r.y, "z": r.z, "L": r.L, "l": r.l,
                         "cap_W": r.cap_W, "cap_Z": r.cap_Z, "implied": r.implied,
                         "status": r.status})
    verdict = {
        "H_hat": H,
        "morphism_sup": max(morph.values()),
        "morphism_by_level": morph,
        "max_implied_distortion": maxima,
        "distortion_rows": rows,
        "verdict": qs_verdict(list(H.values())),
    }
    write_json(out / "verdict.json", verdict)
    manifest["results"] = {"H_hat": H, "verdict": verdict["verdict"]}
    return ["verdict.json"], 0


HANDLERS = {"gen": cmd_gen, "fill": cmd_fill, "cap": cmd_cap, "scaling": cmd_scaling,
            "loewner": cmd_loewner, "qs": cmd_qs}


def run(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    beta = derived_beta(cfg)
    eps = math.log(cfg["alpha"])
    manifest = {
        "command": cfg["command"],
        "config": {k: cfg[k] for k in sorted(cfg) if k not in ("workers", "out")},
        "derived": {
            "epsilon": eps,
            "beta": beta,
            "theta_relation_residual": abs(cfg["theta"] - (1 - beta / (eps * cfg["p"]))),
        },
        "backend": kernels.BACKEND,
    }
    try:
        files, status = HANDLERS[cfg["command"]](cfg, out, manifest)
    except (ConfigError, ValueError, IndexError) as exc:
        manifest["status"] = f"error: {exc}"
        write_json(out / "manifest.json", manifest)
        print(f"besovcap: error: {exc}", file=sys.stderr)
        return 2
    except (ResourceLimitError, InvariantError) as exc:
        manifest["status"] = f"failure: {exc}"
        write_json(out / "manifest.json", manifest)
        print(f"besovcap: failure: {exc}", file=sys.stderr)
        return 1
    manifest["outputs"] = files
    manifest["status"] = "ok" if status == 0 else "partial"
    write_json(out / "manifest.json", manifest)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"besovcap: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
