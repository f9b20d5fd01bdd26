"""Experiment harness: build systems, estimate spectra, sweep, emit CSV.

Subcommands
-----------
build       assemble a system and write .mtx plus the (c, b) sidecar JSON
lecn        per-vertex tau CSV and the max-tau summary
cond        extremal eigenvalue estimates for one configuration
solve       one PCG solve against a seeded manufactured right-hand side
experiment  sweep a parameter list and emit one CSV row per point

Configuration comes from flags, or from a JSON file via --config with
flags taking precedence.  Identical configuration and seed produce
byte-identical output.  Module errors exit with code 1 and a JSON error
object on stderr; configuration schema violations exit with code 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import adaptive, krylov, lecn, ordering, precond, stencils, system
from .errors import ConfigError, MilugraphError

GRID_BUILDERS = ("gibou2d", "gibou3d", "ifd11", "ifd22", "hifd22")
TREE_BUILDERS = ("quadtree_fvm", "octree_fvm")
BUILDERS = GRID_BUILDERS + TREE_BUILDERS
ORDERINGS = ("lex", "sector", "tree")
PRECONDS = ("none", "jacobi", "ilu0", "milu")
OUTDIR_ENV = "MILUGRAPH_OUTDIR"

_CONFIG_KEYS = {
    "builder", "ordering", "precond", "h", "n", "depths", "domain", "sigma",
    "seed", "max_depth", "refine_prob", "tol_spectral", "tol_pcg",
    "max_power_iter", "skip_kappa_a", "skip_pcg", "workers", "out",
}


@dataclass
class ExperimentConfig:
    """Validated configuration for one command invocation."""

    builder: str
    ordering: str
    precond: list
    sweep: list          # h Fractions, interior sizes, or tree depths
    domain: str = "box"
    sigma: str = "one"
    seed: int = 0
    max_depth: int = 3
    refine_prob: float = 0.5
    tol_spectral: float = 1e-6
    tol_pcg: float = 1e-14
    max_power_iter: int = 20000
    skip_kappa_a: bool = False
    skip_pcg: bool = False
    workers: int = 1
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.builder not in BUILDERS:
            raise ConfigError(f"unknown builder {self.builder!r}", builders=BUILDERS)
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"unknown ordering {self.ordering!r}")
        is_tree = self.builder in TREE_BUILDERS
        if is_tree and self.ordering != "tree":
            raise ConfigError("tree builders require the tree ordering")
        if not is_tree and self.ordering == "tree":
            raise ConfigError("tree ordering requires a tree builder")
        for p in self.precond:
            if p not in PRECONDS:
                raise ConfigError(f"unknown preconditioner {p!r}")
        if not self.sweep:
            raise ConfigError("sweep parameter list is empty")
        if not 0.0 <= self.refine_prob <= 1.0:
            raise ConfigError("refine_prob must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self


def parse_rational(text) -> Fraction:
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad rational value {text!r}") from exc


def parse_sweep_list(text: str, kind: str) -> list:
    """Parse '1/8,1/16', '16,32,64', or '3..7' sweep notations."""
    text = str(text).strip()
    if kind in ("n", "depths") and ".." in text:
        lo, _, hi = text.partition("..")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}") from exc
    items = [t for t in text.split(",") if t.strip()]
    if kind == "h":
        return [parse_rational(t) for t in items]
    try:
        return [int(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


# -- problem construction -------------------------------------------------------

@dataclass
class BuiltProblem:
    system: object
    coords: object      # integer grid coords for grid builders, else None
    tree: object        # AdaptiveTree for tree builders, else None
    dims: tuple | None  # interior extents for sector ordering
    h_bar: float
    param_label: str
    theoretical_kind: str | None  # 'lex'/'sector' bound applies, else None
    d: int


def build_problem(cfg: ExperimentConfig, param) -> BuiltProblem:
    b = cfg.builder
    if b in ("gibou2d", "gibou3d"):
        d = 2 if b == "gibou2d" else 3
        frac = parse_rational(param)
        spec = stencils.unit_box_spec(d, frac)
        if cfg.domain != "box":
            dom = stencils.domain_from_name(cfg.domain, d)
            spec = stencils.UniformGridSpec(spec.extents, spec.h, dom)
        sys_, coords, _binfo = stencils.gibou_matrix(spec)
        dims = tuple(e - 2 for e in spec.extents) if cfg.domain == "box" else None
        kind = cfg.ordering if cfg.domain == "box" and cfg.ordering in ("lex", "sector") else None
        return BuiltProblem(sys_, coords, None, dims, spec.h, str(frac), kind, d)
    if b in ("ifd11", "ifd22", "hifd22"):
        n_interior = int(param)
        h = Fraction(1, n_interior + 1)
        spec = stencils.unit_box_spec(2, h)
        sys_, coords = stencils.ifd_matrix(stencils.SCHEMES[b], spec)
        return BuiltProblem(sys_, coords, None, (n_interior, n_interior),
                            spec.h, str(n_interior), None, 2)
    # tree builders: seeded random phase up to min(max_depth, depth),
    # then uniform refinement to the requested total depth
    d = 2 if b == "quadtree_fvm" else 3
    depth = int(param)
    if depth < 0:
        raise ConfigError(f"depth {depth} is negative")
    phase = min(cfg.max_depth, depth)
    tree = adaptive.random_tree((2,) * d, phase, cfg.refine_prob,
                                cfg.seed, cell_size=0.5)
    for _ in range(depth - phase):
        tree.uniform_refine()
    sys_ = adaptive.fvm_matrix(tree, adaptive.sigma_field(cfg.sigma))
    return BuiltProblem(sys_, None, tree, None, adaptive.smallest_cell(tree),
                        str(depth), None, d)


def make_ordering(cfg: ExperimentConfig, prob: BuiltProblem):
    if cfg.ordering == "tree":
        return adaptive.tree_order(prob.tree)
    if cfg.ordering == "lex":
        return ordering.lexicographic_order(prob.coords)
    if prob.dims is None:
        raise ConfigError("sector ordering needs a full rectangular grid")
    coords = np.asarray(prob.coords) - np.min(prob.coords, axis=0)
    return ordering.sector_order(coords, prob.dims)


def make_preconditioner(name: str, sys_, ordv):
    if name == "none":
        return precond.identity_preconditioner(sys_)
    if name == "jacobi":
        return precond.jacobi_factor(sys_)
    if name == "ilu0":
        return precond.ilu0_factor(sys_, ordv)
    if name == "milu":
        return precond.milu_preconditioner(sys_, ordv)
    raise ConfigError(f"unknown preconditioner {name!r}")


def manufactured_rhs(sys_, seed: int):
    rng = np.random.default_rng(seed)
    x_star = rng.uniform(-1.0, 1.0, sys_.n)
    return sys_.matvec(x_star)


# -- experiment sweep -------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def experiment_point(cfg: ExperimentConfig, param) -> dict:
    """Measure one sweep point; returns the CSV row as a dict."""
    prob = build_problem(cfg, param)
    sys_ = prob.system
    ordv = make_ordering(cfg, prob)
    row = {
        "param": prob.param_label,
        "n_vertices": sys_.n,
        "h_bar": prob.h_bar,
    }

    if cfg.skip_kappa_a:
        row["kappa_A"] = None
    else:
        est_a = krylov.condition_number(
            sys_, None, tol=cfg.tol_spectral, max_iter=cfg.max_power_iter
        )
        row["kappa_A"] = est_a.kappa

    max_tau = None
    milu_fact = None
    if "milu" in cfg.precond or prob.theoretical_kind is not None:
        milu_fact = precond.milu_factor(sys_, ordv)
        max_tau = lecn.tau_direct(sys_, milu_fact).max_tau

    preconds = {}
    for name in cfg.precond:
        if name == "milu":
            preconds[name] = precond.MiluPreconditioner(milu_fact, sys_)
        else:
            preconds[name] = make_preconditioner(name, sys_, ordv)

    for name in cfg.precond:
        est = krylov.condition_number(
            sys_, preconds[name], tol=cfg.tol_spectral, max_iter=cfg.max_power_iter
        )
        row[f"kappa_{name}"] = est.kappa
        if name == "milu" and max_tau is not None:
            if est.kappa > max_tau * (1.0 + 1e-8):
                raise MilugraphError(
                    f"estimated kappa {est.kappa} exceeds max tau {max_tau}",
                    param=str(param),
                )

    row["max_tau"] = max_tau
    bound = None
    if prob.theoretical_kind is not None:
        bound = lecn.theoretical_bound(prob.theoretical_kind, prob.d, 1.0,
                                       float(prob.h_bar))
    row["theoretical_bound"] = bound

    if not cfg.skip_pcg:
        rhs = manufactured_rhs(sys_, cfg.seed + 1)
        for name in cfg.precond:
            rep = krylov.pcg(sys_, rhs, preconds[name], tol=cfg.tol_pcg)
            row[f"iters_{name}"] = rep.iterations
    else:
        for name in cfg.precond:
            row[f"iters_{name}"] = None
    return row


def experiment_rows(cfg: ExperimentConfig):
    """Run the sweep; rows come back in sweep order regardless of workers."""
    header = ["param", "n_vertices", "h_bar", "kappa_A"]
    header += [f"kappa_{p}" for p in cfg.precond]
    header += ["max_tau", "theoretical_bound"]
    header += [f"iters_{p}" for p in cfg.precond]

    if cfg.workers == 1:
        rows = [experiment_point(cfg, p) for p in cfg.sweep]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda p: experiment_point(cfg, p), cfg.sweep))
    return header, rows


def write_csv(header, rows, stream) -> None:
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(_fmt(row.get(col)) for col in header) + "\n")


# -- command implementations --------------------------------------------------------

def _resolve_out(path: str | None, default_name: str) -> str:
    base = os.environ.get(OUTDIR_ENV, "")
    if path is None:
        path = default_name
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def cmd_build(cfg: ExperimentConfig) -> int:
    prob = build_problem(cfg, cfg.sweep[0])
    out = _resolve_out(cfg.out, "system")
    system.write_matrix_market(prob.system, out + ".mtx")
    system.write_json(prob.system, out + ".json")
    if prob.tree is not None:
        prob.tree.to_json(out + ".tree.json")
    print(json.dumps({
        "n": prob.system.n,
        "edges": prob.system.n_edges,
        "h_bar": prob.h_bar,
        "files": [out + ".mtx", out + ".json"],
    }))
    return 0


def cmd_lecn(cfg: ExperimentConfig) -> int:
    prob = build_problem(cfg, cfg.sweep[0])
    ordv = make_ordering(cfg, prob)
    fact = precond.milu_factor(prob.system, ordv)
    report = lecn.tau_direct(prob.system, fact)
    out = _resolve_out(cfg.out, "tau.csv")
    lecn.write_tau_csv(report, out, coords=prob.coords)
    summary = {
        "max_tau": None if np.isinf(report.max_tau) else report.max_tau,
        "argmax": report.argmax,
        "num_infinite": report.num_infinite,
        "out": out,
    }
    if prob.theoretical_kind is not None:
        summary["theoretical_bound"] = lecn.theoretical_bound(
            prob.theoretical_kind, prob.d, 1.0, float(prob.h_bar)
        )
    print(json.dumps(summary))
    return 0


def cmd_cond(cfg: ExperimentConfig) -> int:
    prob = build_problem(cfg, cfg.sweep[0])
    ordv = make_ordering(cfg, prob)
    results = {}
    for name in cfg.precond:
        p = make_preconditioner(name, prob.system, ordv)
        est = krylov.condition_number(
            prob.system, p, tol=cfg.tol_spectral, max_iter=cfg.max_power_iter
        )
        results[name] = est.to_json_obj()
    print(json.dumps({"n": prob.system.n, "h_bar": prob.h_bar, "estimates": results}))
    return 0


def cmd_solve(cfg: ExperimentConfig) -> int:
    prob = build_problem(cfg, cfg.sweep[0])
    ordv = make_ordering(cfg, prob)
    rhs = manufactured_rhs(prob.system, cfg.seed + 1)
    results = {}
    for name in cfg.precond:
        p = make_preconditioner(name, prob.system, ordv)
        rep = krylov.pcg(prob.system, rhs, p, tol=cfg.tol_pcg)
        results[name] = rep.to_json_obj()
        if cfg.out:
            rep.residuals_to_csv(_resolve_out(cfg.out, "residuals.csv")
                                 + f".{name}.csv")
    print(json.dumps({"n": prob.system.n, "solves": results}))
    return 0


def cmd_experiment(cfg: ExperimentConfig) -> int:
    header, rows = experiment_rows(cfg)
    if cfg.out:
        out = _resolve_out(cfg.out, "sweep.csv")
        with open(out, "w", encoding="ascii", newline="\n") as f:
            write_csv(header, rows, f)
    else:
        write_csv(header, rows, sys.stdout)
    return 0


COMMANDS = {
    "build": cmd_build,
    "lecn": cmd_lecn,
    "cond": cmd_cond,
    "solve": cmd_solve,
    "experiment": cmd_experiment,
}


# -- argument plumbing ----------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override")
    p.add_argument("--builder", choices=BUILDERS)
    p.add_argument("--ordering", choices=ORDERINGS)
    p.add_argument("--precond", help="comma list from none,jacobi,ilu0,milu")
    p.add_argument("--h", help="grid spacings, e.g. 1/8,1/16")
    p.add_argument("--n", help="interior grid sizes, e.g. 16,32,64")
    p.add_argument("--depths", help="tree depths, e.g. 3..7 or 3,5,7")
    p.add_argument("--domain", help="box, disk(cx,cy,r), sphere(cx,cy,cz,r)")
    p.add_argument("--sigma", help="coefficient field: one, example1, example2")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--refine-prob", type=float, dest="refine_prob")
    p.add_argument("--tol-spectral", type=float, dest="tol_spectral")
    p.add_argument("--tol-pcg", type=float, dest="tol_pcg")
    p.add_argument("--max-power-iter", type=int, dest="max_power_iter")
    p.add_argument("--skip-kappa-a", action="store_true", default=None,
                   dest="skip_kappa_a")
    p.add_argument("--skip-pcg", action="store_true", default=None, dest="skip_pcg")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                file_cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        unknown = set(file_cfg) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")

    def pick(key, default=None):
        flag = getattr(args, key, None)
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    builder = pick("builder")
    if builder is None:
        raise ConfigError("builder is required")
    is_tree = builder in TREE_BUILDERS

    sweep_raw = None
    kind = None
    for key in ("h", "n", "depths"):
        val = pick(key)
        if val is not None:
            if sweep_raw is not None:
                raise ConfigError("give exactly one of --h, --n, --depths")
            sweep_raw, kind = val, key
    if sweep_raw is None:
        raise ConfigError("a sweep parameter (--h, --n, or --depths) is required")
    expected = "depths" if is_tree else ("h" if builder.startswith("gibou") else "n")
    if kind != expected:
        raise ConfigError(f"builder {builder} takes --{expected}, not --{kind}")
    if isinstance(sweep_raw, (list, tuple)):
        sweep = ([parse_rational(x) for x in sweep_raw] if kind == "h"
                 else [int(x) for x in sweep_raw])
    else:
        sweep = parse_sweep_list(sweep_raw, kind)

    precond_val = pick("precond", "milu")
    if isinstance(precond_val, str):
        precond_list = [t.strip() for t in precond_val.split(",") if t.strip()]
    else:
        precond_list = list(precond_val)

    cfg = ExperimentConfig(
        builder=builder,
        ordering=pick("ordering", "tree" if is_tree else "lex"),
        precond=precond_list,
        sweep=sweep,
        domain=pick("domain", "box"),
        sigma=pick("sigma", "one"),
        seed=int(pick("seed", 0)),
        max_depth=int(pick("max_depth", 3)),
        refine_prob=float(pick("refine_prob", 0.5)),
        tol_spectral=float(pick("tol_spectral", 1e-6)),
        tol_pcg=float(pick("tol_pcg", 1e-14)),
        max_power_iter=int(pick("max_power_iter", 20000)),
        skip_kappa_a=bool(pick("skip_kappa_a", False)),
        skip_pcg=bool(pick("skip_pcg", False)),
        workers=int(pick("workers", 1)),
        out=pick("out"),
    )
    return cfg.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="milugraph",
        description="MILU preconditioning experiments on graphs and grids",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subs.add_parser(name)
        _add_common(sub)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        sys.stderr.write(json.dumps(exc.to_json_obj()) + "\n")
        return 2
    except MilugraphError as exc:
        sys.stderr.write(json.dumps(exc.to_json_obj()) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
