"""Command-line entry point: ``sheaflab <subcommand> [options]``.

Every subcommand writes ``<name>.json`` and ``<name>.csv`` into ``--out`` and
prints a summary. Exit codes: 0 success, 1 failed validation or bad input
data, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as sio
from .complexes import cellular_complex, dirichlet_energy, is_cell_poset, roos_complex
from .errors import SheafLabError
from .parallel import pmap
from .generators import (
    cone,
    full_simplex,
    random_bipartite_graph,
    random_connected_graph,
    random_labels,
    triangle_strip,
)
from .poset import graph_poset, simplicial_from_facets
from .separation import (
    ClassTask,
    dvb_contractibility_check,
    higher_order_separation,
    run_hierarchy,
)
from .sheaf import Sheaf, constant_sheaf, validate_sheaf
from .spectral import betti, global_sections, harmonic_basis, heat_flow, hodge_decompose

log = logging.getLogger("sheaflab")


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict[str, Path] = field(default_factory=dict)
    seed: int | None = None
    tol: float | None = None
    out: Path = Path("sheaflab-out")
    format: str = "table"


def _config(args) -> RunConfig:
    inputs = {}
    for key in ("input", "sheaf", "x0"):
        v = getattr(args, key, None)
        if v is not None:
            inputs[key] = Path(v).resolve()
    return RunConfig(args.cmd, inputs, getattr(args, "seed", None), getattr(args, "tol", None), Path(args.out).resolve(), args.format)


# -- output -----------------------------------------------------------------


def _csv_text(rows: list[dict]) -> str:
    buf = _io.StringIO()
    if rows:
        cols = list(rows[0])
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _emit(cfg: RunConfig, name: str, doc: dict, rows: list[dict]) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    sio.save_results(doc, cfg.out / f"{name}.json")
    text = _csv_text(rows)
    (cfg.out / f"{name}.csv").write_text(text)
    if cfg.format == "json":
        sys.stdout.write(sio.dumps(sio.to_jsonable(doc)))
    elif cfg.format == "csv":
        sys.stdout.write(text)
    else:
        _table(rows)


def _table(rows: list[dict]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    fmt = lambda v: f"{v:.6g}" if isinstance(v, float) else str(v)
    cells = [[fmt(r[c]) for c in cols] for r in rows]
    width = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, width)))
    for row in cells:
        print("  ".join(v.ljust(w) for v, w in zip(row, width)))


# -- inputs -----------------------------------------------------------------


def _load_sheaf(cfg: RunConfig, args) -> Sheaf:
    if "sheaf" in cfg.inputs:
        return sio.load_sheaf(cfg.inputs["sheaf"])
    if "input" in cfg.inputs:
        return constant_sheaf(sio.load_complex(cfg.inputs["input"]), args.stalk_dim)
    raise _Usage("give --sheaf or --input")


class _Usage(Exception):
    pass


def _complexes(F: Sheaf) -> dict:
    out = {"roos": roos_complex(F.base, F)}
    if is_cell_poset(F.base):
        out["cellular"] = cellular_complex(F.base, F)
    return out


def _start(cx, k: int, cfg: RunConfig) -> np.ndarray:
    if "x0" in cfg.inputs:
        x, _ = sio.load_cochain(cfg.inputs["x0"])
        if x.shape != (cx.dim(k),):
            raise SheafLabError(f"cochain has {x.size} entries, expected {cx.dim(k)}")
        return x
    if cfg.seed is None:
        raise _Usage("give --seed or --x0")
    return np.random.default_rng(cfg.seed).standard_normal(cx.dim(k))


# -- subcommands ---------------------------------------------------------------


def cmd_validate(cfg: RunConfig, args) -> int:
    F = _load_sheaf(cfg, args)
    tol = cfg.tol if cfg.tol is not None else 1e-10
    rep = validate_sheaf(F, tol)
    rows = [{"check": "functoriality", "flavor": "-", "value": max((f["max_abs_diff"] for f in rep.functoriality), default=0.0), "ok": rep.ok}]
    ok = rep.ok
    for flavor, cx in _complexes(F).items():
        worst = 0.0
        for k in range(cx.top):
            a, b = cx.coboundary(k + 1), cx.coboundary(k)
            if a.size and b.size:
                worst = max(worst, float(np.abs(a @ b).max()))
        rows.append({"check": "d_squared", "flavor": flavor, "value": worst, "ok": worst <= tol})
        ok = ok and worst <= tol
    _emit(cfg, "validate", {"ok": ok, "summary": rep.summary(), "checks": rows}, rows)
    return 0 if ok else 1


def cmd_cohomology(cfg: RunConfig, args) -> int:
    F = _load_sheaf(cfg, args)
    cxs = _complexes(F)
    top = max(cx.top for cx in cxs.values())
    rows = []
    for k in range(top + 1):
        row = {"grading": k}
        for flavor in ("roos", "cellular"):
            cx = cxs.get(flavor)
            row[flavor] = betti(cx, k, cfg.tol) if cx is not None and k <= cx.top else ""
        rows.append(row)
    basis, _ = global_sections(F.base, F)
    doc = {"betti": rows, "global_sections": int(basis.shape[1])}
    _emit(cfg, "cohomology", doc, rows)
    return 0


def cmd_diffuse(cfg: RunConfig, args) -> int:
    F = _load_sheaf(cfg, args)
    cx = _complexes(F)[args.flavor]
    k = args.grading
    x0 = _start(cx, k, cfg)
    if args.schedule == "exact":
        tr = heat_flow(cx, k, x0, "exact", times=args.times, tol=cfg.tol)
    else:
        tr = heat_flow(cx, k, x0, "euler", eta=args.eta, steps=args.steps, record_every=args.record_every, tol=cfg.tol)
    rows = []
    for t, x, e in zip(tr.times, tr.states, tr.energies):
        en = dirichlet_energy(cx, k, x)
        rows.append({"time": float(t), "energy": float(e), "energy_down": en.down, "energy_up": en.up,
                     "distance_to_limit": float(np.linalg.norm(x - tr.limit))})
    doc = {"grading": k, "schedule": args.schedule, "eta": tr.eta, "limit": tr.limit, "trace": rows}
    _emit(cfg, "diffuse", doc, rows)
    return 0


def cmd_hodge(cfg: RunConfig, args) -> int:
    F = _load_sheaf(cfg, args)
    cx = _complexes(F)[args.flavor]
    k = args.grading
    x = _start(cx, k, cfg)
    rep = hodge_decompose(cx, k, x, cfg.tol)
    H = harmonic_basis(cx, k, cfg.tol)
    rows = [
        {"index": i, "x": float(x[i]), "harmonic": float(rep.harmonic[i]), "gradient": float(rep.gradient[i]), "curl": float(rep.curl[i])}
        for i in range(x.size)
    ]
    doc = {
        "grading": k,
        "betti": rep.betti,
        "norms": {n: float(np.linalg.norm(getattr(rep, n))) for n in ("harmonic", "gradient", "curl")},
        "reconstruction_error": float(np.abs(rep.reconstruction - x).max()) if x.size else 0.0,
        "harmonic_basis": H,
    }
    _emit(cfg, "hodge", doc, rows)
    return 0


def _separate_trial(args, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    if args.experiment == "hierarchy":
        if args.bipartite:
            nodes, edges, A = random_bipartite_graph(rng, max(2, args.nodes // 2), args.p)
            labels = {str(v): (0 if v in A else 1) for v in nodes}
        else:
            nodes, edges = random_connected_graph(rng, args.nodes, args.p)
            labels = random_labels(rng, [str(v) for v in nodes], args.classes)
        G = graph_poset(nodes, edges)
        v = run_hierarchy(G, ClassTask(G, 0, labels), args.family, seed=seed)
    elif args.experiment == "higher-order":
        X = triangle_strip(args.width, args.height)
        labels = random_labels(rng, X.ids(args.grading), args.classes)
        v = higher_order_separation(X, args.grading, ClassTask(X.poset, args.grading, labels), seed=seed)
    else:
        X = {"simplex": full_simplex(5), "cone-triangle": cone(simplicial_from_facets([[0, 1], [1, 2], [0, 2]])),
             "cone-strip": cone(triangle_strip(2, 2))}[args.complex]
        r = dvb_contractibility_check(X, (0, 1, 2), 1, args.stalk_dim, args.group, seed=seed)
        return {"seed": seed, "separable": "", "degenerate": "", "ok": r.ok,
                "kernel_dims": json.dumps({str(k): v for k, v in r.kernel_dims.items()}, sort_keys=True)}
    return {"seed": seed, "separable": bool(v.separable), "degenerate": bool(v.degenerate),
            "certificate": v.certificate}


def _separate_job(job) -> dict:
    return _separate_trial(*job)


def cmd_separate(cfg: RunConfig, args) -> int:
    seeds = [cfg.seed + i for i in range(args.trials)]
    rows = pmap(_separate_job, [(args, s) for s in seeds])
    rate = np.mean([r["separable"] for r in rows]) if args.experiment != "dvb" else np.mean([r["ok"] for r in rows])
    doc = {"experiment": args.experiment, "rate": float(rate), "trials": rows}
    _emit(cfg, "separate", doc, rows)
    return 0


def _grid_from(params: dict):
    from .trajectory import gen_punctured_grid

    return gen_punctured_grid(int(params.get("grid_size", 12)), float(params.get("hole_radius", 1.5)))


def cmd_gen_traj(cfg: RunConfig, args) -> int:
    from .trajectory import gen_punctured_grid, gen_trajectories

    grid = gen_punctured_grid(args.grid_size, args.hole_radius)
    data = gen_trajectories(grid, args.count, args.length, args.p_curl, cfg.seed)
    data.params.update(grid_size=args.grid_size, hole_radius=args.hole_radius)
    cfg.out.mkdir(parents=True, exist_ok=True)
    sio.save_complex(grid.complex, cfg.out / "grid.json")
    sio.save_dataset(data, cfg.out / "trajectories.jsonl")
    rows = [{"region": r, "count": sum(t.region == r for t in data.trajectories)} for r in ("harmonic", "curl")]
    _emit(cfg, "gen-traj", {"params": data.params}, rows)
    return 0


def _nsd_config(args):
    from .trajectory import NsdConfig

    return NsdConfig(hidden=args.hidden, layers=args.layers, epochs=args.epochs, lr=args.lr)


def cmd_train_traj(cfg: RunConfig, args) -> int:
    from .trajectory import restriction_magnitudes, run_method

    data = sio.load_dataset(cfg.inputs["input"])
    grid = _grid_from(data.params)
    res, model = run_method(args.method, grid, data, cfg.seed, _nsd_config(args))
    cfg.out.mkdir(parents=True, exist_ok=True)
    sio.save_checkpoint(model.params, cfg.out / "model.bin", {"method": args.method, "seed": cfg.seed})
    doc = {"method": args.method, "seed": cfg.seed, "accuracy": res.accuracy, "log": res.train_log}
    if args.method == "learned-NSD":
        mags = restriction_magnitudes(model, grid)
        doc["restriction_magnitudes"] = mags
        (cfg.out / "restrictions.csv").write_text(_csv_text(mags))
    rows = [{"epoch": e, "loss": l, "accuracy": a} for e, l, a in zip(*res.train_log.values())]
    _emit(cfg, "train-traj", doc, rows)
    return 0


def cmd_eval_traj(cfg: RunConfig, args) -> int:
    from .trajectory import evaluate

    data = sio.load_dataset(cfg.inputs["input"])
    grid = _grid_from(data.params)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    doc = evaluate(args.methods, grid, data, seeds, _nsd_config(args))
    _emit(cfg, "eval-traj", doc, doc["runs"])
    return 0


def cmd_energy_bound(cfg: RunConfig, args) -> int:
    from .nsd.energy import energy_bound_check

    rows = []
    for i in range(args.trials):
        rng = np.random.default_rng([cfg.seed, i])
        nodes, edges = random_connected_graph(rng, int(rng.integers(3, args.nodes + 1)), args.p)
        G = graph_poset(nodes, edges)
        res = {}
        for e in G.stratum(1):
            sg = rng.choice([-1.0, 1.0])
            for u in G.lower_covers(e):
                res[(u, e)] = np.array([[sg * rng.uniform(0.2, 3.0)]])
        F = Sheaf(G, {s: 1 for s in G.elements}, res)
        f_in, f_out = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        X = rng.standard_normal((len(G.stratum(0)), f_in))
        r = energy_bound_check(G, F, float(rng.standard_normal()), rng.standard_normal((f_in, f_out)), X, args.phi)
        rows.append({"trial": i, "lhs": r.lhs, "rhs": r.rhs, "lambda_star": r.lambda_star, "holds": r.holds})
    ok = all(r["holds"] for r in rows)
    _emit(cfg, "energy-bound", {"all_hold": ok, "trials": rows}, rows)
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sheaflab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("--out", default="sheaflab-out", help="output directory")
        sp.add_argument("--format", choices=("table", "json", "csv"), default="table", help="stdout summary format")
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, required=seed_required, default=None)

    def sheaf_inputs(sp):
        sp.add_argument("--input", help="complex file (constant sheaf is used)")
        sp.add_argument("--sheaf", help="sheaf file")
        sp.add_argument("--stalk-dim", type=int, default=1, help="stalk width of the constant sheaf for --input")

    sp = sub.add_parser("validate", help="functoriality and d∘d = 0")
    common(sp)
    sheaf_inputs(sp)

    sp = sub.add_parser("cohomology", help="Betti numbers per grading, both flavors")
    common(sp)
    sheaf_inputs(sp)

    for name, helptext in (("diffuse", "heat diffusion trace"), ("hodge", "Hodge decomposition report")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sheaf_inputs(sp)
        sp.add_argument("--grading", type=int, default=0)
        sp.add_argument("--flavor", choices=("roos", "cellular"), default="cellular")
        sp.add_argument("--x0", help="cochain file for the initial/input cochain (else random from --seed)")
        if name == "diffuse":
            sp.add_argument("--schedule", choices=("exact", "euler"), default="exact")
            sp.add_argument("--times", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0, 5.0, 10.0])
            sp.add_argument("--eta", type=float, default=None)
            sp.add_argument("--steps", type=int, default=1000)
            sp.add_argument("--record-every", type=int, default=10)

    sp = sub.add_parser("separate", help="separation experiments")
    common(sp, seed_required=True)
    sp.add_argument("--experiment", choices=("hierarchy", "higher-order", "dvb"), default="hierarchy")
    sp.add_argument("--family", choices=("unnormalized", "normalized-sym", "asym-positive", "lying-1d", "lying-ld"), default="lying-1d")
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--nodes", type=int, default=20)
    sp.add_argument("--classes", type=int, default=2)
    sp.add_argument("--p", type=float, default=0.15, help="extra-edge probability")
    sp.add_argument("--bipartite", action="store_true", help="label the two parts of a random bipartite graph")
    sp.add_argument("--grading", type=int, default=1)
    sp.add_argument("--width", type=int, default=5)
    sp.add_argument("--height", type=int, default=3)
    sp.add_argument("--complex", choices=("simplex", "cone-triangle", "cone-strip"), default="simplex")
    sp.add_argument("--group", choices=("orthogonal", "invertible"), default="orthogonal")
    sp.add_argument("--stalk-dim", type=int, default=2)

    sp = sub.add_parser("gen-traj", help="generate the trajectory dataset")
    common(sp, seed_required=True)
    sp.add_argument("--grid-size", type=int, default=12)
    sp.add_argument("--hole-radius", type=float, default=1.5)
    sp.add_argument("--count", type=int, default=250, help="walks per region")
    sp.add_argument("--length", type=int, default=10)
    sp.add_argument("--p-curl", type=float, default=0.8)

    for name in ("train-traj", "eval-traj"):
        sp = sub.add_parser(name, help="train one method" if name == "train-traj" else "evaluate methods over seeds")
        common(sp, seed_required=True)
        sp.add_argument("--input", required=True, help="trajectories.jsonl from gen-traj")
        sp.add_argument("--hidden", type=int, default=32)
        sp.add_argument("--layers", type=int, default=4)
        sp.add_argument("--epochs", type=int, default=100)
        sp.add_argument("--lr", type=float, default=None)
        if name == "train-traj":
            sp.add_argument("--method", choices=("constant-NSD", "handcrafted-NSD", "learned-NSD"), default="learned-NSD")
        else:
            sp.add_argument("--methods", nargs="+", default=None)
            sp.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")

    sp = sub.add_parser("energy-bound", help="oversmoothing bound on random instances")
    common(sp, seed_required=True)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--nodes", type=int, default=15)
    sp.add_argument("--p", type=float, default=0.3)
    sp.add_argument("--phi", choices=("relu", "leaky_relu"), default="relu")
    return p


COMMANDS = {
    "validate": cmd_validate,
    "cohomology": cmd_cohomology,
    "diffuse": cmd_diffuse,
    "hodge": cmd_hodge,
    "separate": cmd_separate,
    "gen-traj": cmd_gen_traj,
    "train-traj": cmd_train_traj,
    "eval-traj": cmd_eval_traj,
    "energy-bound": cmd_energy_bound,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "lr", "unset") is None:
        from .trajectory import NsdConfig

        args.lr = NsdConfig().lr
    if getattr(args, "methods", "unset") is None:
        from .trajectory import METHODS

        args.methods = list(METHODS)
    cfg = _config(args)
    try:
        return COMMANDS[args.cmd](cfg, args)
    except _Usage as e:
        parser.error(str(e))
    except (SheafLabError, KeyError, ValueError) as e:
        print(f"sheaflab {args.cmd}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
