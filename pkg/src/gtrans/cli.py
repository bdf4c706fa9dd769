"""Command-line interface.

Exit codes: 0 success, 2 usage, 3 bad input, 4 convergence failure,
5 internal error. Failures print a JSON error object on stderr and, when an
output directory is known, also write it to ``error.json`` there.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, io, streams
from .alignment import GwSolverOptions
from .datasets import load_dataset
from .errors import GTransError, InputError, UsageError
from .evaluation import CvConfig, Scenario, cv_select_delta, mse, run_linkpred, run_scenario
from .graphons import GRAPHONS, PerturbationSpec, build_prob_matrix
from .smoothing import SmootherConfig, ns_estimate, usvt_estimate
from .transfer import TransferConfig, gtrans

log = logging.getLogger("gtrans")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

SCENARIO_KEYS = {
    "kind", "source_graphon", "target_graphon", "n_s", "n_t", "reps", "perturbation",
    "lambdas", "methods", "seed", "epsilon", "delta_gw", "delta_egw",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _configure_logging():
    name = os.environ.get("GTRANS_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"GTRANS_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _write_metadata(out: Path, argv):
    io.write_json(out / "metadata.json", {
        "version": __version__,
        "argv": list(argv),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    })


def _load_graph(edges=None, dataset=None, nodes=None, data_dir=None):
    if edges:
        return io.load_edge_list(edges, nodes)
    if dataset:
        return load_dataset(dataset, data_dir)
    raise UsageError("an edge-list file or a dataset name is required")


def _smoother(args) -> SmootherConfig:
    return SmootherConfig(quantile_constant=args.quantile_constant)


def _transfer_config(args) -> TransferConfig:
    solver = GwSolverOptions.named(args.solver, epsilon=args.epsilon)
    return TransferConfig(solver=solver, delta=args.delta, smoother=_smoother(args),
                          clamp_final=not getattr(args, "no_clamp_final", False),
                          distance=args.distance)


def _add_solver_flags(p):
    p.add_argument("--solver", choices=["gw", "egw"], default="gw")
    p.add_argument("--epsilon", type=float, default=0.01, help="entropic regularization (egw)")
    p.add_argument("--delta", type=float, default=None,
                   help="gate threshold; defaults to 0.15 (gw) or 0.18 (egw)")
    p.add_argument("--distance", choices=["gw", "objective"], default="gw",
                   help="compare the GW distance or the raw objective against delta")
    p.add_argument("--quantile-constant", type=float, default=1.0)


def cmd_estimate(args):
    out = _out_dir(args.out_dir)
    if args.matrix:
        A, info = io.read_matrix_csv(args.matrix), {"nodes": None}
    else:
        A, info = _load_graph(args.edges, args.dataset, args.nodes, args.data_dir)
    if args.method == "ns":
        P = ns_estimate(A, _smoother(args))
    else:
        P = usvt_estimate(A, args.eta)
    io.write_matrix_csv(out / "estimate.csv", P)
    result = {"method": args.method, "n": int(A.shape[0]), "input": info}
    if args.truth:
        result["mse"] = mse(P, io.read_matrix_csv(args.truth))
    return out, result


def cmd_transfer(args):
    out = _out_dir(args.out_dir)
    a_s, info_s = _load_graph(args.source_edges, args.source_dataset, args.source_nodes, args.data_dir)
    a_t, info_t = _load_graph(args.target_edges, args.target_dataset, args.target_nodes, args.data_dir)
    cfg = _transfer_config(args)
    res = gtrans(a_s, a_t, cfg)
    io.write_matrix_csv(out / "p_final.csv", res.p_final)
    io.write_coupling(out, res.pi)
    if args.write_stages:
        for name, M in res.stages().items():
            io.write_matrix_csv(out / f"{name}.csv", M)
    result = {
        "solver": cfg.solver.kind,
        "epsilon": cfg.solver.epsilon if cfg.solver.kind == "entropic-gw" else None,
        "delta": res.delta,
        "distance_kind": cfg.distance,
        "d": res.d,
        "objective": res.pi.objective,
        "entropic_objective": res.pi.entropic_objective,
        "iterations": res.pi.iterations,
        "converged": res.pi.converged,
        "debiased": res.debiased,
        "clamp_final": cfg.clamp_final,
        "source": info_s,
        "target": info_t,
        "warnings": res.warnings,
        "seed": args.seed,
    }
    if args.truth:
        truth = io.read_matrix_csv(args.truth)
        result["mse"] = {name: mse(M, truth) for name, M in res.stages().items()
                         if M.shape == truth.shape and name not in ("residual", "p_res")}
    return out, result


def _scenario_from_config(path, args) -> Scenario:
    cfg = io.load_config(path, SCENARIO_KEYS)
    if "perturbation" in cfg and cfg["perturbation"] is not None:
        pert = dict(cfg["perturbation"])
        unknown = set(pert) - {"kind", "lo", "hi", "lam"}
        if unknown:
            raise InputError(f"unknown perturbation keys {sorted(unknown)}")
        cfg["perturbation"] = PerturbationSpec(**pert)
    for key in ("n_s", "lambdas", "methods"):
        if key in cfg:
            cfg[key] = tuple(np.atleast_1d(cfg[key]).tolist())
    if args.reps is not None:
        cfg["reps"] = args.reps
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "seed" not in cfg:
        raise UsageError("simulate needs a seed, in the config or via --seed")
    kind = cfg.pop("kind", "cross-graphon")
    try:
        return Scenario.preset(kind, **cfg)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid scenario: {exc}") from exc


def cmd_simulate(args):
    out = _out_dir(args.out_dir)
    s = _scenario_from_config(args.scenario, args)
    res = run_scenario(s, workers=args.workers)
    cols = ["scenario", "n_s", "n_t", "lambda", "method", "rep", "mse"]
    lines = [",".join(cols)]
    for r in res.rows:
        lines.append(",".join(format(r[c], ".17g") if isinstance(r[c], float) else str(r[c]) for c in cols))
    (out / "runs.csv").write_text("\n".join(lines) + "\n")
    scenario = asdict(s)
    return out, {"scenario": scenario, "summary": res.summary()}


def cmd_linkpred(args):
    out = _out_dir(args.out_dir)
    a_s, info_s = _load_graph(args.source_edges, args.source_dataset, None, args.data_dir)
    a_t, info_t = _load_graph(args.target_edges, args.target_dataset, None, args.data_dir)
    methods = tuple(args.methods.split(","))
    aucs = run_linkpred(a_s, a_t, p=args.p, reps=args.reps, seed=args.seed, methods=methods,
                        epsilon=args.epsilon)
    summary = {m: {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                   "auc": v} for m, v in aucs.items()}
    return out, {"p": args.p, "reps": args.reps, "seed": args.seed, "source": info_s,
                 "target": info_t, "methods": summary}


def cmd_cv(args):
    out = _out_dir(args.out_dir)
    a_s, info_s = _load_graph(args.source_edges, args.source_dataset, args.source_nodes, args.data_dir)
    a_t, info_t = _load_graph(args.target_edges, args.target_dataset, args.target_nodes, args.data_dir)
    if args.candidates:
        try:
            candidates = tuple(float(c) for c in args.candidates.split(","))
        except ValueError as exc:
            raise UsageError(f"--candidates must be comma-separated numbers: {exc}") from exc
    else:
        candidates = CvConfig().candidates
    rank = args.rank if args.rank == "auto" else int(args.rank)
    cfg = CvConfig(candidates=candidates, folds=args.folds, completion_rank=rank)
    res = cv_select_delta(a_s, a_t, cfg, _transfer_config(args),
                          streams.stream(args.seed, streams.FOLDS))
    return out, {"delta_hat": res.delta_hat, "candidates": list(res.candidates),
                 "mean_loss": res.mean_loss, "fold_losses": res.fold_losses,
                 "distances": res.distances, "failed_folds": res.failed_folds,
                 "seed": args.seed, "source": info_s, "target": info_t}


def cmd_graphon_table(args):
    out = _out_dir(args.out_dir)
    u = np.linspace(0.0, 1.0, args.grid)
    rows = []
    for gid, spec in GRAPHONS.items():
        P = build_prob_matrix(spec, u)
        io.write_matrix_csv(out / f"graphon_{gid}.csv", P)
        rows.append({"id": gid, "formula": spec.description, "mean": float(P.mean())})
    return out, {"grid": args.grid, "graphons": rows}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gtrans", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def graph_flags(p, role=None, nodes=True):
        prefix = f"{role}-" if role else ""
        g = p.add_mutually_exclusive_group()
        g.add_argument(f"--{prefix}edges", help="edge-list file with 0-based ids")
        g.add_argument(f"--{prefix}dataset", help="named dataset, e.g. karate")
        if nodes:
            p.add_argument(f"--{prefix}nodes", type=int, default=None,
                           help="node count when isolated high ids are absent from the file")

    p = sub.add_parser("estimate", help="estimate edge probabilities of one graph")
    graph_flags(p)
    p.add_argument("--matrix", help="dense CSV adjacency instead of an edge list")
    p.add_argument("--method", choices=["ns", "usvt"], default="ns")
    p.add_argument("--eta", type=float, default=0.01, help="USVT threshold slack")
    p.add_argument("--quantile-constant", type=float, default=1.0)
    p.add_argument("--truth", help="true probability matrix CSV for scoring")
    p.add_argument("--data-dir")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("transfer", help="estimate a target graph with help from a source graph")
    graph_flags(p, "source")
    graph_flags(p, "target")
    _add_solver_flags(p)
    p.add_argument("--no-clamp-final", action="store_true")
    p.add_argument("--truth", help="true target probability matrix CSV")
    p.add_argument("--seed", type=int, default=None, help="recorded for provenance")
    p.add_argument("--write-stages", action="store_true", help="also write every intermediate matrix")
    p.add_argument("--data-dir")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("simulate", help="run a simulation scenario")
    p.add_argument("--scenario", required=True, help="JSON scenario config")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("linkpred", help="masked link-prediction AUC")
    graph_flags(p, "source", nodes=False)
    graph_flags(p, "target", nodes=False)
    p.add_argument("--p", type=float, default=0.1, help="fraction of pairs hidden")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--methods", default="ns,gtrans-gw,gtrans-egw")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--data-dir")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_linkpred)

    p = sub.add_parser("cv", help="select the gate threshold by cross-validation")
    graph_flags(p, "source")
    graph_flags(p, "target")
    _add_solver_flags(p)
    p.add_argument("--candidates", help="comma-separated thresholds; default 0.10..0.50")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--rank", default="auto")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--data-dir")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("graphon-table", help="write every graphon on a sorted grid")
    p.add_argument("--grid", type=int, default=500)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_graphon_table)
    return parser


def _fail(exc, code, out_dir):
    payload = exc.to_dict() if isinstance(exc, GTransError) else {
        "error": type(exc).__name__, "message": str(exc)}
    payload["exit_code"] = code
    text = io.dumps(payload)
    sys.stderr.write(json.dumps(json.loads(text)) + "\n")
    if out_dir:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out_dir = None
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        out_dir = getattr(args, "out_dir", None)
        out, result = args.func(args)
        io.write_json(out / "result.json", result)
        _write_metadata(out, argv)
        return 0
    except GTransError as exc:
        return _fail(exc, exc.exit_code, out_dir)
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _fail(exc, 5, out_dir)


if __name__ == "__main__":
    sys.exit(main())
