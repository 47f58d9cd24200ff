"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid data,
3 solver non-convergence.  Every subcommand writes its files atomically into
``--out`` together with ``provenance.json`` and prints one JSON summary on
standard output.  Spreads are percentages of the node count.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import __version__
from .centrality import MEASURES, ConvergenceError, all_measures, compute
from .diffusion import DiffusionConfig, SeedSet, lt_monte_carlo_batch
from .experiment import (
    derive_seed,
    fresh_seed,
    im_external_validation,
    load_config,
    run_sp_experiment,
    sample_node_sets,
    spread_csv,
    top_k_selection,
    topk_csv,
    topk_seed,
)
from .graph import GraphFormatError, edge_list_text, load_edge_list, load_groups, toy_network
from .io import (
    cdf_csv,
    centrality_csv,
    centrality_wide_csv,
    dump_json,
    load_seed_sets,
    seed_sets_json,
    write_files,
)
from .srd import DEFAULT_MC_SAMPLES, MatrixFormatError, ScoreMatrix, cross_validate, crrn, srd

log = logging.getLogger("spreadrank")

EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 1, 2, 3

# PageRank (alpha = 0.8) and normalised harmonic centrality of the five-town network
TOY_EXPECTED = {
    "r_t": (0.0770, 0.571429), "r_m": (0.0770, 0.571429), "r_b": (0.0770, 0.571429),
    "o_t": (0.0547, 0.488095), "o_m": (0.0653, 0.535714), "o_b": (0.0653, 0.535714),
    "b_t": (0.0653, 0.535714), "b_m": (0.0653, 0.535714), "b_b": (0.0547, 0.488095),
    "g_t": (0.0660, 0.52381), "g_m": (0.1259, 0.214286), "g_b": (0.0660, 0.52381),
    "p_t": (0.0469, 0.142857), "p_m": (0.0469, 0.142857), "p_b": (0.0469, 0.142857),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _graph_args(p):
    p.add_argument("--graph", required=True, help="edge-list file (u v or u,v per line)")
    p.add_argument("--directed", action="store_true", help="keep arcs as given instead of doubling edges")


def _seed_arg(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (drawn from entropy if omitted)")


def _out_arg(p, default="."):
    p.add_argument("--out", default=default, help="output directory (default: %(default)s)")


def _matrix_args(p):
    p.add_argument("--matrix", required=True, help="CSV: header of column ids, first column row ids")
    p.add_argument("--reference", default="last", help="reference column: last, first, name or index")
    p.add_argument("--eps-ref", type=float, default=0.005, help="tie epsilon for the reference column")
    p.add_argument("--eps-sol", type=float, default=0.0, help="tie epsilon for solution columns")


def _measure_params(a) -> dict:
    return {
        "alpha": a.alpha,
        "p": a.p,
        "threshold_factor": a.ltc_factor,
        "normalized": not a.raw_harmonic,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spreadrank", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("centrality", help="compute node influence measures")
    _graph_args(p)
    p.add_argument("--measure", default="all", choices=("all", *MEASURES))
    p.add_argument("--alpha", type=float, default=0.8, help="PageRank damping")
    p.add_argument("--p", type=float, default=0.05, help="GDD spreading parameter")
    p.add_argument("--ltc-factor", type=float, default=0.7, help="LTC threshold as a fraction of degree")
    p.add_argument("--raw-harmonic", action="store_true", help="do not divide harmonic by n-1")
    _out_arg(p)

    p = sub.add_parser("simulate", help="Monte Carlo LT spread (percent of nodes) of seed sets")
    _graph_args(p)
    p.add_argument("--sets", required=True, help='JSON array of {"id", "members": [labels]}')
    p.add_argument("--runs", type=int, default=5000)
    _seed_arg(p)
    p.add_argument("--threads", type=int, default=None)
    _out_arg(p)

    p = sub.add_parser("sample", help="draw random node sets")
    _graph_args(p)
    p.add_argument("--n", type=int, default=21)
    p.add_argument("--q", type=int, default=500)
    _seed_arg(p)
    _out_arg(p)

    p = sub.add_parser("srd", help="sum of ranking differences")
    _matrix_args(p)
    _out_arg(p)

    p = sub.add_parser("crrn", help="SRD plus the random-ranking permutation test")
    _matrix_args(p)
    p.add_argument("--mc", type=int, default=DEFAULT_MC_SAMPLES, help="Monte Carlo permutations when sampling")
    _seed_arg(p)
    _out_arg(p)

    p = sub.add_parser("cv", help="cross-validated SRD with pairwise Wilcoxon tests")
    _matrix_args(p)
    p.add_argument("--folds", type=int, default=8)
    _seed_arg(p)
    _out_arg(p)

    p = sub.add_parser("pipeline", help="full sampling experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=None)
    _out_arg(p)

    p = sub.add_parser("topk", help="top-k nodes of one measure, optionally simulated")
    _graph_args(p)
    p.add_argument("--measure", required=True, choices=MEASURES)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--runs", type=int, default=5000)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--ltc-factor", type=float, default=0.7)
    p.add_argument("--raw-harmonic", action="store_true")
    _seed_arg(p)
    _out_arg(p)

    p = sub.add_parser("toy", help="write the five-town example network and its expected values")
    _out_arg(p)
    return parser


def _provenance(args, **extra) -> str:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return dump_json({"command": args.command, "args": cfg, "version": __version__, **extra})


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = fresh_seed()
        log.info("no --seed given; drew %d", args.seed)
    return args.seed


def cmd_centrality(args):
    g = load_edge_list(args.graph, undirected=not args.directed)
    params = _measure_params(args)
    if args.measure == "all":
        vectors = all_measures(g, params)
    else:
        vectors = [compute(g, args.measure, params)]
    files = {f"{v.measure}.csv": centrality_csv(g, v) for v in vectors}
    if args.measure == "all":
        files["centrality.csv"] = centrality_wide_csv(g, vectors)
    files["provenance.json"] = _provenance(args)
    write_files(args.out, files)
    return {"nodes": g.node_count, "arcs": g.arc_count, "files": sorted(files)}


def cmd_simulate(args):
    g = load_edge_list(args.graph, undirected=not args.directed)
    sets = load_seed_sets(g, args.sets)
    seed = _resolve_seed(args)
    stats = lt_monte_carlo_batch(g, sets, DiffusionConfig(args.runs, seed), threads=args.threads)
    write_files(args.out, {"spread.csv": spread_csv(sets, stats), "provenance.json": _provenance(args)})
    return {s.id: {"mean_spread_pct": st.mean_spread, "std_error_pct": st.std_error} for s, st in zip(sets, stats)}


def cmd_sample(args):
    g = load_edge_list(args.graph, undirected=not args.directed)
    seed = _resolve_seed(args)
    sets = sample_node_sets(g, args.n, args.q, seed)
    write_files(args.out, {"sets.json": seed_sets_json(g, sets), "provenance.json": _provenance(args)})
    return {"sets": len(sets), "size": args.q, "seed": seed}


def _load_matrix(args) -> ScoreMatrix:
    with open(args.matrix, encoding="utf-8") as fh:
        return ScoreMatrix.from_csv(fh.read(), reference=args.reference)


def cmd_srd(args):
    m = _load_matrix(args)
    res = srd(m, args.eps_ref, args.eps_sol)
    doc = res.to_dict()
    write_files(args.out, {
        "srd.json": dump_json(doc),
        "ranking.csv": res.ranking_csv(),
        "provenance.json": _provenance(args),
    })
    return doc


def cmd_crrn(args):
    m = _load_matrix(args)
    seed = _resolve_seed(args)
    res = crrn(srd(m, args.eps_ref, args.eps_sol), args.mc, seed)
    doc = res.to_dict()
    write_files(args.out, {
        "srd.json": dump_json(doc),
        "ranking.csv": res.ranking_csv(),
        "crrn_cdf.csv": cdf_csv(res.null),
        "provenance.json": _provenance(args),
    })
    return doc


def cmd_cv(args):
    m = _load_matrix(args)
    seed = _resolve_seed(args)
    cv = cross_validate(m, args.folds, seed, args.eps_ref, args.eps_sol)
    doc = cv.to_dict()
    write_files(args.out, {"cv.json": dump_json(doc), "provenance.json": _provenance(args)})
    return {"groups": doc["groups"]}


def cmd_pipeline(args):
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    if "graph" not in raw:
        raise ValueError("config needs a 'graph' edge-list path")
    cfg = load_config(args.config)
    if args.threads:
        cfg.threads = args.threads
    g = load_edge_list(raw["graph"], undirected=raw.get("undirected", True))
    groups = load_groups(g, raw["groups"]) if raw.get("groups") else None
    report = run_sp_experiment(g, cfg, groups)
    files = report.files()
    write_files(args.out, files)
    return {
        "srd": dict(zip(report.srd_result.solution_ids, report.srd_result.srd.tolist())),
        "verdict": dict(zip(report.srd_result.solution_ids, report.srd_result.verdict)),
        "master_seed": report.config.master_seed,
        "files": sorted(files),
    }


def cmd_topk(args):
    g = load_edge_list(args.graph, undirected=not args.directed)
    seed = _resolve_seed(args)
    vec = compute(g, args.measure, _measure_params(args))
    chosen = top_k_selection(vec, args.k, topk_seed(seed, vec))
    files = {"topk_set.json": seed_sets_json(g, [chosen])}
    summary = {"measure": args.measure, "members": [g.labels[v] for v in chosen.members]}
    if args.simulate:
        rows = im_external_validation(
            g, [vec], args.k, DiffusionConfig(args.runs, derive_seed(seed, "topk-diffusion")), seed
        )
        files["topk.csv"] = topk_csv(rows)
        summary["mean_spread_pct"] = rows[0].stats.mean_spread
        summary["std_error_pct"] = rows[0].stats.std_error
    files["provenance.json"] = _provenance(args)
    write_files(args.out, files)
    return summary


def cmd_toy(args):
    gg = toy_network()
    g = gg.graph
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_label", "group_label"])
    for town, members in gg.groups.items():
        for v in members:
            w.writerow([g.labels[v], town])
    groups_csv = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_label", "pagerank_alpha_0.8", "harmonic_normalized"])
    for lab in g.labels:
        pr, h = TOY_EXPECTED[lab]
        w.writerow([lab, pr, h])
    sets = [SeedSet(t, m) for t, m in gg.groups.items()]
    write_files(args.out, {
        "toy_edges.txt": "# five-town example network, one undirected edge per line\n" + edge_list_text(g),
        "toy_groups.csv": groups_csv,
        "toy_sets.json": seed_sets_json(g, sets),
        "toy_expected.csv": buf.getvalue(),
        "provenance.json": _provenance(args),
    })
    return {"nodes": g.node_count, "edges": g.arc_count // 2}


COMMANDS = {
    "centrality": cmd_centrality,
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "srd": cmd_srd,
    "crrn": cmd_crrn,
    "cv": cmd_cv,
    "pipeline": cmd_pipeline,
    "topk": cmd_topk,
    "toy": cmd_toy,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        result = COMMANDS[args.command](args)
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    except (OSError, ValueError, KeyError, IndexError, GraphFormatError, MatrixFormatError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    sys.stdout.write(json.dumps(result, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o)) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
