"""Sampling-based comparison of influence proxies, plus top-k external validation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import secrets
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .centrality import MEASURES, CentralityVector, all_measures
from .diffusion import DiffusionConfig, SeedSet, SpreadStats, lt_monte_carlo, lt_monte_carlo_batch
from .graph import Graph, GroupedGraph
from .srd import (
    DEFAULT_MC_SAMPLES,
    CvResult,
    ScoreMatrix,
    SrdResult,
    cross_validate,
    crrn,
    fractional_ranks,
    srd,
)

AGGREGATORS = ("mean", "sum", "median")


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 63-bit child seed for one pipeline stage."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master_seed).to_bytes(16, "little", signed=True))
    h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest(), "little") >> 1


def fresh_seed() -> int:
    return secrets.randbits(63)


@dataclass
class ExperimentConfig:
    n_samples: int = 21
    sample_size: int = 500
    runs: int = 5000
    master_seed: int | None = None
    measures: list[str] = field(default_factory=lambda: list(MEASURES))
    params: dict = field(default_factory=dict)
    aggregator: str = "mean"
    tie_epsilon_reference: float = 0.005
    tie_epsilon_solutions: float = 0.0
    folds: int = 8
    mc_samples: int = DEFAULT_MC_SAMPLES
    top_k: int | None = None
    use_groups: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}")
        if not self.use_groups and self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        unknown = set(self.measures) - set(MEASURES)
        if unknown:
            raise ValueError(f"unknown measures: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_node_sets(g: Graph, n: int, q: int, seed: int) -> list[SeedSet]:
    """``n`` independent uniform ``q``-subsets of the nodes (sets may overlap)."""
    if q > g.node_count:
        raise ValueError(f"sample size {q} exceeds node count {g.node_count}")
    if q < 1:
        raise ValueError("sample size must be >= 1")
    sets = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), i]))
        members = np.sort(rng.choice(g.node_count, size=q, replace=False))
        sets.append(SeedSet(f"S{i + 1}", tuple(int(v) for v in members)))
    return sets


def group_sets(gg: GroupedGraph) -> list[SeedSet]:
    return [SeedSet(name, members) for name, members in gg.groups.items() if members]


def aggregate_scores(sets: list[SeedSet], vectors: list[CentralityVector], aggregator: str = "mean") -> np.ndarray:
    """``(len(sets), len(vectors))`` matrix of per-set aggregated scores."""
    fn = {"mean": np.mean, "sum": np.sum, "median": np.median}[aggregator]
    out = np.empty((len(sets), len(vectors)))
    for i, s in enumerate(sets):
        if not s.members:
            raise ValueError(f"set {s.id!r} is empty")
        idx = np.asarray(s.members)
        for j, vec in enumerate(vectors):
            out[i, j] = fn(vec.scores[idx])
    return out


def top_k_selection(vector: CentralityVector, k: int, seed: int) -> SeedSet:
    """The ``k`` best-scoring nodes.

    If the cut falls inside a class of equal scores, members of that class
    are discarded one at a time uniformly at random until ``k`` remain.
    """
    scores = vector.scores
    n = len(scores)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    order = np.argsort(-scores, kind="stable")
    cut = scores[order[k - 1]]
    above = np.flatnonzero(scores > cut)
    tied = np.flatnonzero(scores == cut)
    need = k - len(above)
    if need == len(tied):
        chosen = np.concatenate([above, tied])
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed & (2**64 - 1)))
        pool = list(tied)
        while len(pool) > need:
            pool.pop(int(rng.integers(len(pool))))
        chosen = np.concatenate([above, np.array(pool, dtype=np.int64)])
    return SeedSet(vector.measure, tuple(int(v) for v in np.sort(chosen)))


def topk_seed(master_seed: int, vector: CentralityVector) -> int:
    """Tie-break seed keyed on the score contents, so duplicated measures pick the same set."""
    digest = hashlib.blake2b(np.ascontiguousarray(vector.scores, dtype=np.float64).tobytes(), digest_size=8)
    return derive_seed(master_seed, "topk:" + digest.hexdigest())


@dataclass
class TopKRow:
    measure: str
    members: tuple[int, ...]
    stats: SpreadStats
    im_rank: float
    sp_rank: float | None = None
    sp_grouped_rank: float | None = None


def im_external_validation(
    g: Graph,
    vectors: list[CentralityVector],
    k: int,
    cfg: DiffusionConfig,
    seed: int = 0,
    srd_result: SrdResult | None = None,
    cv_result: CvResult | None = None,
) -> list[TopKRow]:
    """Simulate each measure's top-``k`` set and line its rank up with the SRD rank.

    IM rank: descending average spread.  SP rank: ascending SRD.  Ties share
    fractional ranks.
    """
    rows = []
    for vec in vectors:
        chosen = top_k_selection(vec, k, topk_seed(seed, vec))
        # the simulation stream depends on the members, not on the measure name
        sid = "topk:" + ",".join(map(str, chosen.members))
        stats = lt_monte_carlo(g, SeedSet(sid, chosen.members), cfg)
        rows.append(TopKRow(vec.measure, chosen.members, stats, 0.0))
    im = fractional_ranks([-r.stats.mean_spread for r in rows])
    for r, rank in zip(rows, im):
        r.im_rank = float(rank)
    if srd_result is not None:
        lookup = dict(zip(srd_result.solution_ids, fractional_ranks(srd_result.srd)))
        grouped = dict(zip(cv_result.solution_ids, cv_result.grouped_ranks())) if cv_result else {}
        for r in rows:
            r.sp_rank = float(lookup[r.measure]) if r.measure in lookup else None
            r.sp_grouped_rank = float(grouped[r.measure]) if r.measure in grouped else None
    return rows


def topk_csv(rows: list[TopKRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["measure", "avg_spread_pct", "std_error_pct", "runs", "im_rank", "sp_rank", "sp_grouped_rank"])
    for r in rows:
        w.writerow([
            r.measure,
            f"{r.stats.mean_spread:.6g}",
            f"{r.stats.std_error:.6g}",
            r.stats.runs,
            f"{r.im_rank:g}",
            "" if r.sp_rank is None else f"{r.sp_rank:g}",
            "" if r.sp_grouped_rank is None else f"{r.sp_grouped_rank:g}",
        ])
    return buf.getvalue()


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    sets: list[SeedSet]
    vectors: list[CentralityVector]
    spreads: list[SpreadStats]
    score_matrix: ScoreMatrix
    srd_result: SrdResult
    cv_result: CvResult | None
    topk: list[TopKRow] | None
    provenance: dict

    def files(self) -> dict[str, str]:
        """Report directory contents, keyed by file name."""
        from .io import cdf_csv, dump_json

        out = {
            "matrix.csv": self.score_matrix.to_csv(),
            "ranking.csv": self.srd_result.ranking_csv(),
            "srd.json": dump_json(self.srd_result.to_dict()),
            "cv.json": dump_json(self.cv_result.to_dict() if self.cv_result else None),
            "crrn_cdf.csv": cdf_csv(self.srd_result.null),
            "spread.csv": spread_csv(self.sets, self.spreads),
            "provenance.json": dump_json({k: v for k, v in self.provenance.items() if k != "timings_s"}),
            "timings.json": dump_json(self.provenance.get("timings_s", {})),
        }
        if self.topk is not None:
            out["topk.csv"] = topk_csv(self.topk)
        return out


def spread_csv(sets: list[SeedSet], stats: list[SpreadStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set_id", "mean_spread_pct", "std_error_pct", "runs"])
    for s, st in zip(sets, stats):
        w.writerow([s.id, f"{st.mean_spread:.6g}", f"{st.std_error:.6g}", st.runs])
    return buf.getvalue()


def run_sp_experiment(g: Graph, cfg: ExperimentConfig, groups: GroupedGraph | None = None) -> ExperimentReport:
    """Measures -> samples -> aggregation -> simulated reference -> SRD, CRRN, CV.

    Every random stage gets a seed derived from ``cfg.master_seed`` (drawn
    from entropy when unset and recorded in the provenance).
    """
    timings = {}
    master = cfg.master_seed if cfg.master_seed is not None else fresh_seed()

    t = time.perf_counter()
    vectors = all_measures(g, cfg.params, cfg.measures)
    timings["measures"] = time.perf_counter() - t

    t = time.perf_counter()
    if cfg.use_groups:
        if groups is None:
            raise ValueError("use_groups requires a grouped graph")
        sets = group_sets(groups)
    else:
        sets = sample_node_sets(g, cfg.n_samples, cfg.sample_size, derive_seed(master, "sample"))
    agg = aggregate_scores(sets, vectors, cfg.aggregator)
    timings["sampling"] = time.perf_counter() - t

    t = time.perf_counter()
    dcfg = DiffusionConfig(runs=cfg.runs, master_seed=derive_seed(master, "diffusion"))
    spreads = lt_monte_carlo_batch(g, sets, dcfg, threads=cfg.threads)
    timings["diffusion"] = time.perf_counter() - t

    matrix = ScoreMatrix(
        [s.id for s in sets],
        [v.measure for v in vectors] + ["avg_spread"],
        np.column_stack([agg, [st.mean_spread for st in spreads]]),
        reference=-1,
    )

    t = time.perf_counter()
    result = srd(matrix, cfg.tie_epsilon_reference, cfg.tie_epsilon_solutions)
    crrn(result, cfg.mc_samples, derive_seed(master, "crrn"))
    cv = None
    if matrix.n >= 4:
        cv = cross_validate(
            matrix,
            min(cfg.folds, matrix.n),
            derive_seed(master, "cv"),
            cfg.tie_epsilon_reference,
            cfg.tie_epsilon_solutions,
        )
    timings["statistics"] = time.perf_counter() - t

    topk = None
    if cfg.top_k:
        t = time.perf_counter()
        kcfg = DiffusionConfig(runs=cfg.runs, master_seed=derive_seed(master, "topk-diffusion"))
        topk = im_external_validation(g, vectors, cfg.top_k, kcfg, derive_seed(master, "topk"), result, cv)
        timings["topk"] = time.perf_counter() - t

    provenance = {
        "config": {**cfg.to_dict(), "master_seed": master},
        "derived_seeds": {
            k: derive_seed(master, k) for k in ("sample", "diffusion", "crrn", "cv", "topk", "topk-diffusion")
        },
        "graph": {"nodes": g.node_count, "arcs": g.arc_count},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    provenance_timed = {**provenance, "timings_s": timings}
    return ExperimentReport(
        replace_seed(cfg, master), sets, vectors, spreads, matrix, result, cv, topk, provenance_timed
    )


def replace_seed(cfg: ExperimentConfig, master: int) -> ExperimentConfig:
    d = cfg.to_dict()
    d["master_seed"] = master
    return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    data = {k: v for k, v in data.items() if k not in ("graph", "groups", "undirected")}
    return ExperimentConfig.from_dict(data)
