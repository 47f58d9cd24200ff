"""Monte Carlo Linear Threshold simulation.

Randomness is counter-based.  Each (master seed, seed-set id) pair owns a
Philox key, and run ``i`` reads a fixed-size block of that stream starting at
counter ``i * blocks_per_run``.  A run therefore sees the same numbers
whether it is simulated alone, in a vectorised chunk, or on another thread.

Per-run block layout (doubles): ``node_count`` thresholds, then one raw
weight per arc in target-major order (the graph's ``in_idx`` order), padded
to a multiple of four.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph

_DOUBLES_PER_COUNTER = 4
_CHUNK_DOUBLES = 1 << 22


@dataclass(frozen=True)
class DiffusionConfig:
    runs: int = 5000
    master_seed: int = 0

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")


@dataclass(frozen=True)
class SeedSet:
    id: str
    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(int(v) for v in self.members)
        if not members:
            raise ValueError(f"seed set {self.id!r} is empty")
        if len(set(members)) != len(members):
            raise ValueError(f"seed set {self.id!r} has repeated members")
        object.__setattr__(self, "members", members)

    def validate(self, g: Graph) -> None:
        for v in self.members:
            g._check(v)


@dataclass(frozen=True)
class SpreadStats:
    mean_spread: float
    std_error: float
    runs: int


def stream_key(master_seed: int, set_id: str) -> tuple[int, int]:
    """Philox key for one seed set, a stable hash of ``(master_seed, set_id)``."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(master_seed).to_bytes(16, "little", signed=True))
    h.update(set_id.encode("utf-8"))
    d = h.digest()
    return int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little")


class LTEngine:
    """Vectorised LT propagation over a fixed graph (read-only, thread-safe)."""

    def __init__(self, g: Graph):
        self.g = g
        n, m = g.node_count, g.arc_count
        self.n, self.m = n, m
        # arcs in target-major order: arc j goes in_src[j] -> in_dst[j]
        self.in_src = g.in_idx
        self.in_dst = np.repeat(np.arange(n), g.in_degrees)
        self.block = -(-(n + m) // _DOUBLES_PER_COUNTER)  # counters per run
        # (m, n) arc -> target incidence for summing weights per target node
        self._to_dst = sp.csr_matrix(
            (np.ones(m), (np.arange(m), self.in_dst)), shape=(m, n)
        ).T.tocsr()

    def draw(self, key: tuple[int, int], first_run: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Thresholds ``(count, n)`` and normalised weights ``(count, m)``."""
        bg = np.random.Philox(key=np.array(key, dtype=np.uint64))
        if first_run:
            bg.advance(first_run * self.block)
        per_run = self.block * _DOUBLES_PER_COUNTER
        u = np.random.Generator(bg).random((count, per_run))
        thresholds = u[:, : self.n]
        raw = 1.0 - u[:, self.n : self.n + self.m]  # (0, 1]: a lone arc normalises to exactly 1
        totals = (self._to_dst @ raw.T).T
        weights = raw / totals[:, self.in_dst]
        return thresholds, weights

    def propagate(self, seeds: np.ndarray, thresholds: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Run every row to its fixpoint; returns the ``(runs, n)`` active mask.

        Only arcs leaving nodes activated in the previous round add weight,
        and every run sees the same summation order regardless of batch size.
        """
        runs = thresholds.shape[0]
        active = np.zeros((runs, self.n), dtype=bool)
        active[:, seeds] = True
        marked = np.zeros((runs, self.n))
        fresh = active
        while True:
            contrib = weights * fresh[:, self.in_src]
            marked += (self._to_dst @ contrib.T).T
            fresh = (marked > thresholds) & ~active
            if not fresh.any():
                return active
            active |= fresh

    def spreads(self, seeds, key, first_run: int, count: int) -> np.ndarray:
        """Spread percentages of runs ``first_run .. first_run + count - 1``."""
        seeds = np.asarray(seeds, dtype=np.int64)
        per_chunk = max(1, _CHUNK_DOUBLES // max(self.block * _DOUBLES_PER_COUNTER, 1))
        out = np.empty(count)
        for s in range(0, count, per_chunk):
            c = min(per_chunk, count - s)
            th, w = self.draw(key, first_run + s, c)
            active = self.propagate(seeds, th, w)
            out[s : s + c] = 100.0 * active.sum(axis=1) / self.n
        return out


def check_fixpoint(engine: LTEngine, active: np.ndarray, thresholds: np.ndarray, weights: np.ndarray) -> bool:
    """True when no inactive node's active-in-arc weight exceeds its threshold."""
    marked = (engine._to_dst @ (weights * active[:, engine.in_src]).T).T
    return not np.any((marked > thresholds) & ~active)


def lt_single_run(g: Graph, seeds: SeedSet, rng_seed: int, engine: LTEngine | None = None) -> float:
    """One LT cascade driven by the 64-bit ``rng_seed``; returns percent active."""
    seeds.validate(g)
    engine = engine or LTEngine(g)
    key = (rng_seed & 0xFFFFFFFFFFFFFFFF, 0)
    return float(engine.spreads(seeds.members, key, 0, 1)[0])


def replay_run(g: Graph, seeds: SeedSet, cfg: DiffusionConfig, run_index: int, engine: LTEngine | None = None) -> float:
    """Re-simulate run ``run_index`` of :func:`lt_monte_carlo` in isolation."""
    seeds.validate(g)
    engine = engine or LTEngine(g)
    key = stream_key(cfg.master_seed, seeds.id)
    return float(engine.spreads(seeds.members, key, run_index, 1)[0])


def _stats(spreads: np.ndarray) -> SpreadStats:
    runs = len(spreads)
    mean = float(spreads.mean())
    # constant runs (e.g. a set that never spreads) give an exact zero, not rounding noise
    se = float(spreads.std(ddof=1) / math.sqrt(runs)) if runs > 1 and np.ptp(spreads) > 0 else 0.0
    return SpreadStats(mean, se, runs)


def run_spreads(g: Graph, seeds: SeedSet, cfg: DiffusionConfig, engine: LTEngine | None = None) -> np.ndarray:
    """Per-run spread percentages for ``cfg.runs`` runs (run ``i`` at index ``i``)."""
    seeds.validate(g)
    engine = engine or LTEngine(g)
    return engine.spreads(seeds.members, stream_key(cfg.master_seed, seeds.id), 0, cfg.runs)


def lt_monte_carlo(g: Graph, seeds: SeedSet, cfg: DiffusionConfig, engine: LTEngine | None = None) -> SpreadStats:
    return _stats(run_spreads(g, seeds, cfg, engine))


def default_threads() -> int:
    return os.cpu_count() or 1


def lt_monte_carlo_batch(
    g: Graph,
    sets: list[SeedSet],
    cfg: DiffusionConfig,
    threads: int | None = None,
) -> list[SpreadStats]:
    """Simulate each set independently; output order follows ``sets``."""
    ids = [s.id for s in sets]
    if len(set(ids)) != len(ids):
        raise ValueError("seed-set ids must be unique within a batch")
    engine = LTEngine(g)
    threads = threads or default_threads()
    if threads <= 1 or len(sets) <= 1:
        return [lt_monte_carlo(g, s, cfg, engine) for s in sets]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: lt_monte_carlo(g, s, cfg, engine), sets))


def coupled_spreads(g: Graph, sets: list[SeedSet], runs: int, master_seed: int, engine: LTEngine | None = None) -> np.ndarray:
    """``(len(sets), runs)`` spreads where every set sees the same thresholds and weights.

    Run ``i`` of every set shares one random block (keyed by ``master_seed``
    alone), which makes spreads of nested sets comparable run by run.
    """
    engine = engine or LTEngine(g)
    key = stream_key(master_seed, "")
    out = np.empty((len(sets), runs))
    per_chunk = max(1, _CHUNK_DOUBLES // (engine.block * _DOUBLES_PER_COUNTER))
    for s in range(0, runs, per_chunk):
        c = min(per_chunk, runs - s)
        th, w = engine.draw(key, s, c)
        for i, seeds in enumerate(sets):
            active = engine.propagate(np.asarray(seeds.members), th, w)
            out[i, s : s + c] = 100.0 * active.sum(axis=1) / engine.n
    return out
