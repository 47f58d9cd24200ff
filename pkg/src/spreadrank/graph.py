"""Directed graphs with dense node indices, edge-list I/O and the five-town fixture."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

_SEP = re.compile(r"[,\s]+")


class GraphFormatError(ValueError):
    """Raised for malformed edge-list or group files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple digraph on nodes ``0..node_count-1``.

    Arcs are stored twice as CSR-style arrays: ``out_ptr/out_idx`` for
    successors and ``in_ptr/in_idx`` for predecessors.  Neighbour lists are
    sorted ascending.
    """

    node_count: int
    out_ptr: np.ndarray
    out_idx: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray
    labels: tuple[str, ...]
    duplicates: int = 0

    @classmethod
    def from_arcs(
        cls,
        node_count: int,
        arcs,
        labels=None,
        *,
        symmetric: bool = False,
    ) -> "Graph":
        """Build from ``(u, v)`` index pairs.

        Self-loops raise; duplicate arcs are dropped and counted.  With
        ``symmetric`` every pair also yields its reverse arc.
        """
        a = np.asarray(list(arcs) if not isinstance(arcs, np.ndarray) else arcs, dtype=np.int64)
        a = a.reshape(-1, 2)
        if a.size and (a.min() < 0 or a.max() >= node_count):
            raise ValueError("arc endpoint out of range")
        loops = np.flatnonzero(a[:, 0] == a[:, 1])
        if loops.size:
            raise GraphFormatError(f"self-loop on node {int(a[loops[0], 0])} (arc #{int(loops[0])})")
        if symmetric:
            a = np.concatenate([a, a[:, ::-1]])
        raw = len(a)
        key = np.unique(a[:, 0] * max(node_count, 1) + a[:, 1])
        src, dst = np.divmod(key, max(node_count, 1))
        dups = raw - len(key)
        if symmetric:
            dups //= 2
        if labels is None:
            labels = tuple(str(i) for i in range(node_count))
        else:
            labels = tuple(str(x) for x in labels)
            if len(labels) != node_count:
                raise ValueError("labels length does not match node_count")
        out_ptr = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=node_count), out=out_ptr[1:])
        order = np.lexsort((src, dst))
        in_ptr = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=node_count), out=in_ptr[1:])
        return cls(
            node_count=node_count,
            out_ptr=out_ptr,
            out_idx=dst.astype(np.int64),
            in_ptr=in_ptr,
            in_idx=src[order].astype(np.int64),
            labels=labels,
            duplicates=int(dups),
        )

    @property
    def arc_count(self) -> int:
        return int(self.out_idx.size)

    def _check(self, v: int) -> int:
        if not 0 <= v < self.node_count:
            raise IndexError(f"node id {v} out of range for graph with {self.node_count} nodes")
        return int(v)

    def successors(self, v: int) -> np.ndarray:
        v = self._check(v)
        return self.out_idx[self.out_ptr[v] : self.out_ptr[v + 1]]

    def predecessors(self, v: int) -> np.ndarray:
        v = self._check(v)
        return self.in_idx[self.in_ptr[v] : self.in_ptr[v + 1]]

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    @property
    def in_degrees(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def arcs(self) -> np.ndarray:
        """``(arc_count, 2)`` array of ``(src, dst)`` in source-major order."""
        src = np.repeat(np.arange(self.node_count, dtype=np.int64), self.out_degrees)
        return np.column_stack([src, self.out_idx])

    def is_symmetric(self) -> bool:
        a = self.arcs()
        n = max(self.node_count, 1)
        fwd = a[:, 0] * n + a[:, 1]
        rev = np.sort(a[:, 1] * n + a[:, 0])
        return bool(np.array_equal(fwd, rev))

    def adjacency(self) -> sp.csr_matrix:
        """Sparse 0/1 matrix with ``A[u, v] = 1`` for each arc ``u -> v``."""
        data = np.ones(self.arc_count, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.out_idx, self.out_ptr), shape=(self.node_count, self.node_count)
        )

    def index(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError:
            raise KeyError(f"unknown node label {label!r}") from None

    @property
    def _label_index(self) -> dict[str, int]:
        cache = self.__dict__.get("_label_cache")
        if cache is None:
            cache = {lab: i for i, lab in enumerate(self.labels)}
            object.__setattr__(self, "_label_cache", cache)
        return cache


@dataclass(frozen=True)
class GroupedGraph:
    graph: Graph
    groups: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[int] = set()
        for name, members in self.groups.items():
            for v in members:
                self.graph._check(v)
                if v in seen:
                    raise ValueError(f"node {v} appears in more than one group (second: {name!r})")
                seen.add(v)


def degree(g: Graph, v: int) -> int:
    """Out-degree of ``v``; the undirected degree on arc-symmetric graphs."""
    v = g._check(v)
    return int(g.out_ptr[v + 1] - g.out_ptr[v])


def _parse_lines(lines):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in _SEP.split(line) if p]
        if len(parts) != 2:
            raise GraphFormatError(f"expected two endpoints, got {raw.rstrip()!r}", lineno)
        yield lineno, parts[0], parts[1]


def parse_edge_list(text: str, undirected: bool = True) -> Graph:
    labels: dict[str, int] = {}
    pairs = []
    for lineno, a, b in _parse_lines(text.splitlines()):
        if a == b:
            raise GraphFormatError(f"self-loop on {a!r}", lineno)
        for x in (a, b):
            if x not in labels:
                labels[x] = len(labels)
        pairs.append((labels[a], labels[b]))
    g = Graph.from_arcs(len(labels), pairs, labels=list(labels), symmetric=undirected)
    if g.duplicates:
        log.info("dropped %d duplicate edge(s)", g.duplicates)
    return g


def load_edge_list(path, undirected: bool = True) -> Graph:
    """Read a ``u v`` / ``u,v`` edge list; labels get indices in order of first appearance."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_edge_list(text, undirected=undirected)


def edge_list_text(g: Graph, undirected: bool = True) -> str:
    """Inverse of :func:`parse_edge_list` preserving label order.

    Isolated nodes cannot be expressed in an edge list and are lost.
    """
    lines = []
    for u, v in g.arcs():
        if undirected and u > v:
            continue
        lines.append(f"{g.labels[u]} {g.labels[v]}")
    return "\n".join(lines) + "\n"


def write_edge_list(g: Graph, path, undirected: bool = True) -> None:
    Path(path).write_text(edge_list_text(g, undirected), encoding="utf-8")


def load_groups(g: Graph, path) -> GroupedGraph:
    """Read a ``node_label,group_label`` CSV (optional header) into a GroupedGraph."""
    groups: dict[str, list[int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise GraphFormatError("expected node_label,group_label", lineno)
            node, grp = row[0].strip(), row[1].strip()
            if lineno == 1 and (node, grp) == ("node_label", "group_label"):
                continue
            try:
                v = g.index(node)
            except KeyError:
                raise GraphFormatError(f"unknown node {node!r}", lineno) from None
            groups.setdefault(grp, []).append(v)
    return GroupedGraph(g, {k: tuple(v) for k, v in groups.items()})


def write_groups(gg: GroupedGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_label", "group_label"])
        for grp, members in gg.groups.items():
            for v in members:
                w.writerow([gg.graph.labels[v], grp])


TOWNS = ("red", "orange", "blue", "green", "pink")


def toy_network() -> GroupedGraph:
    """Five towns of three agents (top/middle/bottom), 31 undirected edges.

    Agents are labelled ``<town initial>_<t|m|b>``.  There are no intra-town
    edges except through the green agents' links listed below.
    """
    names = [f"{town[0]}_{pos}" for town in TOWNS for pos in "tmb"]
    idx = {name: i for i, name in enumerate(names)}
    edges = []
    for r in ("r_t", "r_m", "r_b"):
        for x in ("o_t", "o_m", "o_b", "b_t", "b_m", "b_b"):
            edges.append((r, x))
    edges += [("g_t", x) for x in ("o_t", "o_m", "o_b", "b_t", "b_m")]
    edges += [("g_b", x) for x in ("b_t", "b_m", "b_b", "o_m", "o_b")]
    edges += [("g_m", x) for x in ("p_t", "p_m", "p_b")]
    g = Graph.from_arcs(
        len(names), [(idx[a], idx[b]) for a, b in edges], labels=names, symmetric=True
    )
    groups = {town: tuple(idx[f"{town[0]}_{p}"] for p in "tmb") for town in TOWNS}
    return GroupedGraph(g, groups)
