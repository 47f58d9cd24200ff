"""File formats shared by the CLI and the experiment report."""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .centrality import CentralityVector
from .diffusion import SeedSet
from .graph import Graph


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dump_json(obj) -> str:
    # repr-based float formatting keeps full binary64 precision
    return json.dumps(obj, indent=2, default=_default) + "\n"


def centrality_csv(g: Graph, vec: CentralityVector) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_label", "score"])
    for lab, s in zip(g.labels, vec.scores):
        w.writerow([lab, f"{s:.6g}"])
    return buf.getvalue()


def centrality_wide_csv(g: Graph, vectors: list[CentralityVector]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_label", *(v.measure for v in vectors)])
    for i, lab in enumerate(g.labels):
        w.writerow([lab, *(f"{v.scores[i]:.6g}" for v in vectors)])
    return buf.getvalue()


def cdf_csv(null) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["srd", "nsrd", "cdf"])
    if null is not None:
        for d, nd, c in null.cdf_table():
            w.writerow([f"{d:g}", f"{nd:.6g}", f"{c:.6g}"])
    return buf.getvalue()


def seed_sets_json(g: Graph, sets: list[SeedSet]) -> str:
    return dump_json([{"id": s.id, "members": [g.labels[v] for v in s.members]} for s in sets])


def load_seed_sets(g: Graph, path) -> list[SeedSet]:
    """Read a JSON array of ``{"id": ..., "members": [labels]}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("seed-set file must hold a JSON array")
    sets = []
    for i, item in enumerate(data):
        try:
            sid, members = str(item["id"]), item["members"]
        except (KeyError, TypeError):
            raise ValueError(f"seed set #{i}: expected an object with 'id' and 'members'") from None
        sets.append(SeedSet(sid, tuple(g.index(str(m)) for m in members)))
    return sets


def write_files(out_dir, files: dict[str, str]) -> list[Path]:
    """Write every file or none: stage in a temp dir, then rename into place."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        for name, text in files.items():
            (stage / name).write_text(text, encoding="utf-8")
        written = []
        for name in files:
            os.replace(stage / name, out / name)
            written.append(out / name)
        return written
    finally:
        shutil.rmtree(stage, ignore_errors=True)
