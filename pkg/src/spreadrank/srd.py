"""Sum of Ranking Differences with permutation (CRRN) and cross-validation checks.

Columns are ranked ascending (rank 1 = smallest value) with fractional
ties.  The SRD of a solution column is the Manhattan distance between its
ranks and the reference column's ranks; normalising divides by the largest
possible footrule distance ``floor(n**2 / 2)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

ALPHA = 0.05
EXACT_MAX_N = 9
NORMAL_MIN_N = 14
MIN_MC_SAMPLES = 10_000
DEFAULT_MC_SAMPLES = 1_000_000


class MatrixFormatError(ValueError):
    pass


@dataclass
class ScoreMatrix:
    row_ids: list[str]
    column_ids: list[str]
    values: np.ndarray
    reference: int = -1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n, m = self.values.shape
        if n < 2:
            raise ValueError("score matrix needs at least two rows")
        if m < 2:
            raise ValueError("score matrix needs a reference and at least one solution column")
        if len(self.row_ids) != n or len(self.column_ids) != m:
            raise ValueError("row/column ids do not match the value shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("score matrix contains non-finite values")
        self.reference = range(m)[self.reference]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def solution_indices(self) -> list[int]:
        return [j for j in range(self.values.shape[1]) if j != self.reference]

    @property
    def solution_ids(self) -> list[str]:
        return [self.column_ids[j] for j in self.solution_indices]

    def subset(self, rows) -> "ScoreMatrix":
        rows = list(rows)
        return ScoreMatrix(
            [self.row_ids[i] for i in rows], self.column_ids, self.values[rows], self.reference
        )

    @classmethod
    def from_csv(cls, text: str, reference="last") -> "ScoreMatrix":
        reader = csv.reader(io.StringIO(text))
        rows = [r for r in reader if r and not r[0].startswith("#")]
        if len(rows) < 3:
            raise MatrixFormatError("matrix CSV needs a header and at least two data rows")
        header = [h.strip() for h in rows[0]]
        cols = header[1:]
        row_ids, values = [], []
        for lineno, r in enumerate(rows[1:], start=2):
            if len(r) != len(header):
                raise MatrixFormatError(f"row {lineno}: expected {len(header)} fields, got {len(r)}")
            row_ids.append(r[0].strip())
            try:
                values.append([float(x.strip().rstrip("%")) for x in r[1:]])
            except ValueError as exc:
                raise MatrixFormatError(f"row {lineno}: {exc}") from None
        return cls(row_ids, cols, np.array(values), _resolve_reference(reference, cols))

    def to_csv(self, sig: int = 6) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row_id", *self.column_ids])
        for rid, row in zip(self.row_ids, self.values):
            w.writerow([rid, *(f"{x:.{sig}g}" for x in row)])
        return buf.getvalue()


def _resolve_reference(reference, cols: list[str]) -> int:
    if reference in (None, "last"):
        return len(cols) - 1
    if reference == "first":
        return 0
    if isinstance(reference, int):
        return range(len(cols))[reference]
    if reference in cols:
        return cols.index(reference)
    try:
        return range(len(cols))[int(reference)]
    except (ValueError, IndexError):
        raise MatrixFormatError(f"reference column {reference!r} not found") from None


def fractional_ranks(column, tie_epsilon: float = 0.0) -> np.ndarray:
    """Ascending ranks where each tie class gets the mean of its positions.

    After sorting, a value joins the previous value's class when the gap
    between them is below ``tie_epsilon`` (exact equality when it is 0), so
    classes can chain.
    """
    x = np.asarray(column, dtype=np.float64)
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    gaps = np.diff(xs)
    if tie_epsilon > 0:
        # guard against binary noise such as 3.275 - 3.271 = 0.00400000000000023
        new_class = gaps >= tie_epsilon * (1 - 1e-9)
    else:
        new_class = gaps > 0
    class_id = np.concatenate([[0], np.cumsum(new_class)])
    pos = np.arange(1, n + 1, dtype=np.float64)
    sums = np.bincount(class_id, weights=pos)
    counts = np.bincount(class_id)
    ranks = np.empty(n)
    ranks[order] = (sums / counts)[class_id]
    return ranks


def has_ties(ranks) -> bool:
    r = np.asarray(ranks)
    return len(np.unique(r)) < len(r)


def max_distance(n: int) -> int:
    """Largest footrule distance between two rankings of 1..n."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return n * n // 2


@dataclass
class NullDistribution:
    """Distribution of SRD between a random permutation and a reference ranking."""

    n: int
    regime: str  # exact | monte_carlo | normal
    values: np.ndarray | None = None  # support (discrete regimes)
    probs: np.ndarray | None = None
    mean: float = 0.0
    var: float = 0.0
    samples: int = 0

    @property
    def max_distance(self) -> int:
        return max_distance(self.n)

    def cdf(self, d: float) -> float:
        """P(D <= d)."""
        if self.regime == "normal":
            return NormalDist(self.mean, math.sqrt(self.var)).cdf(d)
        return float(self.probs[self.values <= d + 1e-9].sum())

    def sf(self, d: float) -> float:
        """P(D >= d)."""
        if self.regime == "normal":
            return 1.0 - self.cdf(d)
        return float(self.probs[self.values >= d - 1e-9].sum())

    def lower_threshold(self, alpha: float = ALPHA) -> float:
        """Boundary below which SRD is significantly better than random.

        For discrete nulls it is the midpoint between the largest support
        value with ``P(D <= v) <= alpha`` and the next support value.
        """
        if self.regime == "normal":
            return NormalDist(self.mean, math.sqrt(self.var)).inv_cdf(alpha)
        cum = np.cumsum(self.probs)
        hi = int(np.searchsorted(cum, alpha + 1e-12, side="right"))
        if hi == 0:
            gap = self.values[1] - self.values[0] if len(self.values) > 1 else 1.0
            return float(self.values[0] - gap / 2)
        if hi >= len(self.values):
            return float(self.values[-1])
        return float((self.values[hi - 1] + self.values[hi]) / 2)

    def upper_threshold(self, alpha: float = ALPHA) -> float:
        if self.regime == "normal":
            return NormalDist(self.mean, math.sqrt(self.var)).inv_cdf(1 - alpha)
        tail = np.cumsum(self.probs[::-1])[::-1]  # P(D >= values[i])
        ok = np.flatnonzero(tail <= alpha + 1e-12)
        if ok.size == 0:
            gap = self.values[-1] - self.values[-2] if len(self.values) > 1 else 1.0
            return float(self.values[-1] + gap / 2)
        lo = ok[0]
        if lo == 0:
            return float(self.values[0])
        return float((self.values[lo - 1] + self.values[lo]) / 2)

    def median(self) -> float:
        if self.regime == "normal":
            return self.mean
        cum = np.cumsum(self.probs)
        return float(self.values[np.searchsorted(cum, 0.5 - 1e-12)])

    def cdf_table(self, points: int = 201) -> list[tuple[float, float, float]]:
        """``(srd, nsrd, P(D <= srd))`` rows for plotting."""
        md = self.max_distance
        if self.regime == "normal":
            grid = np.linspace(0, md, points)
            return [(float(x), float(x / md), self.cdf(x)) for x in grid]
        cum = np.cumsum(self.probs)
        return [(float(v), float(v / md), float(c)) for v, c in zip(self.values, cum)]


def _from_samples(n: int, d: np.ndarray, regime: str) -> NullDistribution:
    # doubled distances are integers: reference ranks are multiples of 1/2
    twice = np.rint(2 * d).astype(np.int64)
    vals, counts = np.unique(twice, return_counts=True)
    probs = counts / counts.sum()
    values = vals / 2.0
    mean = float((values * probs).sum())
    var = float(((values - mean) ** 2 * probs).sum())
    return NullDistribution(n, regime, values, probs, mean, var, int(len(d)))


def exact_null(reference_ranks) -> NullDistribution:
    """Enumerate all n! permutations (n <= 9)."""
    ref = np.asarray(reference_ranks, dtype=np.float64)
    n = len(ref)
    if n > EXACT_MAX_N:
        raise ValueError(f"exact enumeration is limited to n <= {EXACT_MAX_N}")
    perms = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.float64)
    d = np.abs(perms - ref).sum(axis=1)
    return _from_samples(n, d, "exact")


def monte_carlo_null(reference_ranks, samples: int = DEFAULT_MC_SAMPLES, seed: int = 0, chunk: int = 100_000) -> NullDistribution:
    """Sample ``samples`` uniform permutations; chunk ``j`` uses its own Philox stream."""
    if samples < MIN_MC_SAMPLES:
        raise ValueError(f"mc_samples must be >= {MIN_MC_SAMPLES}")
    ref = np.asarray(reference_ranks, dtype=np.float64)
    n = len(ref)
    base = np.arange(1, n + 1, dtype=np.float64)
    out = np.empty(samples)
    for j, start in enumerate(range(0, samples, chunk)):
        c = min(chunk, samples - start)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & (2**64 - 1), j])))
        perms = rng.permuted(np.broadcast_to(base, (c, n)), axis=1)
        out[start : start + c] = np.abs(perms - ref).sum(axis=1)
    return _from_samples(n, out, "monte_carlo")


def normal_null(n: int) -> NullDistribution:
    mean = (n * n - 1) / 3
    var = (n + 1) * (2 * n * n + 7) / 45
    return NullDistribution(n, "normal", mean=mean, var=var)


def null_distribution(reference_ranks, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> NullDistribution:
    """Pick the regime: exact for n <= 9, normal for tie-free n >= 14, sampling otherwise."""
    if mc_samples < MIN_MC_SAMPLES:
        raise ValueError(f"mc_samples must be >= {MIN_MC_SAMPLES}")
    n = len(reference_ranks)
    if n <= EXACT_MAX_N:
        return exact_null(reference_ranks)
    if n >= NORMAL_MIN_N and not has_ties(reference_ranks):
        return normal_null(n)
    return monte_carlo_null(reference_ranks, mc_samples, seed)


@dataclass
class SrdResult:
    solution_ids: list[str]
    srd: np.ndarray
    nsrd: np.ndarray
    ranks: np.ndarray  # (n, m) ranking matrix, columns as in the input
    reference_ranks: np.ndarray
    column_ids: list[str] = field(default_factory=list)
    row_ids: list[str] = field(default_factory=list)
    # filled by crrn()
    null: NullDistribution | None = None
    percentile: np.ndarray | None = None
    verdict: list[str] | None = None
    null_quantiles: dict | None = None

    @property
    def n(self) -> int:
        return len(self.reference_ranks)

    def ranking_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row_id", *self.column_ids])
        for rid, row in zip(self.row_ids, self.ranks):
            w.writerow([rid, *(f"{x:g}" for x in row)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "max_distance": max_distance(self.n),
            "solutions": self.solution_ids,
            "srd": [float(x) for x in self.srd],
            "nsrd": [float(x) for x in self.nsrd],
            "reference_ranks": [float(x) for x in self.reference_ranks],
        }
        if self.null is not None:
            out["crrn"] = {
                "regime": self.null.regime,
                "samples": self.null.samples,
                "null_mean": self.null.mean,
                "null_var": self.null.var,
                "quantiles": self.null_quantiles,
                "percentile": [float(x) for x in self.percentile],
                "verdict": self.verdict,
            }
        return out


def ranking_matrix(matrix: ScoreMatrix, tie_epsilon_reference: float = 0.0, tie_epsilon_solutions: float = 0.0) -> np.ndarray:
    m = matrix.values.shape[1]
    cols = []
    for j in range(m):
        eps = tie_epsilon_reference if j == matrix.reference else tie_epsilon_solutions
        cols.append(fractional_ranks(matrix.values[:, j], eps))
    return np.column_stack(cols)


def srd(matrix: ScoreMatrix, tie_epsilon_reference: float = 0.0, tie_epsilon_solutions: float = 0.0) -> SrdResult:
    ranks = ranking_matrix(matrix, tie_epsilon_reference, tie_epsilon_solutions)
    ref = ranks[:, matrix.reference]
    sol = ranks[:, matrix.solution_indices]
    d = np.abs(sol - ref[:, None]).sum(axis=0)
    return SrdResult(
        solution_ids=matrix.solution_ids,
        srd=d,
        nsrd=d / max_distance(matrix.n),
        ranks=ranks,
        reference_ranks=ref,
        column_ids=list(matrix.column_ids),
        row_ids=list(matrix.row_ids),
    )


VERDICTS = ("better_than_random", "random", "reverse_order")


def crrn(result: SrdResult, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0, alpha: float = ALPHA) -> SrdResult:
    """Locate each SRD in the random-ranking null; completes ``result`` in place.

    ``percentile`` is ``P(D <= srd)``.  The verdict is ``better_than_random``
    when that is at most ``alpha``, ``reverse_order`` when ``P(D >= srd)`` is
    at most ``alpha`` and ``random`` otherwise.
    """
    null = null_distribution(result.reference_ranks, mc_samples, seed)
    md = null.max_distance
    result.null = null
    result.percentile = np.array([null.cdf(x) for x in result.srd])
    result.verdict = []
    for x, pct in zip(result.srd, result.percentile):
        if pct <= alpha:
            result.verdict.append(VERDICTS[0])
        elif null.sf(x) <= alpha:
            result.verdict.append(VERDICTS[2])
        else:
            result.verdict.append(VERDICTS[1])
    result.null_quantiles = {
        "xx1": null.lower_threshold(alpha) / md,
        "median": null.median() / md,
        "xx19": null.upper_threshold(alpha) / md,
    }
    return result


@dataclass
class WilcoxonResult:
    p_value: float
    statistic: float
    n_nonzero: int
    note: str = ""


def _signed_rank_counts(twice_ranks: np.ndarray) -> np.ndarray:
    # counts[s] = number of sign patterns whose positive doubled-rank sum is s
    counts = np.zeros(int(twice_ranks.sum()) + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in twice_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: len(counts) - r]
        counts += shifted
    return counts


def wilcoxon_signed_rank(a, b, exact_max: int = 25, min_pairs: int = 5) -> WilcoxonResult:
    """Two-sided Wilcoxon matched-pair signed-rank test.

    Zero differences are dropped.  With fewer than ``min_pairs`` left the
    test is not run and ``p = 1``.  Up to ``exact_max`` pairs the p-value is
    exact (all sign patterns, by convolution), above that a tie-corrected
    normal approximation is used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("wilcoxon_signed_rank: length mismatch")
    d = a - b
    d = d[np.abs(d) > 1e-12]
    k = len(d)
    if k < min_pairs:
        return WilcoxonResult(1.0, 0.0, k, "too few pairs")
    r = fractional_ranks(np.abs(d))
    w_plus = float(r[d > 0].sum())
    w_minus = float(r[d < 0].sum())
    w = min(w_plus, w_minus)
    if k <= exact_max:
        twice = np.rint(2 * r).astype(np.int64)
        counts = _signed_rank_counts(twice)
        p = 2.0 * counts[: int(round(2 * w)) + 1].sum() / 2.0**k
        return WilcoxonResult(min(1.0, p), w, k, "exact")
    mean = k * (k + 1) / 4
    _, tie_counts = np.unique(r, return_counts=True)
    var = k * (k + 1) * (2 * k + 1) / 24 - ((tie_counts**3 - tie_counts).sum()) / 48
    z = (w - mean) / math.sqrt(var)
    return WilcoxonResult(min(1.0, 2.0 * NormalDist().cdf(z)), w, k, "normal")


@dataclass
class CvResult:
    solution_ids: list[str]
    fold_rows: list[list[int]]  # rows left out in each fold
    fold_nsrd: np.ndarray  # (folds, solutions)
    wilcoxon_p: np.ndarray
    order: list[int]  # solution indices sorted by median nsrd
    alpha: float = ALPHA

    @property
    def median(self) -> np.ndarray:
        return np.median(self.fold_nsrd, axis=0)

    def summary(self) -> dict[str, dict]:
        q1, med, q3 = np.percentile(self.fold_nsrd, [25, 50, 75], axis=0)
        lo, hi = self.fold_nsrd.min(axis=0), self.fold_nsrd.max(axis=0)
        return {
            sid: {"min": lo[j], "q1": q1[j], "median": med[j], "q3": q3[j], "max": hi[j]}
            for j, sid in enumerate(self.solution_ids)
        }

    def not_different(self, i: int, j: int) -> bool:
        return bool(self.wilcoxon_p[i, j] >= self.alpha)

    def groups(self) -> list[dict]:
        """Solutions by median nSRD; ``tilde_next`` flags an insignificant gap to the next one."""
        out = []
        for pos, j in enumerate(self.order):
            nxt = self.order[pos + 1] if pos + 1 < len(self.order) else None
            out.append(
                {
                    "solution": self.solution_ids[j],
                    "median_nsrd": float(self.median[j]),
                    "rank": pos + 1,
                    "tilde_next": nxt is not None and self.not_different(j, nxt),
                }
            )
        return out

    def grouped_ranks(self) -> np.ndarray:
        """Median-order ranks where each chain of ``~``-linked neighbours shares its mean rank."""
        ranks = np.empty(len(self.order))
        start = 0
        for pos in range(len(self.order)):
            last = pos + 1 == len(self.order) or not self.not_different(self.order[pos], self.order[pos + 1])
            if last:
                ranks[self.order[start : pos + 1]] = (start + 1 + pos + 1) / 2
                start = pos + 1
        return ranks

    def to_dict(self) -> dict:
        return {
            "solutions": self.solution_ids,
            "folds": len(self.fold_rows),
            "left_out_rows": self.fold_rows,
            "fold_nsrd": self.fold_nsrd.tolist(),
            "summary": {k: {s: float(v) for s, v in d.items()} for k, d in self.summary().items()},
            "wilcoxon_p": self.wilcoxon_p.tolist(),
            "groups": self.groups(),
            "grouped_ranks": self.grouped_ranks().tolist(),
        }


def cv_folds(n: int, folds: int, seed: int) -> list[list[int]]:
    """Rows left out per fold: leave-one-out for n <= 7, else ``ceil(n/folds)`` random rows each."""
    if n < 4:
        raise ValueError("cross-validation needs at least 4 rows")
    if n <= 7:
        return [[i] for i in range(n)]
    if folds < 2 or folds > n:
        raise ValueError(f"folds must lie in [2, {n}]")
    k = math.ceil(n / folds)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed & (2**64 - 1))))
    return [sorted(int(x) for x in rng.choice(n, size=k, replace=False)) for _ in range(folds)]


def cross_validate(
    matrix: ScoreMatrix,
    folds: int = 8,
    seed: int = 0,
    tie_epsilon_reference: float = 0.0,
    tie_epsilon_solutions: float = 0.0,
    alpha: float = ALPHA,
) -> CvResult:
    if matrix.n > 7 and folds > matrix.n:
        raise ValueError(f"folds ({folds}) exceed the number of rows ({matrix.n})")
    left_out = cv_folds(matrix.n, folds, seed)
    vals = []
    for out in left_out:
        keep = [i for i in range(matrix.n) if i not in set(out)]
        res = srd(matrix.subset(keep), tie_epsilon_reference, tie_epsilon_solutions)
        vals.append(res.nsrd)
    fold_nsrd = np.array(vals)
    s = fold_nsrd.shape[1]
    p = np.ones((s, s))
    for i, j in itertools.combinations(range(s), 2):
        p[i, j] = p[j, i] = wilcoxon_signed_rank(fold_nsrd[:, i], fold_nsrd[:, j]).p_value
    med = np.median(fold_nsrd, axis=0)
    order = sorted(range(s), key=lambda j: (med[j], j))
    return CvResult(matrix.solution_ids, left_out, fold_nsrd, p, order, alpha)
