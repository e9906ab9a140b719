"""Leaf co-occurrence counting, tolerance thresholds and greedy clustering.

Two instances are cluster mates when at least ``threshold`` of the K trees
place them in the same leaf, where the threshold is the smallest integer
exceeding K - f(K) for a tolerance function f. Clusters are extracted
greedily in a traversal order: each unassigned seed absorbs every
still-unassigned mate, and clusters holding only one treatment group are
abandoned afterwards.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Mapping, Optional, Sequence, Union

import numpy as np

from ._kernels import accumulate_coleaf
from .tree import assign_leaves

_EPS = 1e-9
_TREND_TOL = 1e-3  # slope tolerance per grid doubling in regime_classify


@dataclass(frozen=True)
class CoLeafCounts:
    """Symmetric n x n matrix; entry (i, j) counts the trees grouping
    instances i and j into one leaf, so the diagonal equals n_trees."""

    counts: np.ndarray
    n_trees: int


def coleaf_counts(forest, dataset) -> CoLeafCounts:
    """Count co-leaf trees for every instance pair.

    Every dataset instance is routed into each tree's leaves (interval
    membership, regardless of subsample membership) and pairs are
    accumulated leaf by leaf, costing sum(|leaf|^2) per tree rather than
    a pair-times-tree sweep.
    """
    n = dataset.n
    if forest.n_trees > np.iinfo(np.uint16).max:
        raise ValueError("co-leaf counts store at most 65535 trees")
    counts = np.zeros((n, n), dtype=np.uint16)
    for tree in forest.trees:
        ids = assign_leaves(tree, dataset.covariates)
        order = np.argsort(ids, kind="stable").astype(np.int64)
        sorted_ids = ids[order]
        boundaries = np.flatnonzero(sorted_ids[1:] != sorted_ids[:-1]) + 1
        offsets = np.concatenate(([0], boundaries, [n])).astype(np.int64)
        accumulate_coleaf(counts, order, offsets)
    return CoLeafCounts(counts=counts, n_trees=forest.n_trees)


def save_coleaf_counts(coleaf: CoLeafCounts, path, fmt: str = "triplets") -> None:
    """Write counts for offline inspection.

    ``triplets`` emits ``i,j,count`` for the upper triangle's nonzero
    entries; ``dense`` emits the full matrix as CSV rows.
    """
    counts = coleaf.counts
    with open(path, "w", newline="") as fh:
        if fmt == "triplets":
            fh.write("i,j,count\n")
            iu, ju = np.triu_indices(counts.shape[0], k=1)
            vals = counts[iu, ju]
            nz = vals > 0
            for i, j, c in zip(iu[nz], ju[nz], vals[nz]):
                fh.write(f"{i},{j},{c}\n")
        elif fmt == "dense":
            for row in counts:
                fh.write(",".join(str(int(v)) for v in row) + "\n")
        else:
            raise ValueError(f"unknown format: {fmt}")


@dataclass(frozen=True)
class ToleranceFn:
    """Tolerance function f(K): the number of trees allowed to disagree.

    Kinds: ``sqrt`` (f = sqrt(K)), ``constant`` (f = C), ``gap``
    (f = K - C, i.e. a fixed co-leaf requirement) and ``table`` (explicit
    K -> f(K) lookup). Values must satisfy 0 < f(K) < K.
    """

    kind: str = "sqrt"
    constant: Optional[float] = None
    table: Optional[Mapping[int, float]] = None

    def __post_init__(self):
        if self.kind not in ("sqrt", "constant", "gap", "table"):
            raise ValueError(f"unknown tolerance kind: {self.kind}")
        if self.kind in ("constant", "gap") and self.constant is None:
            raise ValueError(f"tolerance kind {self.kind} needs a constant")
        if self.kind == "table" and not self.table:
            raise ValueError("tolerance kind table needs a (K, f(K)) mapping")

    def __call__(self, n_trees: int) -> float:
        if self.kind == "sqrt":
            value = math.sqrt(n_trees)
        elif self.kind == "constant":
            value = float(self.constant)
        elif self.kind == "gap":
            value = n_trees - float(self.constant)
        else:
            if n_trees not in self.table:
                raise ValueError(f"tolerance table has no entry for K={n_trees}")
            value = float(self.table[n_trees])
        if not 0.0 < value < n_trees:
            raise ValueError(
                f"tolerance f({n_trees})={value!r} outside (0, {n_trees})"
            )
        return value

    @property
    def tag(self) -> str:
        if self.kind == "sqrt":
            return "sqrt"
        if self.kind == "constant":
            return f"const:{self.constant:g}"
        if self.kind == "gap":
            return f"gap:{self.constant:g}"
        return "table"

    @classmethod
    def parse(cls, text: str) -> "ToleranceFn":
        """Parse ``sqrt``, ``const:C`` or ``gap:C``."""
        text = text.strip()
        if text == "sqrt":
            return cls(kind="sqrt")
        for prefix, kind in (("const:", "constant"), ("gap:", "gap")):
            if text.startswith(prefix):
                return cls(kind=kind, constant=float(text[len(prefix):]))
        raise ValueError(f"cannot parse tolerance function: {text!r}")


def tolerance_threshold(n_trees: int, f: Union[ToleranceFn, Callable[[int], float]]) -> int:
    """Smallest integer count m with m > K - f(K); a pair is a cluster
    mate exactly when its co-leaf count reaches m."""
    cut = n_trees - f(n_trees)
    nearest = round(cut)
    if abs(cut - nearest) < _EPS:
        return int(nearest) + 1
    return int(math.floor(cut)) + 1


def lili_member(counts: CoLeafCounts, i: int, j: int, threshold: int) -> bool:
    """Whether instances i and j co-leaf in at least ``threshold`` trees."""
    return bool(counts.counts[i, j] >= threshold)


def lsli_member(counts: CoLeafCounts, i: int, j: int) -> bool:
    """Looser dual membership: i and j need only co-leaf in
    K - floor(K - sqrt(K)) trees. Diagnostic; far too permissive for
    estimation."""
    K = counts.n_trees
    m_max = int(math.floor(K - math.sqrt(K) + _EPS))
    return bool(counts.counts[i, j] >= K - m_max)


@dataclass(frozen=True)
class RawClustering:
    """Greedy clusters before single-group pruning."""

    clusters: List[np.ndarray]
    threshold: int
    traversal_order: np.ndarray
    n: int


@dataclass(frozen=True)
class Clustering:
    """Disjoint retained clusters plus the abandoned instance set.

    Retained clusters contain both treatment groups; their sizes sum to
    the retained count n' used as the weight denominator downstream.
    """

    clusters: List[np.ndarray]
    abandoned: np.ndarray
    threshold: int
    traversal_order: np.ndarray
    n: int

    @property
    def retained_count(self) -> int:
        return int(sum(c.size for c in self.clusters))

    @property
    def available_fraction(self) -> float:
        return self.retained_count / self.n if self.n else 0.0


def cluster(counts: CoLeafCounts, threshold: int,
            order: Optional[Sequence[int]] = None) -> RawClustering:
    """Greedy cluster extraction in traversal order.

    The next unassigned instance seeds a cluster holding itself and every
    still-unassigned instance whose co-leaf count with the seed reaches
    the threshold; all of them leave the pool. Deterministic given order
    (default: row order).
    """
    n = counts.counts.shape[0]
    if order is None:
        order = np.arange(n)
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("order must be a permutation of 0..n-1")
    assigned = np.zeros(n, dtype=bool)
    clusters = []
    mat = counts.counts
    for seed in order:
        if assigned[seed]:
            continue
        mates = (mat[seed] >= threshold) & ~assigned
        mates[seed] = True
        idx = np.flatnonzero(mates)
        assigned[idx] = True
        clusters.append(idx)
    return RawClustering(clusters=clusters, threshold=int(threshold),
                         traversal_order=order, n=n)


def prune_single_group(raw: RawClustering, treatment: np.ndarray) -> Clustering:
    """Move clusters holding only one treatment group (singletons
    included) wholesale into the abandoned set."""
    treatment = np.asarray(treatment)
    kept, dropped = [], []
    for c in raw.clusters:
        t = treatment[c]
        if (t == 1).any() and (t == 0).any():
            kept.append(c)
        else:
            dropped.append(c)
    abandoned = (
        np.sort(np.concatenate(dropped)) if dropped else np.empty(0, dtype=np.int64)
    )
    return Clustering(clusters=kept, abandoned=abandoned, threshold=raw.threshold,
                      traversal_order=raw.traversal_order, n=raw.n)


def overlap_rate(counts: CoLeafCounts, threshold: int, *,
                 max_exact: int = 2000, pair_samples: int = 200_000,
                 seed: int = 0) -> float:
    """Fraction of non-mate pairs bridged by a common mate.

    Uses raw pairwise membership (no greedy removal). Exact over all
    unordered pairs up to ``max_exact`` instances, otherwise estimated
    from sampled pairs. Returns 0.0 when every pair is already a mate.
    """
    mat = counts.counts >= threshold
    n = mat.shape[0]
    if n <= max_exact:
        m = mat.astype(np.float32)
        bridged = (m @ m) > 0.5
        iu, ju = np.triu_indices(n, k=1)
        non_mate = ~mat[iu, ju]
        denom = int(non_mate.sum())
        if denom == 0:
            return 0.0
        return float((bridged[iu, ju] & non_mate).sum() / denom)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, pair_samples)
    j = rng.integers(0, n, pair_samples)
    keep = i != j
    i, j = i[keep], j[keep]
    non_mate = ~mat[i, j]
    i, j = i[non_mate], j[non_mate]
    denom = i.size
    if denom == 0:
        return 0.0
    hits = 0
    step = 4096
    for s in range(0, denom, step):
        hits += int((mat[i[s:s + step]] & mat[j[s:s + step]]).any(axis=1).sum())
    return float(hits / denom)


def _tail_steps(values: np.ndarray, grid: np.ndarray):
    """Last half of the per-step (delta, doublings, level) triples."""
    doublings = np.diff(np.log2(grid))
    deltas = np.diff(values)
    n_tail = max(2, deltas.size // 2)
    return deltas[-n_tail:], doublings[-n_tail:], values[-n_tail - 1:-1]


def _tail_decreasing(values, grid) -> bool:
    deltas, w, level = _tail_steps(values, grid)
    return bool(np.all(deltas <= _TREND_TOL * w * np.maximum(1.0, np.abs(level))))


def _tail_vanishing(values, grid) -> bool:
    if not _tail_decreasing(values, grid):
        return False
    deltas, w, level = _tail_steps(values, grid)
    tail = values[-deltas.size - 1:]
    if np.any(tail <= 0.0):
        return True
    ratios = tail[1:] / tail[:-1]
    return bool(np.all(ratios <= 1.0 - _TREND_TOL * w))


def _tail_diverging(values, grid) -> bool:
    deltas, w, level = _tail_steps(values, grid)
    growing = np.all(deltas >= _TREND_TOL * w * np.maximum(1.0, np.abs(level)))
    return bool(growing and values[-1] > values[0])


def regime_classify(f: ToleranceFn, p: float, K_grid: Sequence[int]) -> str:
    """Classify a tolerance function as permitted, forbidden or
    indeterminate for clustering, given a co-leaf probability level p.

    Numeric trend detection over the grid: permitted when f(K) ln K / K
    trends down below -ln p (or, for p < 0.5, when f(K)/K vanishes);
    forbidden when (K - f(K)) / ln K vanishes (or, for p > 0.5, when
    K / ((K - f(K)) 2^(K - f(K))) diverges); otherwise indeterminate.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    grid = np.asarray(list(K_grid), dtype=np.float64)
    if grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ValueError("K_grid must be increasing with at least 3 entries")
    fvals = np.array([f(int(k)) for k in K_grid], dtype=np.float64)
    ln_k = np.log(grid)
    shrink = fvals * ln_k / grid
    if _tail_decreasing(shrink, grid) and shrink[-1] < -math.log(p):
        return "permitted"
    if p < 0.5 and _tail_vanishing(fvals / grid, grid):
        return "permitted"
    slack = (grid - fvals) / ln_k
    if _tail_vanishing(slack, grid):
        return "forbidden"
    if p > 0.5:
        log2_blow = np.log2(grid) - np.log2(grid - fvals) - (grid - fvals)
        if _tail_diverging(log2_blow, grid):
            return "forbidden"
    return "indeterminate"
