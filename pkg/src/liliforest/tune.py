"""Grid sweeps over (min_leaf, n_trees) and the selection rule.

Shrinking leaves or adding trees tightens the co-leaf requirement: more,
smaller clusters and fewer retained instances. The sweep records both
indices per grid point; selection keeps configurations retaining enough
instances and maximizes the cluster count among them.
"""

import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .data import ground_truth_ate
from .estimate import overall_ate
from .forest import derive_seed, fit_forest
from .lili import ToleranceFn, cluster, coleaf_counts, prune_single_group, tolerance_threshold
from .tree import TreeParams


@dataclass(frozen=True)
class SweepRecord:
    min_leaf: int
    n_trees: int
    tolerance: str
    available_fraction: float
    cluster_count: int
    estimated_ate: float
    l1_loss: Optional[float]
    wall_time: float
    failure: Optional[str] = None


@dataclass(frozen=True)
class Selection:
    min_leaf: int
    n_trees: int
    warning: bool


def sweep(dataset, min_leaf_grid: Sequence[int], n_trees_grid: Sequence[int],
          tolerance: ToleranceFn, master_seed: int, *,
          random_split_prob: float = 0.1, subsample_ratio: float = 0.8,
          order: Optional[np.ndarray] = None) -> List[SweepRecord]:
    """One record per (min_leaf, n_trees) grid point, refitting the forest
    with a seed derived from the point's position.

    Infeasible points (a forced split could not leave min_leaf per child)
    and degenerate clusterings are recorded with a failure tag instead of
    aborting the sweep. When the dataset carries counterfactual outcomes
    the record includes the absolute ATE error.
    """
    if not len(min_leaf_grid) or not len(n_trees_grid):
        raise ValueError("grids must be nonempty")
    truth = None
    if dataset.counterfactual_outcome is not None:
        truth = ground_truth_ate(dataset, mode="mean")
    s_n = int(round(subsample_ratio * dataset.n))
    records = []
    point = 0
    for min_leaf in min_leaf_grid:
        for n_trees in n_trees_grid:
            seed = derive_seed(master_seed, point)
            point += 1
            start = time.perf_counter()
            if 2 * min_leaf - 1 > s_n:
                records.append(SweepRecord(
                    min_leaf=min_leaf, n_trees=n_trees, tolerance=tolerance.tag,
                    available_fraction=0.0, cluster_count=0,
                    estimated_ate=float("nan"), l1_loss=None,
                    wall_time=time.perf_counter() - start,
                    failure="infeasible: 2*min_leaf-1 exceeds subsample",
                ))
                continue
            params = TreeParams(min_leaf=min_leaf,
                                random_split_prob=random_split_prob,
                                subsample_ratio=subsample_ratio)
            forest = fit_forest(dataset, n_trees, params, seed)
            counts = coleaf_counts(forest, dataset)
            threshold = tolerance_threshold(n_trees, tolerance)
            clustering = prune_single_group(
                cluster(counts, threshold, order), dataset.treatment)
            if not clustering.clusters:
                records.append(SweepRecord(
                    min_leaf=min_leaf, n_trees=n_trees, tolerance=tolerance.tag,
                    available_fraction=0.0, cluster_count=0,
                    estimated_ate=float("nan"), l1_loss=None,
                    wall_time=time.perf_counter() - start,
                    failure="no cluster holds both treatment groups",
                ))
                continue
            ate, report = overall_ate(clustering, dataset)
            records.append(SweepRecord(
                min_leaf=min_leaf, n_trees=n_trees, tolerance=tolerance.tag,
                available_fraction=report.available_fraction,
                cluster_count=report.cluster_count,
                estimated_ate=ate,
                l1_loss=None if truth is None else abs(ate - truth),
                wall_time=time.perf_counter() - start,
            ))
    return records


def select(records: Sequence[SweepRecord], min_available: float = 0.8) -> Selection:
    """Pick (min_leaf, n_trees) from sweep records.

    Among records retaining at least ``min_available`` of the instances,
    the one with the most clusters wins; ties prefer fewer trees, then a
    larger leaf. When nothing qualifies, the record with the highest
    available fraction is returned with a warning flag.
    """
    if not records:
        raise ValueError("no sweep records")
    usable = [r for r in records if r.failure is None]
    if not usable:
        raise ValueError("every sweep record failed")
    qualifying = [r for r in usable if r.available_fraction >= min_available]
    if qualifying:
        best = max(qualifying,
                   key=lambda r: (r.cluster_count, -r.n_trees, r.min_leaf))
        return Selection(min_leaf=best.min_leaf, n_trees=best.n_trees, warning=False)
    best = max(usable,
               key=lambda r: (r.available_fraction, -r.n_trees, r.min_leaf))
    return Selection(min_leaf=best.min_leaf, n_trees=best.n_trees, warning=True)
