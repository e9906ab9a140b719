"""Forest of independently fitted causal trees and the baseline estimator.

The baseline predicts a per-instance effect by averaging, over trees, the
within-leaf treated/control outcome contrast of the leaf holding the
instance; the forest ATE averages those per-instance effects. Leaves that
miss one group contribute nothing (they are skipped, not zero-filled).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .tree import CausalTree, TreeParams, assign_leaf, assign_leaves, dump_tree, fit_tree

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(master_seed: int, index: int) -> int:
    """Splitmix-style expansion of a master seed by index; identical on
    every platform, so runs are reproducible bit for bit."""
    z = (master_seed & _MASK64) + ((index + 1) * _GOLDEN & _MASK64)
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class Forest:
    trees: Tuple[CausalTree, ...]
    params: TreeParams
    n_trees: int
    master_seed: int


def fit_forest(dataset, n_trees: int, params: TreeParams, master_seed: int) -> Forest:
    """Fit n_trees independent trees, each on its own subsample with its
    own derived seed."""
    if n_trees < 1:
        raise ValueError("a forest needs at least one tree")
    trees = tuple(
        fit_tree(dataset, params, derive_seed(master_seed, i)) for i in range(n_trees)
    )
    return Forest(trees=trees, params=params, n_trees=n_trees, master_seed=master_seed)


def _leaf_effects(tree: CausalTree, dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Per-leaf treated-minus-control mean outcome over the whole dataset.

    Returns (effect[leaf], defined[leaf]); a leaf is undefined when either
    group is empty in it.
    """
    ids = assign_leaves(tree, dataset.covariates)
    nl = tree.n_leaves
    treated = dataset.treatment == 1
    y = dataset.outcome
    cnt_t = np.bincount(ids[treated], minlength=nl)
    cnt_c = np.bincount(ids[~treated], minlength=nl)
    sum_t = np.bincount(ids[treated], weights=y[treated], minlength=nl)
    sum_c = np.bincount(ids[~treated], weights=y[~treated], minlength=nl)
    defined = (cnt_t > 0) & (cnt_c > 0)
    effect = np.full(nl, np.nan)
    effect[defined] = sum_t[defined] / cnt_t[defined] - sum_c[defined] / cnt_c[defined]
    return effect, defined


def tree_ite(forest: Forest, tree_index: int, x, dataset) -> Optional[float]:
    """Effect predicted by one tree for covariates x, or None when the
    leaf holding x misses a treatment group."""
    if not 0 <= tree_index < forest.n_trees:
        raise ValueError(f"tree index out of range: {tree_index}")
    tree = forest.trees[tree_index]
    leaf = assign_leaf(tree, x)
    effect, defined = _leaf_effects(tree, dataset)
    if not defined[leaf]:
        return None
    return float(effect[leaf])


def forest_ites(forest: Forest, dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Per-instance effect averaged over the trees defining it.

    Returns (ites, defined); trees are reduced in index order so the
    result does not depend on evaluation scheduling. Instances undefined
    in every tree carry NaN.
    """
    n = dataset.n
    total = np.zeros(n)
    hits = np.zeros(n, dtype=np.int64)
    for tree in forest.trees:
        effect, defined = _leaf_effects(tree, dataset)
        ids = assign_leaves(tree, dataset.covariates)
        ok = defined[ids]
        total[ok] += effect[ids[ok]]
        hits[ok] += 1
    defined = hits > 0
    ites = np.full(n, np.nan)
    ites[defined] = total[defined] / hits[defined]
    return ites, defined


def forest_ate(forest: Forest, dataset) -> float:
    """Mean per-instance effect over instances defined in at least one
    tree."""
    ites, defined = forest_ites(forest, dataset)
    if not defined.any():
        raise ValueError("no (instance, tree) pair has both groups in a leaf")
    return float(ites[defined].mean())


def dump_forest(forest: Forest) -> str:
    """Plain-text dump: a parameter header followed by each tree's dump."""
    p = forest.params
    lines = [
        f"forest trees={forest.n_trees} master_seed={forest.master_seed} "
        f"min_leaf={p.min_leaf} alpha={p.alpha!r} "
        f"random_split_prob={p.random_split_prob!r} "
        f"subsample_ratio={p.subsample_ratio!r} honesty={int(p.honesty)}"
    ]
    for i, tree in enumerate(forest.trees):
        lines.append(f"=== tree {i} seed={derive_seed(forest.master_seed, i)}")
        lines.append(dump_tree(tree).rstrip("\n"))
    return "\n".join(lines) + "\n"
