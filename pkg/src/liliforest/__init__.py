"""Causal forest with leaf-co-occurrence (LILI) clustering.

Pipeline: fit a forest of subsampled causal trees, count per-pair co-leaf
trees, cluster instances that co-leaf in more than K - f(K) trees, prune
clusters missing a treatment group, then estimate cluster and overall
treatment effects.
"""

from ._kernels import BACKEND
from .data import (CsvSchema, Dataset, SyntheticSpec, TwinPairs, generate_synthetic,
                   ground_truth_ate, load_csv, pair_twins, preprocess)
from .estimate import (ClusterStats, EstimateReport, cluster_ate, cluster_diameter,
                       estimated_cdf, instance_ite, l1_ate_loss, overall_ate, pehe)
from .forest import Forest, derive_seed, dump_forest, fit_forest, forest_ate, forest_ites, tree_ite
from .lili import (Clustering, CoLeafCounts, RawClustering, ToleranceFn, cluster,
                   coleaf_counts, lili_member, lsli_member, overlap_rate,
                   prune_single_group, regime_classify, save_coleaf_counts,
                   tolerance_threshold)
from .tree import (CausalTree, TreeParams, assign_leaf, assign_leaves, depth_bound,
                   dump_tree, fit_tree, leaf_box)
from .tune import Selection, SweepRecord, select, sweep

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CausalTree", "Clustering", "ClusterStats", "CoLeafCounts", "CsvSchema",
    "Dataset", "EstimateReport", "Forest", "RawClustering", "Selection",
    "SweepRecord", "SyntheticSpec", "ToleranceFn", "TreeParams", "TwinPairs",
    "assign_leaf", "assign_leaves", "cluster", "cluster_ate", "cluster_diameter",
    "coleaf_counts", "depth_bound", "derive_seed", "dump_forest", "dump_tree",
    "estimated_cdf", "fit_forest", "fit_tree", "forest_ate", "forest_ites",
    "generate_synthetic", "ground_truth_ate", "instance_ite", "l1_ate_loss",
    "leaf_box", "lili_member", "load_csv", "lsli_member", "overall_ate",
    "overlap_rate", "pair_twins", "pehe", "preprocess", "prune_single_group",
    "regime_classify", "save_coleaf_counts", "select", "sweep", "tolerance_threshold",
    "tree_ite",
]
