"""Single causal tree: subsampled, alpha-regular, variance-criterion splits.

Construction follows four rules: the tree is fitted on a subsample; with a
fixed probability each node's split feature is forced uniformly at random
(otherwise the globally best cut wins); both children of every split keep
at least max(min_leaf, ceil(alpha * s_n)) fitting instances; and a node
becomes a leaf once its size is at most 2*min_leaf - 1 or no admissible
cut exists. Optional honesty fits the structure on one half of the
subsample and records leaf members from the other half.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import assign_all as _assign_all_kernel
from ._kernels import scan_split

_EPS = 1e-9


@dataclass(frozen=True)
class TreeParams:
    """Construction knobs shared by every tree of a forest.

    ``alpha`` is the minimum child fraction of the subsample; when None it
    defaults to min(0.2, min_leaf / s_n) at fit time. ``random_split_prob``
    is the probability mass spent forcing a uniformly random split feature,
    which bounds every feature's selection probability below by
    random_split_prob / d.
    """

    min_leaf: int
    alpha: Optional[float] = None
    random_split_prob: float = 0.1
    subsample_ratio: float = 0.8
    honesty: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if self.alpha is not None and not 0.0 < self.alpha <= 0.2:
            raise ValueError("alpha must lie in (0, 0.2]")
        if not 0.0 < self.random_split_prob < 1.0:
            raise ValueError("random_split_prob must lie in (0, 1)")
        if not 0.0 < self.subsample_ratio <= 1.0:
            raise ValueError("subsample_ratio must lie in (0, 1]")


@dataclass
class CausalTree:
    """Fitted tree as parallel node arrays plus per-leaf member lists.

    ``feature[i] < 0`` marks node i as a leaf and ``leaf_ordinal[i]`` gives
    its leaf id. ``leaf_members`` holds dataset indices of the fitting
    sample per leaf (the estimation half under honesty);
    ``leaf_fit_counts`` holds the structure-half sizes the stopping rules
    saw. Trees are immutable once fitted.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    node_depth: np.ndarray
    node_size: np.ndarray
    leaf_ordinal: np.ndarray
    leaf_members: tuple
    leaf_fit_counts: np.ndarray
    leaf_degenerate: np.ndarray
    leaf_depth: np.ndarray
    n_features: int
    s_n: int
    min_child: int
    alpha: float
    params: TreeParams
    subsample: np.ndarray
    _boxes: Optional[list] = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_members)


def depth_bound(alpha: float) -> int:
    """Largest leaf depth reachable when every child keeps an alpha
    fraction of the subsample: ceil(ln(alpha) / ln(1 - alpha))."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    ratio = math.log(alpha) / math.log(1.0 - alpha)
    return int(math.ceil(ratio - _EPS))


def _find_split(Xn, yn, min_child, forced_feature):
    """Best (feature, value) cut of a node, or None.

    Candidate values are midpoints between consecutive distinct sorted
    values. Ties resolve to the lowest feature index, then the smallest
    value. When the forced feature admits no cut, the global best is used.
    """
    d = Xn.shape[1]

    def scan(j):
        order = np.argsort(Xn[:, j], kind="stable")
        xs = np.ascontiguousarray(Xn[order, j])
        ys = np.ascontiguousarray(yn[order])
        k, sse = scan_split(xs, ys, min_child)
        if k < 0:
            return None
        a = xs[k - 1]
        b = xs[k]
        value = a + (b - a) / 2.0
        if value >= b:  # adjacent floats: keep the cut left of b
            value = a
        return sse, j, float(value)

    if forced_feature >= 0:
        hit = scan(forced_feature)
        if hit is not None:
            return hit[1], hit[2]
    best = None
    for j in range(d):
        hit = scan(j)
        if hit is not None and (best is None or hit[0] < best[0]):
            best = hit
    if best is None:
        return None
    return best[1], best[2]


def fit_tree(dataset, params: TreeParams, seed: Optional[int] = None) -> CausalTree:
    """Fit one causal tree on a fresh subsample.

    Deterministic for fixed (dataset, params, seed); ``seed`` defaults to
    ``params.seed``.
    """
    X = dataset.covariates
    y = dataset.outcome
    n, d = X.shape
    rng = np.random.default_rng(params.seed if seed is None else seed)
    s_n = int(round(params.subsample_ratio * n))
    if s_n < 1:
        raise ValueError("subsample is empty: subsample_ratio * n rounds below 1")
    subsample = np.sort(rng.choice(n, size=s_n, replace=False))
    if params.honesty:
        perm = rng.permutation(subsample)
        half = s_n // 2
        structure = np.sort(perm[:half])
        estimation = np.sort(perm[half:])
    else:
        structure = estimation = subsample

    alpha = params.alpha
    if alpha is None:
        alpha = min(0.2, params.min_leaf / s_n)
    # ceil with a fuzz guard so alpha = min_leaf/s_n yields exactly min_leaf
    min_child = max(params.min_leaf, int(math.ceil(alpha * s_n - _EPS)))
    min_leaf = params.min_leaf

    feature, threshold, left, right = [], [], [], []
    node_depth, node_size, leaf_ordinal = [], [], []
    leaf_struct, leaf_degenerate, leaf_depth = [], [], []

    def new_node(depth, size):
        nid = len(feature)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        node_depth.append(depth)
        node_size.append(size)
        leaf_ordinal.append(-1)
        return nid

    def make_leaf(nid, idx, depth):
        ord_ = len(leaf_struct)
        leaf_ordinal[nid] = ord_
        leaf_struct.append(idx)
        leaf_degenerate.append(not min_leaf <= idx.size <= 2 * min_leaf - 1)
        leaf_depth.append(depth)

    def build(idx, depth):
        nid = new_node(depth, idx.size)
        split = None
        if idx.size >= 2 * min_leaf:
            forced = -1
            if rng.random() < params.random_split_prob:
                forced = int(rng.integers(0, d))
            split = _find_split(X[idx], y[idx], min_child, forced)
        if split is None:
            make_leaf(nid, idx, depth)
            return nid
        f, v = split
        go_left = X[idx, f] <= v
        feature[nid] = f
        threshold[nid] = v
        left[nid] = build(idx[go_left], depth + 1)
        right[nid] = build(idx[~go_left], depth + 1)
        return nid

    build(structure, 0)

    tree = CausalTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        node_depth=np.asarray(node_depth, dtype=np.int64),
        node_size=np.asarray(node_size, dtype=np.int64),
        leaf_ordinal=np.asarray(leaf_ordinal, dtype=np.int64),
        leaf_members=(),
        leaf_fit_counts=np.array([m.size for m in leaf_struct], dtype=np.int64),
        leaf_degenerate=np.asarray(leaf_degenerate, dtype=bool),
        leaf_depth=np.asarray(leaf_depth, dtype=np.int64),
        n_features=d,
        s_n=s_n,
        min_child=min_child,
        alpha=float(alpha),
        params=params,
        subsample=subsample,
    )
    member_leaf = assign_leaves(tree, X[estimation])
    members = [estimation[member_leaf == ord_] for ord_ in range(len(leaf_struct))]
    tree.leaf_members = tuple(members)
    return tree


def assign_leaves(tree: CausalTree, X: np.ndarray) -> np.ndarray:
    """Leaf id of every row of X. Rows with value equal to a split
    threshold route left, matching half-open (a, b] leaf boxes."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ValueError("covariate matrix has wrong dimension")
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return _assign_all_kernel(
        tree.feature, tree.threshold, tree.left, tree.right, tree.leaf_ordinal,
        np.ascontiguousarray(X),
    )


def assign_leaf(tree: CausalTree, x) -> int:
    """Leaf id containing a single covariate vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise ValueError("covariate vector has wrong dimension")
    return int(assign_leaves(tree, x[None, :])[0])


def _compute_boxes(tree: CausalTree) -> list:
    d = tree.n_features
    boxes = [None] * tree.n_leaves
    stack = [(0, np.full(d, -np.inf), np.full(d, np.inf))]
    while stack:
        nid, lo, hi = stack.pop()
        f = tree.feature[nid]
        if f < 0:
            boxes[tree.leaf_ordinal[nid]] = np.column_stack([lo, hi])
            continue
        v = tree.threshold[nid]
        l_hi = hi.copy()
        l_hi[f] = min(l_hi[f], v)
        r_lo = lo.copy()
        r_lo[f] = max(r_lo[f], v)
        stack.append((tree.left[nid], lo, l_hi))
        stack.append((tree.right[nid], r_lo, hi))
    return boxes


def leaf_box(tree: CausalTree, leaf_id: int) -> np.ndarray:
    """Per-dimension (lower, upper] bounds of a leaf as a (d, 2) array;
    dimensions never split on report (-inf, +inf)."""
    if not 0 <= leaf_id < tree.n_leaves:
        raise ValueError(f"unknown leaf id: {leaf_id}")
    if tree._boxes is None:
        tree._boxes = _compute_boxes(tree)
    return tree._boxes[leaf_id].copy()


def dump_tree(tree: CausalTree) -> str:
    """Plain-text dump: one line per node, with leaf member ids.

    Format: ``node <i> internal feature=<f> value=<v> left=<l> right=<r>``
    or ``node <i> leaf id=<ord> depth=<d> size=<fit> degenerate=<0|1>
    members=<comma list>``.
    """
    lines = [
        f"tree nodes={tree.n_nodes} leaves={tree.n_leaves} s_n={tree.s_n} "
        f"min_child={tree.min_child} alpha={tree.alpha!r}"
    ]
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            lines.append(
                f"node {i} internal feature={tree.feature[i]} "
                f"value={float(tree.threshold[i])!r} left={tree.left[i]} right={tree.right[i]}"
            )
        else:
            ord_ = int(tree.leaf_ordinal[i])
            members = ",".join(str(m) for m in tree.leaf_members[ord_])
            lines.append(
                f"node {i} leaf id={ord_} depth={tree.leaf_depth[ord_]} "
                f"size={tree.leaf_fit_counts[ord_]} "
                f"degenerate={int(tree.leaf_degenerate[ord_])} members={members}"
            )
    return "\n".join(lines) + "\n"
