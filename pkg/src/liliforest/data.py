"""Dataset ingestion, preprocessing, twin pairing and synthetic generation.

A :class:`Dataset` bundles a covariate matrix, a binary treatment vector,
an observed outcome and (when available) the counterfactual outcome. All
arrays are frozen after construction, so datasets can be shared freely
across threads and repeated runs.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Covariates, binary treatment, outcome and optional counterfactual.

    Covariates are (n, d) floats; after :func:`preprocess` every value lies
    in [0, 1]. ``feature_kinds`` tags each column as continuous or
    categorical and drives how preprocessing rescales it.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    counterfactual_outcome: Optional[np.ndarray] = None
    feature_kinds: tuple = ()
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("covariates must be a 2-d matrix")
        t = np.asarray(self.treatment)
        y = np.asarray(self.outcome, dtype=np.float64)
        n = X.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise ValueError("treatment and outcome must have one entry per row")
        if not np.isin(t, (0, 1)).all():
            raise ValueError("non-binary treatment")
        kinds = tuple(self.feature_kinds) or (CONTINUOUS,) * X.shape[1]
        if len(kinds) != X.shape[1]:
            raise ValueError("feature_kinds must tag every covariate column")
        bad = set(kinds) - {CONTINUOUS, CATEGORICAL}
        if bad:
            raise ValueError(f"unknown feature kind(s): {sorted(bad)}")
        cf = self.counterfactual_outcome
        if cf is not None:
            cf = np.asarray(cf, dtype=np.float64)
            if cf.shape != (n,):
                raise ValueError("counterfactual outcome must have one entry per row")
            cf = _frozen(cf)
        names = self.feature_names
        if names is not None:
            names = tuple(names)
            if len(names) != X.shape[1]:
                raise ValueError("feature_names must name every covariate column")
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "treatment", _frozen(t.astype(np.int8)))
        object.__setattr__(self, "outcome", _frozen(y))
        object.__setattr__(self, "counterfactual_outcome", cf)
        object.__setattr__(self, "feature_kinds", kinds)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``kinds`` overrides the auto-detected kind of individual covariate
    columns ("continuous" or "categorical"). Columns not named as
    treatment, outcome or counterfactual are covariates.
    """

    treatment: str
    outcome: str
    counterfactual: Optional[str] = None
    kinds: Mapping[str, str] = field(default_factory=dict)


def _encode_first_appearance(values) -> np.ndarray:
    codes = {}
    out = np.empty(len(values), dtype=np.float64)
    for i, v in enumerate(values):
        if v not in codes:
            codes[v] = float(len(codes))
        out[i] = codes[v]
    return out


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Parse a headered CSV into a Dataset, preserving row order.

    Covariate columns whose cells all parse as numbers are continuous
    unless the schema says otherwise; non-numeric columns are label-encoded
    by first appearance. Missing cells and ragged rows are errors.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read dataset file: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV: no header row") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"ragged row at line {lineno}")
            if any(cell.strip() == "" for cell in row):
                raise ValueError(f"missing value at line {lineno}")
            rows.append([cell.strip() for cell in row])
    if not rows:
        raise ValueError("CSV contains a header but no data rows")

    for col in (schema.treatment, schema.outcome):
        if col not in header:
            raise ValueError(f"missing mandatory column: {col}")
    if schema.counterfactual is not None and schema.counterfactual not in header:
        raise ValueError(f"missing counterfactual column: {schema.counterfactual}")
    role_cols = {schema.treatment, schema.outcome}
    if schema.counterfactual:
        role_cols.add(schema.counterfactual)
    for col in schema.kinds:
        if col not in header:
            raise ValueError(f"kind override names unknown column: {col}")

    columns = {name: [row[i] for row in rows] for i, name in enumerate(header)}

    t_raw = columns[schema.treatment]
    try:
        t = np.array([float(v) for v in t_raw])
    except ValueError:
        raise ValueError("non-binary treatment") from None
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("non-binary treatment")

    try:
        y = np.array([float(v) for v in columns[schema.outcome]])
    except ValueError:
        raise ValueError("non-numeric outcome") from None

    cf = None
    if schema.counterfactual:
        try:
            cf = np.array([float(v) for v in columns[schema.counterfactual]])
        except ValueError:
            raise ValueError("non-numeric counterfactual outcome") from None

    cov_names = [name for name in header if name not in role_cols]
    cov_cols = []
    kinds = []
    for name in cov_names:
        raw = columns[name]
        override = schema.kinds.get(name)
        try:
            vals = np.array([float(v) for v in raw])
            numeric = True
        except ValueError:
            numeric = False
        if not numeric:
            if override == CONTINUOUS:
                raise ValueError(f"non-numeric value in continuous column: {name}")
            vals = _encode_first_appearance(raw)
            kinds.append(CATEGORICAL)
        else:
            kinds.append(override or CONTINUOUS)
        cov_cols.append(vals)

    X = np.column_stack(cov_cols) if cov_cols else np.empty((len(rows), 0))
    return Dataset(
        covariates=X,
        treatment=t.astype(np.int8),
        outcome=y,
        counterfactual_outcome=cf,
        feature_kinds=tuple(kinds),
        feature_names=tuple(cov_names),
    )


def preprocess(dataset: Dataset) -> Dataset:
    """Max-min normalize continuous columns, label-encode then scale
    categorical ones. Constant columns map to all zeros. Idempotent."""
    X = np.array(dataset.covariates, dtype=np.float64)
    for j, kind in enumerate(dataset.feature_kinds):
        col = X[:, j]
        if kind == CATEGORICAL:
            col = _encode_first_appearance(col)
        lo = col.min()
        hi = col.max()
        if hi > lo:
            X[:, j] = (col - lo) / (hi - lo)
        else:
            X[:, j] = 0.0
    return replace(dataset, covariates=X)


@dataclass(frozen=True)
class TwinPairs:
    """Per-pair records for twin studies: shared covariates plus the
    weight and outcome of the lighter and heavier sibling."""

    covariates: np.ndarray
    lighter_weight: np.ndarray
    heavier_weight: np.ndarray
    lighter_outcome: np.ndarray
    heavier_outcome: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=np.float64)
        m = X.shape[0]
        for name in ("lighter_weight", "heavier_weight", "lighter_outcome", "heavier_outcome"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (m,):
                raise ValueError(f"{name} must have one entry per pair")
            object.__setattr__(self, name, v)
        if (self.heavier_weight < self.lighter_weight).any():
            raise ValueError("heavier_weight below lighter_weight")
        object.__setattr__(self, "covariates", X)


def pair_twins(pairs: TwinPairs, weight_gap: float, seed: int) -> Dataset:
    """Turn twin pairs into a treatment/control dataset.

    Pairs whose weight difference is below ``weight_gap`` are dropped. For
    each kept pair one sibling is selected uniformly at random; the
    selected one enters the dataset with T=1 if it is the heavier twin,
    and the unselected sibling's outcome becomes the counterfactual.
    """
    diff = pairs.heavier_weight - pairs.lighter_weight
    keep = diff >= weight_gap
    if not keep.any():
        raise ValueError("no pairs left after weight-gap filtering")
    rng = np.random.default_rng(seed)
    pick_heavier = rng.random(int(keep.sum())) < 0.5
    X = pairs.covariates[keep]
    hw_out = pairs.heavier_outcome[keep]
    lw_out = pairs.lighter_outcome[keep]
    treatment = pick_heavier.astype(np.int8)
    outcome = np.where(pick_heavier, hw_out, lw_out)
    counterfactual = np.where(pick_heavier, lw_out, hw_out)
    return Dataset(
        covariates=X,
        treatment=treatment,
        outcome=outcome,
        counterfactual_outcome=counterfactual,
    )


def ground_truth_ate(dataset: Dataset, mode: str = "mean") -> float:
    """Ground-truth ATE from recorded counterfactual outcomes.

    ``mean`` averages the per-unit effects (treated: Y - Yc, control:
    Yc - Y). ``as_printed`` instead multiplies each group's summed effect
    by its share of the sample, kept for auditability against reports that
    use that convention.
    """
    cf = dataset.counterfactual_outcome
    if cf is None:
        raise ValueError("dataset has no counterfactual outcome column")
    treated = dataset.treatment == 1
    effects = np.where(treated, dataset.outcome - cf, cf - dataset.outcome)
    if mode == "mean":
        return float(effects.mean())
    if mode == "as_printed":
        n = dataset.n
        n_t = int(treated.sum())
        n_c = n - n_t
        return float(
            (n_t / n) * effects[treated].sum() + (n_c / n) * effects[~treated].sum()
        )
    raise ValueError(f"unknown mode: {mode}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset with analytically known effects.

    ``effect`` is either a constant or the tag "x0" (effect equal to the
    first covariate). ``lipschitz_outcome`` keeps the baseline outcome a
    sum of bounded-slope terms; turning it off adds a step discontinuity.
    """

    n: int
    d: int
    effect: Union[float, str] = 2.0
    confounding: str = "none"
    noise_sd: float = 1.0
    lipschitz_outcome: bool = True

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be at least 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if isinstance(self.effect, str) and self.effect != "x0":
            raise ValueError(f"unknown effect tag: {self.effect}")
        if self.confounding not in ("none", "linear"):
            raise ValueError(f"unknown confounding mode: {self.confounding}")


def _baseline_outcome(X: np.ndarray, lipschitz: bool) -> np.ndarray:
    d = X.shape[1]
    # bounded-slope terms concentrated on the leading covariates
    slopes = np.array([(1.0, -0.8, 0.6)[j] if j < 3 else 0.0 for j in range(d)])
    g = X @ slopes + 0.25 * np.sin(2.0 * np.pi * X[:, 0]) / (2.0 * np.pi)
    if not lipschitz:
        g = g + 2.0 * (X[:, 0] > 0.5)
    return g


def generate_synthetic(spec: SyntheticSpec, seed: int):
    """Draw a dataset with both potential outcomes recorded.

    Returns (dataset, true_ate, true_ite). Covariates are uniform on
    [0,1]^d, the observed outcome is effect*T + baseline + noise, and the
    counterfactual column makes the truth exactly recoverable. Identical
    (spec, seed) pairs give identical datasets.
    """
    rng = np.random.default_rng(seed)
    X = rng.random((spec.n, spec.d))
    if spec.confounding == "linear":
        p = 0.25 + 0.5 * X[:, 0]
    else:
        p = np.full(spec.n, 0.5)
    treatment = (rng.random(spec.n) < p).astype(np.int8)
    noise = rng.normal(0.0, spec.noise_sd, spec.n) if spec.noise_sd > 0 else np.zeros(spec.n)

    if isinstance(spec.effect, str):
        true_ite = X[:, 0].copy()
    else:
        true_ite = np.full(spec.n, float(spec.effect))
    y0 = _baseline_outcome(X, spec.lipschitz_outcome) + noise
    y1 = y0 + true_ite
    outcome = np.where(treatment == 1, y1, y0)
    counterfactual = np.where(treatment == 1, y0, y1)
    dataset = Dataset(
        covariates=X,
        treatment=treatment,
        outcome=outcome,
        counterfactual_outcome=counterfactual,
    )
    return dataset, float(true_ite.mean()), true_ite
