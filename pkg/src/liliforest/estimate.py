"""Cluster-level effects, per-instance effects, losses and diagnostics.

A retained cluster's effect is its treated-minus-control mean outcome; the
overall ATE weights cluster effects by cluster size over the retained
total. A retained instance's effect contrasts its own outcome with the
opposite group's cluster mean; abandoned instances fall back to the
overall ATE.
"""

import csv
import json
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .lili import Clustering


@dataclass(frozen=True)
class ClusterStats:
    cluster_id: int
    size: int
    n_treated: int
    n_control: int
    cate: float
    weight: float


@dataclass(frozen=True)
class EstimateReport:
    overall_ate: float
    per_cluster: List[ClusterStats]
    per_instance_ite: np.ndarray
    available_fraction: float
    cluster_count: int


def cluster_ate(cluster_idx: np.ndarray, dataset) -> float:
    """Treated mean outcome minus control mean outcome within a cluster."""
    t = dataset.treatment[cluster_idx]
    y = dataset.outcome[cluster_idx]
    treated = t == 1
    if not treated.any() or treated.all():
        raise ValueError("cluster is missing a treatment group")
    return float(y[treated].mean() - y[~treated].mean())


def instance_ite(clustering: Clustering, dataset, overall_ate: float) -> np.ndarray:
    """Per-instance effect vector.

    Retained treated i: Y_i minus its cluster's control mean; retained
    control i: its cluster's treated mean minus Y_i; abandoned i: the
    overall ATE.
    """
    ites = np.full(dataset.n, float(overall_ate))
    y = dataset.outcome
    t = dataset.treatment
    for c in clustering.clusters:
        treated = t[c] == 1
        mean_t = y[c][treated].mean()
        mean_c = y[c][~treated].mean()
        ites[c] = np.where(treated, y[c] - mean_c, mean_t - y[c])
    return ites


def overall_ate(clustering: Clustering, dataset):
    """Size-weighted average of cluster effects plus a full report.

    Weights are cluster sizes over the retained total, so they sum to one
    and the ATE is a convex combination of cluster effects.
    """
    if not clustering.clusters:
        raise ValueError("no retained clusters: nothing to estimate")
    n_retained = clustering.retained_count
    stats = []
    ate = 0.0
    for cid, c in enumerate(clustering.clusters):
        cate = cluster_ate(c, dataset)
        weight = c.size / n_retained
        treated = int((dataset.treatment[c] == 1).sum())
        stats.append(ClusterStats(
            cluster_id=cid, size=int(c.size), n_treated=treated,
            n_control=int(c.size) - treated, cate=cate, weight=weight,
        ))
        ate += cate * weight
    report = EstimateReport(
        overall_ate=ate,
        per_cluster=stats,
        per_instance_ite=instance_ite(clustering, dataset, ate),
        available_fraction=clustering.available_fraction,
        cluster_count=len(clustering.clusters),
    )
    return ate, report


def estimated_cdf(cluster_idx: np.ndarray, dataset, y: float,
                  group: Optional[str] = None) -> float:
    """Empirical outcome CDF induced by a cluster: the fraction of member
    outcomes at or below y, uniformly weighted. ``group`` restricts to the
    treated or control sub-cluster."""
    idx = np.asarray(cluster_idx)
    if group == "treated":
        idx = idx[dataset.treatment[idx] == 1]
    elif group == "control":
        idx = idx[dataset.treatment[idx] == 0]
    elif group is not None:
        raise ValueError(f"unknown group: {group}")
    if idx.size == 0:
        raise ValueError("empty cluster")
    return float((dataset.outcome[idx] <= y).mean())


def l1_ate_loss(estimated: float, truth: float) -> float:
    return abs(float(estimated) - float(truth))


def pehe(ite_est: np.ndarray, y1: np.ndarray, y0: np.ndarray) -> float:
    """Mean squared error between estimated and true per-instance effects."""
    ite_est = np.asarray(ite_est, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    if not ite_est.shape == y1.shape == y0.shape:
        raise ValueError("pehe inputs must share one length")
    return float(np.mean(((y1 - y0) - ite_est) ** 2))


def cluster_diameter(cluster_idx: np.ndarray, dataset) -> float:
    """L1 size of the cluster's covariate bounding box: the per-dimension
    ranges summed. At most d for [0,1]-normalized covariates."""
    X = dataset.covariates[np.asarray(cluster_idx)]
    if X.shape[0] == 0:
        raise ValueError("empty cluster")
    return float((X.max(axis=0) - X.min(axis=0)).sum())


# ---------------------------------------------------------------------------
# report serialization

def report_summary(report: EstimateReport) -> dict:
    return {
        "overall_ate": report.overall_ate,
        "available_fraction": report.available_fraction,
        "cluster_count": report.cluster_count,
    }


def write_cluster_table(report: EstimateReport, path) -> None:
    """One CSV record per retained cluster."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cluster_id", "size", "n_treated", "n_control", "cate", "weight"])
        for s in report.per_cluster:
            writer.writerow([s.cluster_id, s.size, s.n_treated, s.n_control,
                             repr(s.cate), repr(s.weight)])


def write_ite_table(report: EstimateReport, path,
                    clustering: Optional[Clustering] = None) -> None:
    """Flat per-instance effect table; cluster_id is -1 for abandoned
    instances (or everywhere when no clustering is supplied)."""
    n = report.per_instance_ite.shape[0]
    membership = np.full(n, -1, dtype=np.int64)
    if clustering is not None:
        for cid, c in enumerate(clustering.clusters):
            membership[c] = cid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance", "cluster_id", "ite"])
        for i in range(n):
            writer.writerow([i, int(membership[i]), repr(float(report.per_instance_ite[i]))])


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
