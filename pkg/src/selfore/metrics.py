"""Clustering evaluation: B-cubed, V-measure, adjusted Rand index, majority
label mapping, and merging of an over-provisioned clustering down to K.

All scores are computed from the pred x gold contingency table. B-cubed uses
the element-wise formulation whose expectation runs over ordered pairs
including the self-pair; pair-based variants differ and are out of scope.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .numerics import rng_for

_MERGE_TAG = 401


def _codes(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DataError(f"partition must be 1-D, got shape {arr.shape}")
    _, inverse = np.unique(arr, return_inverse=True)
    return inverse


def _contingency(pred, gold):
    """Counts matrix (pred clusters x gold classes) plus its margins."""
    p = _codes(pred)
    g = _codes(gold)
    if p.shape[0] != g.shape[0]:
        raise DataError(f"partition lengths differ: {p.shape[0]} vs {g.shape[0]}")
    if p.shape[0] == 0:
        raise DataError("empty partitions")
    n_pred = int(p.max()) + 1
    n_gold = int(g.max()) + 1
    table = np.zeros((n_pred, n_gold))
    np.add.at(table, (p, g), 1.0)
    return table, table.sum(axis=1), table.sum(axis=0), p.shape[0]


def _harmonic(x: float, y: float) -> float:
    return 0.0 if x + y == 0.0 else 2.0 * x * y / (x + y)


def b_cubed(pred, gold) -> tuple[float, float, float]:
    """Element-wise B-cubed (precision, recall, f1).

    Per element: precision = |cluster ∩ class| / |cluster|, recall divides by
    |class| instead; scores are means over elements.
    """
    table, a, b, n = _contingency(pred, gold)
    precision = float((table * (table / a[:, None])).sum() / n)
    recall = float((table * (table / b[None, :])).sum() / n)
    return precision, recall, _harmonic(precision, recall)


def _entropy(sizes: np.ndarray, n: int) -> float:
    p = sizes[sizes > 0] / n
    return float(-(p * np.log(p)).sum())


def _conditional_entropy(table: np.ndarray, cond_sizes: np.ndarray, n: int) -> float:
    """H(rows' other axis | conditioning axis) from joint counts.

    table rows are the conditioning variable, columns the target.
    """
    mask = table > 0
    joint = table[mask] / n
    cond = np.broadcast_to(cond_sizes[:, None], table.shape)[mask]
    return float(-(joint * np.log(table[mask] / cond)).sum())


def v_measure(pred, gold, swap_orientation: bool = False) -> tuple[float, float, float]:
    """Entropy-based (homogeneity, completeness, f1), natural log.

    Homogeneity is 1 when every predicted cluster holds a single gold class;
    completeness is 1 when every gold class lands in a single cluster. The
    degenerate 0/0 case (single effective class or cluster) scores 1 for that
    component. swap_orientation exchanges the two, for comparison against
    writeups that condition the entropies the other way around.
    """
    table, a, b, n = _contingency(pred, gold)
    h_gold = _entropy(b, n)
    h_pred = _entropy(a, n)
    h_gold_given_pred = _conditional_entropy(table, a, n)
    h_pred_given_gold = _conditional_entropy(table.T, b, n)
    homogeneity = 1.0 if h_gold == 0.0 else 1.0 - h_gold_given_pred / h_gold
    completeness = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_gold / h_pred
    if swap_orientation:
        homogeneity, completeness = completeness, homogeneity
    return homogeneity, completeness, _harmonic(homogeneity, completeness)


def ari(pred, gold) -> float:
    """Adjusted Rand index via the contingency-table pair-count formula."""
    table, a, b, n = _contingency(pred, gold)
    if n < 2:
        raise DataError("adjusted Rand index needs at least 2 elements")

    def pairs(x):
        return float((x * (x - 1.0) / 2.0).sum())

    index = pairs(table)
    sum_a = pairs(a)
    sum_b = pairs(b)
    expected = sum_a * sum_b / pairs(np.array([float(n)]))
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        # Both partitions degenerate in the same way (all one cluster, or all
        # singletons): perfect agreement by convention.
        return 1.0
    return float((index - expected) / (maximum - expected))


def majority_map(pred, gold):
    """(cluster -> modal gold label) map plus induced per-element labels.

    Ties pick the smallest label under the labels' natural ordering, which is
    lexicographic for the string relation names used throughout.
    """
    p = np.asarray(pred)
    g = np.asarray(gold)
    if p.shape != g.shape or p.ndim != 1:
        raise DataError(f"misaligned partitions: {p.shape} vs {g.shape}")
    mapping = {}
    for cluster in np.unique(p):
        labels, counts = np.unique(g[p == cluster], return_counts=True)
        winners = labels[counts == counts.max()]
        mapping[cluster.item()] = min(winners.tolist())
    induced = np.array([mapping[c.item()] for c in p])
    return mapping, induced


def majority_accuracy(pred, gold) -> float:
    _, induced = majority_map(pred, gold)
    return float(np.mean(induced == np.asarray(gold)))


def merge_clusters(centroids: np.ndarray, labels: np.ndarray, k: int,
                   seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Merge a clustering with many centroids down to k super-clusters.

    Runs k-means over the centroid vectors themselves; each point's merged
    label is the super-cluster of its original centroid. Merging never splits
    an original cluster. Returns (merged labels, centroid -> super map).
    """
    from .clustering import kmeans

    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim != 2:
        raise DataError(f"centroids must be 2-D, got shape {centroids.shape}")
    k_hat = centroids.shape[0]
    if k > k_hat:
        raise DataError(f"cannot merge {k_hat} clusters into {k} > {k_hat}")
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or (labels.size and labels.max() >= k_hat):
        raise DataError("label outside centroid range")
    super_of, _ = kmeans(centroids, k, rng_for(seed, _MERGE_TAG))
    return super_of[labels], super_of


@dataclass(frozen=True)
class EvalReport:
    """All clustering scores for one predicted labeling against gold."""

    b3_precision: float
    b3_recall: float
    b3_f1: float
    homogeneity: float
    completeness: float
    v_f1: float
    ari: float
    majority: dict
    majority_accuracy: float

    def as_dict(self) -> dict[str, float]:
        return {
            "b3_precision": self.b3_precision,
            "b3_recall": self.b3_recall,
            "b3_f1": self.b3_f1,
            "homogeneity": self.homogeneity,
            "completeness": self.completeness,
            "v_f1": self.v_f1,
            "ari": self.ari,
            "majority_accuracy": self.majority_accuracy,
        }


def evaluate(pred, gold, swap_orientation: bool = False) -> EvalReport:
    p, r, f = b_cubed(pred, gold)
    h, c, v = v_measure(pred, gold, swap_orientation)
    a = ari(pred, gold)
    mapping, _ = majority_map(pred, gold)
    acc = majority_accuracy(pred, gold)
    return EvalReport(p, r, f, h, c, v, a, mapping, acc)


def format_metrics(values: dict[str, float]) -> str:
    """Report text: one `key=value` line per metric, 6 decimal places."""
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            lines.append(f"{key}={value:.6f}")
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
