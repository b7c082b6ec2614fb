"""Retrieval metrics (mAP, CMC) and clustering-agreement metrics (F1, NMI).

All functions are pure and operate on plain arrays; callers holding a
label-guarded dataset unlock identities themselves. Distance ties in the
gallery ranking break toward the lower gallery id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import OUTLIER

CMC_KS = (1, 5, 10)


class EvaluationError(ValueError):
    pass


def average_precision(ranked_relevance) -> float:
    """Mean of precision@k over the relevant positions of a ranked list."""
    rel = np.asarray(ranked_relevance, dtype=bool)
    total = int(rel.sum())
    if total == 0:
        raise EvaluationError("ranking contains no relevant items")
    precision_at = np.cumsum(rel) / np.arange(1, rel.shape[0] + 1)
    return float(precision_at[rel].sum() / total)


def evaluate_retrieval(query_ids, gallery_ids, embeddings, identities,
                       cameras=None, cmc_ks=CMC_KS):
    """mAP and CMC@k for Euclidean ranking of the gallery per query.

    When camera ids are given, gallery entries sharing both identity and
    camera with the query are dropped from that query's ranking (standard
    retrieval protocol); without cameras the full gallery is ranked.
    """
    query_ids = np.asarray(query_ids, dtype=np.int64)
    gallery_ids = np.asarray(gallery_ids, dtype=np.int64)
    identities = np.asarray(identities)
    dists = cdist(embeddings[query_ids], embeddings[gallery_ids], "sqeuclidean")

    ap_values = []
    hits_at = {k: 0 for k in cmc_ks}
    for row, q in enumerate(query_ids):
        keep = np.ones(gallery_ids.shape[0], dtype=bool)
        if cameras is not None:
            keep = ~((identities[gallery_ids] == identities[q])
                     & (np.asarray(cameras)[gallery_ids] == np.asarray(cameras)[q]))
        order = np.lexsort((gallery_ids[keep], dists[row, keep]))
        ranked = identities[gallery_ids[keep][order]] == identities[q]
        if not ranked.any():
            raise EvaluationError(f"query {int(q)} has no gallery match")
        ap_values.append(average_precision(ranked))
        first_hit = int(np.nonzero(ranked)[0][0])
        for k in cmc_ks:
            hits_at[k] += first_hit < k

    n_q = query_ids.shape[0]
    cmc = {k: hits_at[k] / n_q for k in cmc_ks}
    return float(np.mean(ap_values)), cmc


def _pair_count(labels) -> float:
    counts = np.bincount(labels)
    return float(np.sum(counts * (counts - 1) / 2.0))


def pairwise_f1(pred_labels, true_labels) -> float:
    """F1 over same-cluster pairs vs same-identity pairs.

    Samples predicted OUTLIER are excluded from the pair enumeration; when
    either side has no pairs at all the score is 0 by convention.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise EvaluationError("label arrays differ in length")
    mask = pred != OUTLIER
    pred = pred[mask]
    true = true[mask]
    if pred.size == 0:
        return 0.0
    _, pred_dense = np.unique(pred, return_inverse=True)
    _, true_dense = np.unique(true, return_inverse=True)
    pred_pairs = _pair_count(pred_dense)
    true_pairs = _pair_count(true_dense)
    if pred_pairs == 0 or true_pairs == 0:
        return 0.0
    # pairs that are together on both sides, via the joint contingency
    joint = pred_dense * (true_dense.max() + 1) + true_dense
    both = _pair_count(np.unique(joint, return_inverse=True)[1])
    if both == 0:
        return 0.0
    precision = both / pred_pairs
    recall = both / true_pairs
    return float(2.0 * precision * recall / (precision + recall))


def nmi(pred_labels, true_labels) -> float:
    """Normalized mutual information, arithmetic-mean normalization.

    Predicted OUTLIER samples are excluded; degenerate single-cluster
    partitions score 0 by convention.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise EvaluationError("label arrays differ in length")
    mask = pred != OUTLIER
    pred = pred[mask]
    true = true[mask]
    if pred.size == 0:
        return 0.0
    _, pred_dense = np.unique(pred, return_inverse=True)
    _, true_dense = np.unique(true, return_inverse=True)
    n = pred_dense.shape[0]
    n_pred = pred_dense.max() + 1
    n_true = true_dense.max() + 1
    contingency = np.zeros((n_pred, n_true), dtype=np.float64)
    np.add.at(contingency, (pred_dense, true_dense), 1.0)

    p_joint = contingency / n
    p_pred = p_joint.sum(axis=1)
    p_true = p_joint.sum(axis=0)
    h_pred = -np.sum(p_pred[p_pred > 0] * np.log(p_pred[p_pred > 0]))
    h_true = -np.sum(p_true[p_true > 0] * np.log(p_true[p_true > 0]))
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    nz = p_joint > 0
    outer = np.outer(p_pred, p_true)
    mutual = np.sum(p_joint[nz] * np.log(p_joint[nz] / outer[nz]))
    return float(min(1.0, 2.0 * mutual / (h_pred + h_true)))


@dataclass
class EvalReport:
    """Per-epoch progress snapshot; retrieval metrics are None when the
    dataset carries no ground truth."""

    epoch: int
    budget_used: int
    map: float | None = None
    cmc: dict = field(default_factory=dict)
    pairwise_f1: float | None = None
    nmi: float | None = None
    num_clusters: int = 0
    num_noise: int = 0
    mean_loss: float | None = None

    def to_dict(self):
        return {
            "epoch": self.epoch,
            "budget_used": self.budget_used,
            "map": self.map,
            "cmc": {str(k): v for k, v in sorted(self.cmc.items())},
            "pairwise_f1": self.pairwise_f1,
            "nmi": self.nmi,
            "num_clusters": self.num_clusters,
            "num_noise": self.num_noise,
            "mean_loss": self.mean_loss,
        }


def write_reports(reports, json_path, csv_path=None):
    """Reports as JSON, plus the budget-vs-quality curve as CSV."""
    records = [r.to_dict() for r in reports]
    Path(json_path).write_text(json.dumps(records, indent=2) + "\n")
    if csv_path is not None:
        lines = ["budget_used,map,pairwise_f1"]
        for r in records:
            map_s = "" if r["map"] is None else repr(r["map"])
            f1_s = "" if r["pairwise_f1"] is None else repr(r["pairwise_f1"])
            lines.append(f"{r['budget_used']},{map_s},{f1_s}")
        Path(csv_path).write_text("\n".join(lines) + "\n")
