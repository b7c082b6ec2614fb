"""Verdicts, cluster re-assignment, and the append-only annotation ledger.

A verdict answers "are these two samples the same identity?" (1) or not
(0). A negative intra-cluster verdict splits the cluster around the two
endpoints; a positive inter-cluster verdict merges the two clusters under
the lower id. Pairs invalidated by an earlier split/merge are stale and
must not consume budget.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterSet, make_cluster
from .dataset import OUTLIER, EmbeddingDataset
from .selection import PairCandidate, Stage, pair_key


class AnnotationError(ValueError):
    pass


class StalePairError(RuntimeError):
    """The pair no longer matches the cluster state; no budget is consumed."""


class VerdictSource(str, enum.Enum):
    ORACLE = "oracle"
    HUMAN = "human"


@dataclass(frozen=True)
class AnnotationVerdict:
    pair: PairCandidate
    v: int
    source: VerdictSource
    sequence: int
    epoch: int


class AnnotationLedger:
    """Ordered verdict log with budget accounting and duplicate protection."""

    def __init__(self, total_budget: int):
        self.total_budget = int(total_budget)
        self.verdicts = []
        self.asked = set()

    @property
    def budget_used(self) -> int:
        return len(self.verdicts)

    def record(self, pair: PairCandidate, v: int, source, epoch: int) -> AnnotationVerdict:
        if v not in (0, 1):
            raise AnnotationError(f"verdict must be 0 or 1, got {v!r}")
        key = pair.key
        if key in self.asked:
            raise StalePairError(f"pair {key} was already annotated")
        if self.budget_used >= self.total_budget:
            raise AnnotationError("annotation budget exhausted")
        verdict = AnnotationVerdict(
            pair=pair, v=int(v), source=VerdictSource(source),
            sequence=len(self.verdicts), epoch=int(epoch),
        )
        self.verdicts.append(verdict)
        self.asked.add(key)
        return verdict

    def to_records(self):
        return [
            {"seq": w.sequence, "a": w.pair.a, "b": w.pair.b,
             "stage": w.pair.stage.value, "v": w.v,
             "source": w.source.value, "epoch": w.epoch}
            for w in self.verdicts
        ]

    def write_ndjson(self, path):
        with open(path, "w") as fh:
            for record in self.to_records():
                fh.write(json.dumps(record) + "\n")


def read_ledger_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def oracle_verdict(pair: PairCandidate, dataset: EmbeddingDataset) -> int:
    """Simulated annotator: 1 iff the ground-truth identities match."""
    with dataset.unlocked_labels():
        sa = dataset.samples[pair.a]
        sb = dataset.samples[pair.b]
        if not (sa.has_identity and sb.has_identity):
            raise AnnotationError(
                f"oracle needs ground-truth identities for samples {pair.a}, {pair.b}"
            )
        return int(sa.identity == sb.identity)


def is_stale(clusters: ClusterSet, pair: PairCandidate) -> bool:
    """True when the cluster state moved on under the pair."""
    ca = clusters.cluster_of(pair.a)
    cb = clusters.cluster_of(pair.b)
    if ca == OUTLIER or cb == OUTLIER:
        return True
    if pair.stage == Stage.INTRA:
        return ca != cb
    return ca == cb


def apply_intra_verdict(clusters: ClusterSet, pair: PairCandidate, v: int,
                        features, g_descriptors=None, gamma=0.1) -> ClusterSet:
    """Apply a within-cluster verdict; a negative one splits the cluster.

    The first endpoint seeds the surviving cluster (old id), the second
    seeds a fresh cluster; remaining members follow the nearer seed (ties
    stay with the first). Statistics of both halves are recomputed.
    """
    if pair.stage != Stage.INTRA:
        raise AnnotationError("pair is not an intra-cluster candidate")
    if is_stale(clusters, pair):
        raise StalePairError(f"samples {pair.a} and {pair.b} are no longer co-clustered")
    if v == 1:
        return clusters

    cid = clusters.cluster_of(pair.a)
    members = clusters.clusters[cid].members
    rest = [m for m in members if m != pair.a and m != pair.b]
    keep = [pair.a]
    moved = [pair.b]
    if rest:
        feats = features[rest]
        dist_a = np.linalg.norm(feats - features[pair.a], axis=1)
        dist_b = np.linalg.norm(feats - features[pair.b], axis=1)
        for m, da, db in zip(rest, dist_a, dist_b):
            (moved if db < da else keep).append(m)

    new_id = clusters.next_id
    clusters.next_id += 1
    clusters.clusters[cid] = make_cluster(cid, keep, features, g_descriptors, gamma)
    clusters.clusters[new_id] = make_cluster(new_id, moved, features, g_descriptors, gamma)
    clusters.assignment[keep] = cid
    clusters.assignment[moved] = new_id
    return clusters


def apply_inter_verdict(clusters: ClusterSet, pair: PairCandidate, v: int,
                        features, g_descriptors=None, gamma=0.1) -> ClusterSet:
    """Apply a cross-cluster verdict; a positive one merges the clusters
    under the lower cluster id, with statistics recomputed."""
    if pair.stage != Stage.INTER:
        raise AnnotationError("pair is not an inter-cluster candidate")
    if is_stale(clusters, pair):
        raise StalePairError(f"samples {pair.a} and {pair.b} are already co-clustered")
    if v == 0:
        return clusters

    ca = clusters.cluster_of(pair.a)
    cb = clusters.cluster_of(pair.b)
    lo, hi = (ca, cb) if ca < cb else (cb, ca)
    merged = clusters.clusters[lo].members + clusters.clusters[hi].members
    clusters.clusters[lo] = make_cluster(lo, merged, features, g_descriptors, gamma)
    del clusters.clusters[hi]
    clusters.assignment[clusters.clusters[lo].members] = lo
    return clusters


def apply_verdict(clusters: ClusterSet, pair: PairCandidate, v: int,
                  features, g_descriptors=None, gamma=0.1) -> ClusterSet:
    if pair.stage == Stage.INTRA:
        return apply_intra_verdict(clusters, pair, v, features, g_descriptors, gamma)
    return apply_inter_verdict(clusters, pair, v, features, g_descriptors, gamma)


def pseudo_labels(clusters: ClusterSet) -> np.ndarray:
    """Dense training labels 0..|C|-1 (ascending cluster-id order); noise
    samples keep OUTLIER."""
    labels = np.full(clusters.assignment.shape[0], OUTLIER, dtype=np.int64)
    for dense, cid in enumerate(clusters.ids()):
        labels[clusters.clusters[cid].members] = dense
    return labels
