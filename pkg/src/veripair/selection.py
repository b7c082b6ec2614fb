"""Pair informativeness scoring and budgeted greedy selection.

Two stages of candidate pairs are drawn from a clustering: within each
cluster the representative is paired with the most chaotic member (does
this cluster mix identities?), and across clusters the representatives of
nearby clusters are paired (are these two clusters one identity?). The
selector minimizes fallibility plus a diversity penalty that discourages
asking about the same clusters over and over.

Sign convention: the greedy MINIMIZES its objective, so intra-cluster
fallibility is the negated chaotic degree (most chaotic first) and
inter-cluster fallibility is the 2-Wasserstein distance between the
cluster Gaussians (closest clusters first).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .clustering import Cluster, ClusterSet


class SelectionError(ValueError):
    pass


class Stage(str, enum.Enum):
    INTRA = "intra"
    INTER = "inter"


def pair_key(a, b):
    """Unordered sample-id pair key used for the asked-pair memory."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class PairCandidate:
    a: int
    b: int
    cluster_a: int
    cluster_b: int
    stage: Stage
    fallibility: float

    @property
    def key(self):
        return pair_key(self.a, self.b)

    @property
    def sort_key(self):
        return (self.cluster_a, self.cluster_b, self.a, self.b)


def wasserstein2(cluster_a: Cluster, cluster_b: Cluster) -> float:
    """2-Wasserstein distance between two diagonal-covariance Gaussians.

    With independent dimensions the optimal coupling factorizes, so the
    squared distance is the squared mean gap plus the squared gap of the
    per-dimension standard deviations.
    """
    if cluster_a.f_mean.shape != cluster_b.f_mean.shape:
        raise SelectionError("cluster statistics have mismatched dimensions")
    mean_gap = cluster_a.f_mean - cluster_b.f_mean
    std_gap = np.sqrt(cluster_a.var_diag) - np.sqrt(cluster_b.var_diag)
    return float(np.sqrt(np.sum(mean_gap * mean_gap) + np.sum(std_gap * std_gap)))


class SelectionState:
    """Per-cluster appearance counts and the running list of selected pairs.

    `counts` covers the cluster universe (all clusters known this epoch);
    clusters born from splits join via register_cluster. The uniform mass
    q is 1/|universe|. A dense array shadows the counts so the greedy can
    re-score candidates vectorized.
    """

    def __init__(self, cluster_ids, total_budget, alpha):
        self.counts = {int(c): 0 for c in cluster_ids}
        if not self.counts:
            raise SelectionError("selection needs at least one cluster")
        self.selected = []
        self.total_budget = int(total_budget)
        self.alpha = float(alpha)
        self._dense = np.zeros(max(self.counts) + 1, dtype=np.int64)

    @property
    def q(self) -> float:
        return 1.0 / len(self.counts)

    def count(self, cluster_id) -> int:
        return self.counts.get(cluster_id, 0)

    def register_cluster(self, cluster_id):
        cluster_id = int(cluster_id)
        if cluster_id not in self.counts:
            self.counts[cluster_id] = 0
            if cluster_id >= self._dense.shape[0]:
                grown = np.zeros(cluster_id + 1, dtype=np.int64)
                grown[:self._dense.shape[0]] = self._dense
                self._dense = grown

    def commit(self, pair: PairCandidate):
        self.register_cluster(pair.cluster_a)
        self.register_cluster(pair.cluster_b)
        for cid in (pair.cluster_a, pair.cluster_b):
            self.counts[cid] += 1
            self._dense[cid] += 1
        self.selected.append(pair)


def _diversity_brackets(cnt_a, cnt_b, same_cluster):
    """Smoothed log-count change for touching the candidates' clusters.

    A pair inside one cluster raises that count by two, a cross-cluster
    pair raises both counts by one; either way the bracket telescopes over
    a selection run to -log(final_count + 1) per cluster.
    """
    cnt_a = np.asarray(cnt_a, dtype=np.float64)
    cnt_b = np.asarray(cnt_b, dtype=np.float64)
    return np.where(
        same_cluster,
        np.log(cnt_a + 1.0) - np.log(cnt_a + 3.0),
        np.log(cnt_a + 1.0) - np.log(cnt_a + 2.0)
        + np.log(cnt_b + 1.0) - np.log(cnt_b + 2.0),
    )


def o_increment(pair: PairCandidate, state: SelectionState) -> float:
    """Objective increment if `pair` were selected next.

    The diversity part is the smoothed log-count bracket weighted by
    alpha * q. With that slope the accumulated increments of a full
    selection reproduce fallibility-sum plus alpha times the smoothed
    KL-to-uniform, up to a constant that does not depend on which pairs
    were chosen (the telescoped log-counts are the KL divergence modulo
    normalization).
    """
    bracket = _diversity_brackets(
        state.count(pair.cluster_a),
        state.count(pair.cluster_b),
        pair.cluster_a == pair.cluster_b,
    )
    return float(pair.fallibility + state.alpha * state.q * bracket)


def kl_to_uniform(state: SelectionState) -> float:
    """KL divergence from the smoothed selection frequencies to uniform.

    p_j uses add-one smoothing over the appearance counts so untouched
    clusters keep finite mass; natural log.
    """
    if not state.selected:
        raise SelectionError("KL divergence is undefined for an empty selection")
    counts = np.array([state.counts[c] for c in sorted(state.counts)], dtype=np.float64)
    smoothed = counts + 1.0
    p = smoothed / smoothed.sum()
    q = state.q
    return float(np.sum(q * np.log(q / p)))


def selection_objective(state: SelectionState) -> float:
    """From-scratch objective of the current selection: fallibility sum
    plus alpha times the smoothed KL-to-uniform."""
    total = sum(p.fallibility for p in state.selected)
    return total + state.alpha * kl_to_uniform(state)


def build_stage_pairs(clusters: ClusterSet, stage: Stage, asked=frozenset()):
    """Candidate pairs for one stage, minus anything already annotated.

    Intra candidates pair representative with chaotic sample (skipped when
    they coincide, e.g. singletons); inter candidates pair representatives
    of every unordered cluster pair, scored by Wasserstein distance.
    """
    out = []
    ids = clusters.ids()
    if stage == Stage.INTRA:
        for cid in ids:
            c = clusters.clusters[cid]
            if c.size < 2 or c.representative == c.chaotic:
                continue
            if pair_key(c.representative, c.chaotic) in asked:
                continue
            out.append(PairCandidate(
                a=c.representative, b=c.chaotic, cluster_a=cid, cluster_b=cid,
                stage=Stage.INTRA, fallibility=-c.chaotic_degree,
            ))
    else:
        for i, ca in enumerate(ids):
            for cb in ids[i + 1:]:
                ra = clusters.clusters[ca].representative
                rb = clusters.clusters[cb].representative
                if pair_key(ra, rb) in asked:
                    continue
                out.append(PairCandidate(
                    a=ra, b=rb, cluster_a=ca, cluster_b=cb, stage=Stage.INTER,
                    fallibility=wasserstein2(clusters.clusters[ca], clusters.clusters[cb]),
                ))
    out.sort(key=lambda p: p.sort_key)
    return out


class CandidatePool:
    """Stage candidates in deterministic tie-break order with fast re-scoring."""

    def __init__(self, candidates):
        self.items = sorted(candidates, key=lambda p: p.sort_key)
        self._ca = np.array([p.cluster_a for p in self.items], dtype=np.int64)
        self._cb = np.array([p.cluster_b for p in self.items], dtype=np.int64)
        self._fall = np.array([p.fallibility for p in self.items], dtype=np.float64)
        self._alive = np.ones(len(self.items), dtype=bool)

    def __len__(self):
        return int(self._alive.sum())

    def pop_best(self, state: SelectionState) -> PairCandidate:
        """Remove and return the candidate minimizing o_increment.

        Exact score ties resolve to the smallest (cluster_a, cluster_b,
        a, b), which is the pool order.
        """
        idx = np.nonzero(self._alive)[0]
        if idx.size == 0:
            raise SelectionError("candidate pool is empty")
        ca = self._ca[idx]
        cb = self._cb[idx]
        brackets = _diversity_brackets(state._dense[ca], state._dense[cb], ca == cb)
        scores = self._fall[idx] + state.alpha * state.q * brackets
        best = int(idx[int(np.argmin(scores))])
        self._alive[best] = False
        return self.items[best]


@dataclass
class SelectionResult:
    pairs: list
    requested: int

    @property
    def shortfall(self):
        return self.requested - len(self.pairs)


def greedy_select(candidates, state: SelectionState, budget_t: int) -> SelectionResult:
    """Select up to budget_t pairs, re-scoring increments after each pick.

    Exhausting the candidates early is reported via the result's
    shortfall, not raised.
    """
    if budget_t < 0:
        raise SelectionError("budget must be >= 0")
    pool = CandidatePool(candidates)
    picked = []
    for _ in range(budget_t):
        if not len(pool):
            break
        pair = pool.pop_best(state)
        state.commit(pair)
        picked.append(pair)
    return SelectionResult(picked, budget_t)


def budget_schedule(total_budget: int, epochs: int) -> np.ndarray:
    """Spread the annotation budget over epochs with a Gaussian profile.

    Epoch e in 1..E gets weight exp(-(e - E/2)^2 / (2 * (E/2))); weights
    are normalized, scaled by the budget, floored, and the remainder goes
    one unit at a time to epochs in descending weight (ties toward the
    earlier epoch). The result always sums exactly to the budget.
    """
    if total_budget < 0 or epochs < 1:
        raise SelectionError("budget must be >= 0 and epochs >= 1")
    e = np.arange(1, epochs + 1, dtype=np.float64)
    center = epochs / 2.0
    weights = np.exp(-((e - center) ** 2) / (2.0 * center))
    raw = total_budget * weights / weights.sum()
    per_epoch = np.floor(raw).astype(np.int64)
    order = np.argsort(-weights, kind="stable")
    remainder = total_budget - int(per_epoch.sum())
    for i in range(remainder):
        per_epoch[order[i % epochs]] += 1
    return per_epoch
