"""Run orchestration: the cluster / select / annotate / reassign / train loop.

The loop is written as a generator that yields each pair the annotator has
to judge and receives the verdict back; the oracle driver, the interactive
HTTP session, and ledger replay all feed the same generator. With a fixed
seed, config, and verdict sequence the whole run is deterministic, which
is what makes replay (and crash resume via replay) exact.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import annotation, selection, trainer
from .annotation import AnnotationLedger, is_stale, oracle_verdict, pseudo_labels
from .clustering import cluster_pipeline
from .dataset import OUTLIER, EmbeddingDataset, l2_normalize, split_query_gallery
from .evaluation import EvalReport, evaluate_retrieval, nmi, pairwise_f1, write_reports
from .selection import CandidatePool, SelectionState, Stage, budget_schedule

logger = logging.getLogger(__name__)

SIMULATE = "SIMULATE"
SERVE = "SERVE"


class EngineError(ValueError):
    pass


class ReplayError(RuntimeError):
    """Recorded verdicts do not match the pairs the loop asks for."""


@dataclass
class EngineConfig:
    T: int = 0
    epochs: int = 20
    alpha: float = 1.0
    gamma: float = 0.1
    tau: float = 0.05
    momentum: float = 0.2
    eps: float = 0.4
    min_pts: int = 4
    k_reciprocal: int = 30
    learning_rate: float = 0.05
    batch_size: int = 64
    d_emb: int = 16
    seed: int = 0
    mode: str = SIMULATE
    stage_split: float = 0.5
    l2_normalize: bool = True
    query_fraction: float = 0.2
    batch_select: bool = False

    def validate(self):
        if self.T < 0:
            raise EngineError("T must be >= 0")
        if self.epochs < 1:
            raise EngineError("epochs must be >= 1")
        if self.mode not in (SIMULATE, SERVE):
            raise EngineError(f"mode must be {SIMULATE} or {SERVE}")
        if not 0.0 <= self.stage_split <= 1.0:
            raise EngineError("stage_split must be in [0, 1]")
        for name in ("alpha", "gamma"):
            if getattr(self, name) < 0:
                raise EngineError(f"{name} must be >= 0")
        if self.tau <= 0 or self.eps <= 0:
            raise EngineError("tau and eps must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise EngineError("momentum must be in [0, 1)")
        if self.min_pts < 1 or self.k_reciprocal < 1:
            raise EngineError("min_pts and k_reciprocal must be >= 1")
        if self.batch_size < 1 or self.d_emb < 1:
            raise EngineError("batch_size and d_emb must be >= 1")
        if not 0.0 < self.query_fraction < 1.0:
            raise EngineError("query_fraction must be in (0, 1)")
        return self

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise EngineError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


class Engine:
    """Owns the full run state; single-writer by contract."""

    def __init__(self, dataset: EmbeddingDataset, config: EngineConfig):
        config.validate()
        self.config = config
        self.dataset = l2_normalize(dataset) if config.l2_normalize else dataset
        self.features = self.dataset.features
        self.g_descriptors = self.dataset.g_descriptors
        if config.d_emb > self.dataset.feature_dim:
            raise EngineError("d_emb exceeds the dataset feature dimension")

        self.projection = trainer.init_projection(
            self.dataset.feature_dim, config.d_emb, config.learning_rate, config.seed)
        self.schedule = budget_schedule(config.T, config.epochs)
        self.ledger = AnnotationLedger(config.T)
        self.reports: list[EvalReport] = []
        self.epoch = 0
        self.clusters = None
        self.state = None
        self.bank = None
        self.finished = False

        self._eval_split = None
        if self.dataset.has_identities:
            self._eval_split = split_query_gallery(
                self.dataset, config.query_fraction, config.seed)

    # ------------------------------------------------------------------
    # the annotation loop
    # ------------------------------------------------------------------

    def annotation_events(self):
        """Generator driving the whole run; yields pairs, receives verdicts."""
        cfg = self.config
        for epoch in range(cfg.epochs):
            self.epoch = epoch
            embeddings = trainer.embed(self.projection, self.features)
            self._epoch_embeddings = embeddings
            k_eff = min(cfg.k_reciprocal, self.dataset.n - 1)
            self.clusters = cluster_pipeline(
                embeddings, self.g_descriptors, k_eff, cfg.eps, cfg.min_pts, cfg.gamma)
            mean_loss = None

            if self.clusters.clusters:
                self.state = SelectionState(self.clusters.ids(), cfg.T, cfg.alpha)
                epoch_budget = int(self.schedule[epoch])
                intra_budget = math.ceil(epoch_budget * cfg.stage_split)
                yield from self._run_stage(Stage.INTRA, intra_budget, epoch)
                yield from self._run_stage(Stage.INTER, epoch_budget - intra_budget, epoch)

                labels = pseudo_labels(self.clusters)
                mask = labels != OUTLIER
                if mask.any():
                    self.bank = trainer.init_memory(
                        self.clusters, embeddings, cfg.momentum, cfg.tau)
                    _, _, mean_loss = trainer.train_epoch(
                        self.projection, self.features[mask], labels[mask],
                        self.bank, cfg.batch_size,
                        np.random.SeedSequence([cfg.seed, 7, epoch]))
            else:
                logger.warning("epoch %d: clustering produced only noise", epoch)

            self.reports.append(self._evaluate(epoch, mean_loss))
            logger.info(
                "epoch %d: clusters=%d budget_used=%d loss=%s", epoch,
                self.reports[-1].num_clusters, self.ledger.budget_used,
                f"{mean_loss:.4f}" if mean_loss is not None else "n/a")
        self.finished = True

    def _run_stage(self, stage, stage_budget, epoch):
        used = 0
        if stage_budget <= 0:
            return used
        candidates = selection.build_stage_pairs(self.clusters, stage, self.ledger.asked)
        if self.config.batch_select:
            result = selection.greedy_select(candidates, self.state, stage_budget)
            for pair in result.pairs:
                if is_stale(self.clusters, pair):
                    continue
                verdict, source = yield pair
                self._apply(pair, verdict, epoch, source)
                used += 1
            return used
        pool = CandidatePool(candidates)
        while used < stage_budget and len(pool):
            pair = pool.pop_best(self.state)
            if is_stale(self.clusters, pair):
                continue  # free skip, no budget consumed
            verdict, source = yield pair
            self.state.commit(pair)
            self._apply(pair, verdict, epoch, source)
            used += 1
        if used < stage_budget:
            logger.info("epoch %d: %s stage ran out of candidates (%d short)",
                        epoch, stage.value, stage_budget - used)
        return used

    def _apply(self, pair, verdict, epoch, source):
        # re-assignment works in the same space the epoch was clustered in
        self.ledger.record(pair, verdict, source, epoch)
        annotation.apply_verdict(self.clusters, pair, verdict, self._epoch_embeddings,
                                 self.g_descriptors, self.config.gamma)
        if pair.stage == Stage.INTRA and verdict == 0:
            self.state.register_cluster(self.clusters.next_id - 1)

    # ------------------------------------------------------------------
    # evaluation and summaries
    # ------------------------------------------------------------------

    def _evaluate(self, epoch, mean_loss):
        report = EvalReport(
            epoch=epoch,
            budget_used=self.ledger.budget_used,
            num_clusters=len(self.clusters.clusters) if self.clusters else 0,
            num_noise=int(self.clusters.noise_ids.shape[0]) if self.clusters else self.dataset.n,
            mean_loss=mean_loss,
        )
        if self.clusters is not None and self.dataset.has_identities:
            labels = pseudo_labels(self.clusters)
            embeddings = trainer.embed(self.projection, self.features)
            query_ids, gallery_ids = self._eval_split
            with self.dataset.unlocked_labels():
                identities = np.array(self.dataset.identities)
            report.map, report.cmc = evaluate_retrieval(
                query_ids, gallery_ids, embeddings, identities, self.dataset.cameras)
            report.pairwise_f1 = pairwise_f1(labels, identities)
            report.nmi = nmi(labels, identities)
        return report

    def summary(self):
        """Cluster/budget snapshot for the HTTP state endpoint."""
        return {
            "epoch": self.epoch,
            "finished": self.finished,
            "budget_used": self.ledger.budget_used,
            "budget_total": self.config.T,
            "num_clusters": len(self.clusters.clusters) if self.clusters else 0,
            "num_noise": int(self.clusters.noise_ids.shape[0]) if self.clusters else 0,
            "reports": [r.to_dict() for r in self.reports],
        }


class OracleAnnotator:
    """Verdict provider backed by the dataset's ground-truth identities."""

    source = annotation.VerdictSource.ORACLE

    def __init__(self, dataset):
        self.dataset = dataset

    def __call__(self, pair):
        return oracle_verdict(pair, self.dataset)


def drive(engine: Engine, annotator=None, recorded=None):
    """Run the annotation loop to completion.

    Recorded verdicts (ledger dicts) are consumed first, with each asked
    pair checked against its record; once they run out the live annotator
    takes over. Asking with neither available is a ReplayError.
    """
    recorded = list(recorded or [])
    position = 0
    gen = engine.annotation_events()
    try:
        pair = next(gen)
        while True:
            if position < len(recorded):
                record = recorded[position]
                expected = (record["a"], record["b"], record["stage"], record["epoch"])
                got = (pair.a, pair.b, pair.stage.value, engine.epoch)
                if expected != got:
                    raise ReplayError(
                        f"ledger record {position} is {expected} but the loop asked {got}")
                verdict = (record["v"], record.get("source", "oracle"))
                position += 1
            elif annotator is not None:
                verdict = (annotator(pair), annotator.source)
            else:
                raise ReplayError(
                    f"loop asked for {pair.key} beyond the {len(recorded)} recorded verdicts")
            pair = gen.send(verdict)
    except StopIteration:
        pass
    if position < len(recorded):
        raise ReplayError(
            f"{len(recorded) - position} recorded verdicts were never asked for")
    return engine


def run_simulation(dataset: EmbeddingDataset, config: EngineConfig, out_dir=None,
                   recorded=None):
    """Full oracle-driven run; optionally writes ledger/report/checkpoint
    artifacts. Returns the finished engine."""
    if not dataset.has_identities:
        raise EngineError("SIMULATE mode needs ground-truth identities")
    engine = Engine(dataset, config)
    drive(engine, OracleAnnotator(engine.dataset), recorded=recorded)
    if out_dir is not None:
        write_artifacts(engine, out_dir)
    return engine


def replay_run(dataset: EmbeddingDataset, config: EngineConfig, records,
               out_dir=None):
    """Reproduce a recorded run exactly from its ledger (no oracle needed)."""
    engine = Engine(dataset, config)
    drive(engine, annotator=None, recorded=records)
    if out_dir is not None:
        write_artifacts(engine, out_dir)
    return engine


def write_artifacts(engine: Engine, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    engine.ledger.write_ndjson(out_dir / "ledger.ndjson")
    write_reports(engine.reports, out_dir / "reports.json", out_dir / "progress.csv")
    trainer.save_checkpoint(out_dir / "checkpoint.vpk", engine.projection,
                            engine.config.tau, engine.config.momentum, engine.epoch)
    (out_dir / "config.json").write_text(
        json.dumps(engine.config.to_dict(), indent=2) + "\n")
