import json

import numpy as np
import pytest

from veripair.engine import (
    Engine,
    EngineConfig,
    EngineError,
    OracleAnnotator,
    ReplayError,
    drive,
    replay_run,
    run_simulation,
    write_artifacts,
)
from veripair.synth import make_synthetic


def small_config(**overrides):
    base = dict(T=24, epochs=3, k_reciprocal=8, d_emb=6, seed=11,
                learning_rate=0.2, batch_size=32, eps=0.5, min_pts=3)
    base.update(overrides)
    return EngineConfig(**base)


@pytest.fixture(scope="module")
def small_dataset():
    return make_synthetic(8, 14, 0.35, seed=3, feature_dim=16, g_dim=6)


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = small_config()
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert EngineConfig.from_json(path) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"T": 5, "bogus": 1}))
        with pytest.raises(EngineError, match="bogus"):
            EngineConfig.from_json(path)

    def test_invalid_values_rejected(self):
        with pytest.raises(EngineError):
            EngineConfig(T=-1).validate()
        with pytest.raises(EngineError):
            EngineConfig(epochs=0).validate()
        with pytest.raises(EngineError):
            EngineConfig(mode="BATCH").validate()


class TestSimulation:
    def test_budget_ceiling_and_unique_pairs(self, small_dataset):
        engine = run_simulation(small_dataset, small_config())
        assert engine.ledger.budget_used <= engine.config.T
        keys = [v.pair.key for v in engine.ledger.verdicts]
        assert len(keys) == len(set(keys))

    def test_determinism_bitwise(self, small_dataset):
        cfg = small_config()
        e1 = run_simulation(small_dataset, cfg)
        e2 = run_simulation(small_dataset, cfg)
        np.testing.assert_array_equal(e1.projection.weights, e2.projection.weights)
        assert [r.to_dict() for r in e1.reports] == [r.to_dict() for r in e2.reports]
        assert e1.ledger.to_records() == e2.ledger.to_records()

    def test_zero_budget_is_unsupervised_baseline(self, small_dataset):
        cfg = small_config(T=0)
        engine = run_simulation(small_dataset, cfg)
        assert engine.ledger.budget_used == 0
        assert all(r.budget_used == 0 for r in engine.reports)

    def test_missing_labels_rejected(self):
        from veripair.dataset import EmbeddingDataset
        ds = EmbeddingDataset(np.random.default_rng(0).normal(size=(30, 8)))
        with pytest.raises(EngineError, match="identities"):
            run_simulation(ds, small_config())

    def test_two_separable_identities_reach_perfect_f1(self):
        ds = make_synthetic(2, 20, 0.05, seed=9, feature_dim=8)
        cfg = EngineConfig(T=4, epochs=2, k_reciprocal=15, d_emb=4, seed=1,
                           learning_rate=0.1, eps=0.7, min_pts=3)
        engine = run_simulation(ds, cfg)
        assert engine.reports[-1].pairwise_f1 == 1.0
        assert engine.reports[-1].num_noise == 0

    def test_selection_never_reads_labels(self, small_dataset):
        engine = Engine(small_dataset, small_config(T=10, epochs=1))
        annotator = OracleAnnotator(engine.dataset)
        reads_before = engine.dataset.label_reads
        gen = engine.annotation_events()
        pair = next(gen)  # clustering + full selection of the first pair
        assert engine.dataset.label_reads == reads_before  # untouched so far
        try:
            gen.send((annotator(pair), annotator.source))
        except StopIteration:
            pass
        assert engine.dataset.label_reads > reads_before  # only the oracle read

    def test_schedule_consumed_per_epoch(self, small_dataset):
        cfg = small_config(T=12, epochs=3)
        engine = run_simulation(small_dataset, cfg)
        cumulative = np.cumsum(engine.schedule)
        for report in engine.reports:
            assert report.budget_used <= cumulative[report.epoch]


class TestArtifacts:
    def test_written_files(self, small_dataset, tmp_path):
        cfg = small_config(T=10, epochs=2)
        run_simulation(small_dataset, cfg, out_dir=tmp_path)
        for name in ("ledger.ndjson", "reports.json", "progress.csv",
                     "checkpoint.vpk", "config.json"):
            assert (tmp_path / name).exists(), name
        reports = json.loads((tmp_path / "reports.json").read_text())
        assert len(reports) == 2

    def test_two_runs_bitwise_identical_artifacts(self, small_dataset, tmp_path):
        cfg = small_config(T=10, epochs=2)
        run_simulation(small_dataset, cfg, out_dir=tmp_path / "a")
        run_simulation(small_dataset, cfg, out_dir=tmp_path / "b")
        for name in ("reports.json", "checkpoint.vpk", "ledger.ndjson"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes(), name


class TestReplay:
    def test_replay_reproduces_final_state(self, small_dataset):
        cfg = small_config()
        recorded = run_simulation(small_dataset, cfg)
        replayed = replay_run(small_dataset, cfg, recorded.ledger.to_records())
        np.testing.assert_array_equal(recorded.clusters.assignment,
                                      replayed.clusters.assignment)
        np.testing.assert_array_equal(recorded.projection.weights,
                                      replayed.projection.weights)
        assert [r.to_dict() for r in recorded.reports] == \
               [r.to_dict() for r in replayed.reports]

    def test_resume_from_prefix_matches_uninterrupted(self, small_dataset):
        cfg = small_config()
        full = run_simulation(small_dataset, cfg)
        records = full.ledger.to_records()
        cut = len(records) // 2  # pretend the run died here
        resumed = Engine(small_dataset, cfg)
        drive(resumed, OracleAnnotator(resumed.dataset), recorded=records[:cut])
        np.testing.assert_array_equal(full.projection.weights,
                                      resumed.projection.weights)
        assert full.ledger.to_records() == resumed.ledger.to_records()

    def test_mismatched_ledger_rejected(self, small_dataset):
        cfg = small_config()
        records = run_simulation(small_dataset, cfg).ledger.to_records()
        records[0]["a"] = records[0]["a"] + 1
        with pytest.raises(ReplayError):
            replay_run(small_dataset, cfg, records)

    def test_leftover_records_rejected(self, small_dataset):
        cfg = small_config()
        records = run_simulation(small_dataset, cfg).ledger.to_records()
        extra = dict(records[-1])
        extra["seq"] += 1
        extra["a"] += 2
        with pytest.raises(ReplayError):
            replay_run(small_dataset, cfg, records + [extra])


class TestMonotonePurity:
    def test_mean_f1_nondecreasing_in_budget(self):
        """Across 20 seeded runs, mean pseudo-label F1 at epoch boundaries
        never drops as the consumed budget grows."""
        trajectories = []
        for seed in range(20):
            ds = make_synthetic(20, 12, 0.3, seed=300 + seed, feature_dim=32, g_dim=8)
            cfg = EngineConfig(T=60, epochs=6, seed=seed, k_reciprocal=10, eps=0.45,
                               min_pts=4, d_emb=16, learning_rate=0.2, tau=0.05,
                               batch_size=64)
            engine = run_simulation(ds, cfg)
            trajectories.append([r.pairwise_f1 for r in engine.reports])
            assert all(a.budget_used <= b.budget_used
                       for a, b in zip(engine.reports, engine.reports[1:]))
        mean_f1 = np.mean(trajectories, axis=0)
        assert (np.diff(mean_f1) >= -1e-12).all(), mean_f1


class TestAblationToggles:
    def test_stage_split_extremes(self, small_dataset):
        only_intra = run_simulation(small_dataset, small_config(stage_split=1.0))
        stages = {v.pair.stage.value for v in only_intra.ledger.verdicts}
        assert stages <= {"intra"}
        only_inter = run_simulation(small_dataset, small_config(stage_split=0.0))
        stages = {v.pair.stage.value for v in only_inter.ledger.verdicts}
        assert stages <= {"inter"}

    def test_batch_select_mode_runs(self, small_dataset):
        engine = run_simulation(small_dataset, small_config(batch_select=True))
        assert engine.ledger.budget_used > 0
