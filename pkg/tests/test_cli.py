import json

import numpy as np
import pytest

from veripair.cli import main


@pytest.fixture
def workspace(tmp_path):
    data_dir = tmp_path / "data"
    assert main(["gen-synth", "--identities", "8", "--per-identity", "12",
                 "--overlap", "0.3", "--seed", "5", "--out", str(data_dir)]) == 0
    config = dict(T=20, epochs=3, seed=3, k_reciprocal=10, eps=0.5, min_pts=3,
                  d_emb=8, learning_rate=0.2, batch_size=32)
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    return tmp_path, data_dir / "dataset.json", config_path


class TestCli:
    def test_gen_synth_writes_loadable_dataset(self, workspace):
        _, manifest, _ = workspace
        from veripair.dataset import load_dataset
        ds = load_dataset(manifest)
        assert ds.n == 96 and ds.feature_dim == 32
        assert ds.has_identities and ds.g_descriptors is not None

    def test_simulate_evaluate_replay_round_trip(self, workspace, capsys):
        tmp_path, manifest, config_path = workspace
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(config_path),
                     "--dataset", str(manifest), "--out", str(out)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["epoch"] == 2

        assert main(["evaluate", "--checkpoint", str(out / "checkpoint.vpk"),
                     "--dataset", str(manifest)]) == 0
        evaluated = json.loads(capsys.readouterr().out)
        assert 0.0 <= evaluated["map"] <= 1.0

        replay_out = tmp_path / "replay"
        assert main(["replay", "--ledger", str(out / "ledger.ndjson"),
                     "--config", str(config_path), "--dataset", str(manifest),
                     "--out", str(replay_out)]) == 0
        capsys.readouterr()
        assert (out / "checkpoint.vpk").read_bytes() == \
               (replay_out / "checkpoint.vpk").read_bytes()
        assert (out / "reports.json").read_bytes() == \
               (replay_out / "reports.json").read_bytes()

    def test_progress_csv_budget_column_monotone(self, workspace):
        tmp_path, manifest, config_path = workspace
        out = tmp_path / "run2"
        main(["simulate", "--config", str(config_path),
              "--dataset", str(manifest), "--out", str(out)])
        rows = (out / "progress.csv").read_text().splitlines()[1:]
        budgets = [int(r.split(",")[0]) for r in rows]
        assert budgets == sorted(budgets)
