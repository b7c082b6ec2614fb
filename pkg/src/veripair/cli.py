"""Command-line entry points: simulate, serve, gen-synth, evaluate, replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .annotation import read_ledger_records
from .dataset import l2_normalize, load_dataset, split_query_gallery, write_dataset
from .engine import EngineConfig, replay_run, run_simulation
from .evaluation import evaluate_retrieval
from .synth import make_synthetic
from .trainer import embed, load_checkpoint


def main(argv=None):
    parser = argparse.ArgumentParser(prog="veripair")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the loop with the simulated oracle")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="serve the annotation HTTP API")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--listen", default="127.0.0.1:8008")
    p.add_argument("--ui", help="directory with the built web UI (served at /ui)")

    p = sub.add_parser("gen-synth", help="write a synthetic labeled dataset")
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--per-identity", type=int, required=True)
    p.add_argument("--overlap", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--g-dim", type=int, default=8)

    p = sub.add_parser("evaluate", help="retrieval metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--query-fraction", type=float, default=0.2)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("replay", help="reproduce a run from its verdict ledger")
    p.add_argument("--ledger", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


def cmd_simulate(args):
    config = EngineConfig.from_json(args.config)
    dataset = load_dataset(args.dataset)
    engine = run_simulation(dataset, config, args.out)
    last = engine.reports[-1].to_dict()
    print(json.dumps(last, indent=2))
    return 0


def cmd_serve(args):
    import uvicorn

    from .server import create_app

    config = EngineConfig.from_json(args.config)
    dataset = load_dataset(args.dataset)
    app = create_app(dataset, config, state_dir=args.state, ui_dir=args.ui)
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def cmd_gen_synth(args):
    dataset = make_synthetic(args.identities, args.per_identity, args.overlap,
                             args.seed, feature_dim=args.feature_dim, g_dim=args.g_dim)
    manifest = write_dataset(dataset, args.out)
    print(manifest)
    return 0


def cmd_evaluate(args):
    projection, header = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    if not args.no_normalize:
        dataset = l2_normalize(dataset)
    query_ids, gallery_ids = split_query_gallery(dataset, args.query_fraction, args.seed)
    embeddings = embed(projection, dataset.features)
    with dataset.unlocked_labels():
        identities = np.array(dataset.identities)
    mean_ap, cmc = evaluate_retrieval(query_ids, gallery_ids, embeddings,
                                      identities, dataset.cameras)
    report = {"checkpoint_epoch": header["epoch"], "map": mean_ap,
              "cmc": {str(k): v for k, v in sorted(cmc.items())}}
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_replay(args):
    config = EngineConfig.from_json(args.config)
    dataset = load_dataset(args.dataset)
    records = read_ledger_records(args.ledger)
    engine = replay_run(dataset, config, records, args.out)
    print(json.dumps(engine.reports[-1].to_dict(), indent=2))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "serve": cmd_serve,
    "gen-synth": cmd_gen_synth,
    "evaluate": cmd_evaluate,
    "replay": cmd_replay,
}


if __name__ == "__main__":
    sys.exit(main())
