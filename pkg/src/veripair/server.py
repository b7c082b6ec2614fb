"""HTTP annotation service: the human realization of the verdict provider.

One engine run per process. The annotation loop generator is advanced by a
single background worker at a time (training happens inside an advance, so
GET next-pair reports {"phase": "training"} while it runs); verdicts are
appended to the ledger file after every submission, and restarting the
server replays that ledger to reconstruct the exact run state.
"""

from __future__ import annotations

import logging
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import kernels
from .annotation import VerdictSource, read_ledger_records
from .dataset import EmbeddingDataset
from .engine import SERVE, Engine, EngineConfig, EngineError, ReplayError
from .trainer import embed

logger = logging.getLogger(__name__)


class StaleSubmission(Exception):
    pass


class VerdictBody(BaseModel):
    pair_id: str
    v: int


class AnnotationSession:
    """Engine run driven one verdict at a time over HTTP."""

    def __init__(self, dataset: EmbeddingDataset, config: EngineConfig, state_dir=None):
        self.engine = Engine(dataset, config)
        self.session_id = uuid.uuid4().hex[:12]
        self.state_dir = Path(state_dir) if state_dir else None
        self._lock = threading.Lock()
        self._pending = None
        self._pending_id = None
        self._phase = "training"  # advancing to the first pair
        self._gen = self.engine.annotation_events()

        recorded = []
        if self.state_dir is not None:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            ledger_path = self.state_dir / "ledger.ndjson"
            if ledger_path.exists():
                recorded = read_ledger_records(ledger_path)
                logger.info("resuming session from %d recorded verdicts", len(recorded))
        self._spawn(lambda: self._boot(recorded))

    # -- worker side ----------------------------------------------------

    def _spawn(self, fn):
        threading.Thread(target=fn, daemon=True).start()

    def _boot(self, recorded):
        try:
            pair = next(self._gen)
            for record in recorded:
                expected = (record["a"], record["b"], record["stage"])
                got = (pair.a, pair.b, pair.stage.value)
                if expected != got:
                    raise ReplayError(f"ledger record {expected} but loop asked {got}")
                pair = self._gen.send((record["v"], record.get("source", "human")))
            self._set_pending(pair)
        except StopIteration:
            self._finish()

    def _advance(self, verdict):
        try:
            pair = self._gen.send((verdict, VerdictSource.HUMAN))
            self._set_pending(pair)
        except StopIteration:
            self._finish()

    def _set_pending(self, pair):
        with self._lock:
            self._pending = pair
            self._pending_id = f"{self.engine.ledger.budget_used}-{pair.a}-{pair.b}"
            self._phase = "annotating"
        self._persist()

    def _finish(self):
        with self._lock:
            self._pending = None
            self._pending_id = None
            self._phase = "done"
        self._persist()

    def _persist(self):
        if self.state_dir is None:
            return
        self.engine.ledger.write_ndjson(self.state_dir / "ledger.ndjson")

    # -- request side ---------------------------------------------------

    def next_pair(self):
        with self._lock:
            if self._phase == "annotating" and self._pending is not None:
                return self._pair_payload(self._pending, self._pending_id)
            if self._phase == "done":
                return {"phase": "done", "budget_used": self.engine.ledger.budget_used}
            return {"phase": "training"}

    def _pair_payload(self, pair, pair_id):
        embeddings = embed(self.engine.projection,
                           self.engine.features[[pair.a, pair.b]])
        return {
            "pair_id": pair_id,
            "a": self._panel(pair.a, embeddings[0]),
            "b": self._panel(pair.b, embeddings[1]),
            "stage": pair.stage.value,
            "budget_used": self.engine.ledger.budget_used,
            "budget_total": self.engine.config.T,
        }

    def _panel(self, sample_id, embedding):
        sample = self.engine.dataset.samples[sample_id]
        g = sample.g_descriptor
        return {
            "id": sample_id,
            "image_ref": sample.image_ref,
            "feature": [round(float(x), 6) for x in embedding],
            "g": None if g is None else [float(x) for x in g],
        }

    def submit(self, pair_id, v):
        if v not in (0, 1):
            raise ValueError("verdict must be 0 or 1")
        with self._lock:
            if self._phase != "annotating" or pair_id != self._pending_id:
                raise StaleSubmission(pair_id)
            self._pending = None
            self._pending_id = None
            self._phase = "training"
        after_this = self.engine.ledger.budget_used + 1
        self._spawn(lambda: self._advance(v))
        return {"accepted": True, "budget_used": after_this}

    def state(self):
        with self._lock:
            phase = self._phase
        summary = self.engine.summary()
        summary["phase"] = phase
        return summary


def create_app(dataset: EmbeddingDataset, config: EngineConfig,
               state_dir=None, ui_dir=None) -> FastAPI:
    if config.mode != SERVE:
        raise EngineError("the annotation service requires mode=SERVE")
    app = FastAPI(title="veripair annotation service")
    session = AnnotationSession(dataset, config, state_dir)
    app.state.session = session

    def get_session(session_id):
        if session_id != session.session_id:
            return None
        return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "kernel_backend": kernels.BACKEND}

    @app.post("/session")
    def open_session():
        return {"session_id": session.session_id}

    @app.get("/session/{session_id}/next-pair")
    def next_pair(session_id: str):
        s = get_session(session_id)
        if s is None:
            return JSONResponse({"error": "UNKNOWN_SESSION"}, status_code=404)
        return s.next_pair()

    @app.post("/session/{session_id}/verdict")
    def verdict(session_id: str, body: VerdictBody):
        s = get_session(session_id)
        if s is None:
            return JSONResponse({"error": "UNKNOWN_SESSION"}, status_code=404)
        if body.v not in (0, 1):
            return JSONResponse({"error": "BAD_VERDICT"}, status_code=400)
        try:
            return s.submit(body.pair_id, body.v)
        except StaleSubmission:
            return JSONResponse({"error": "STALE_PAIR"}, status_code=409)

    @app.get("/session/{session_id}/state")
    def state(session_id: str):
        s = get_session(session_id)
        if s is None:
            return JSONResponse({"error": "UNKNOWN_SESSION"}, status_code=404)
        return s.state()

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
