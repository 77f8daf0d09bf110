"""HTTP service wrapping checkpoints and drag sessions.

One process serves many sessions. Each session is created from a
registered checkpoint and a starting parameter vector, accumulates patch
selections, and then runs its drag on a single worker thread while any
number of clients attach to the event stream. Event payloads are built
from the exact trajectory records a direct library call would produce;
the stream adds framing, never content, so a service run is bit-equal to
a local one.

Wire format: JSON bodies; frames are base64 PNG bytes. The stream is
server-sent events: one `data:` line per trajectory record, then a final
`event: end` line carrying the terminal status. Statuses seen over HTTP
are the session statuses plus "configured" (before the run) and
"cancelled" (stopped by request).

Config keys (file section `serve`, environment, then explicit overrides,
each layer winning over the previous): host, port, checkpoint_dir,
idle_timeout. Environment names: DRAGSIM_HOST, DRAGSIM_PORT,
DRAGSIM_CHECKPOINT_DIR, DRAGSIM_IDLE_TIMEOUT.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import yaml
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .drag import DragConfig, run_drag
from .errors import (
    ArgumentError,
    CheckpointError,
    DataError,
    DragsimError,
    EmptyPatchError,
    RangeError,
    ShapeError,
)
from .imageio import png_bytes
from .model import load_checkpoint
from .patch import select_patch
from .synthdata import ParameterVector

ENV_PREFIX = "DRAGSIM_"
_CONFIG_KEYS = ("host", "port", "checkpoint_dir", "idle_timeout")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    checkpoint_dir: str = "."
    idle_timeout: float = 1800.0

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ArgumentError(f"port must be in [1, 65535], got {self.port}")
        if self.idle_timeout <= 0:
            raise ArgumentError("idle_timeout must be > 0")


def resolve_config(overrides: dict | None = None, config_file=None) -> ServiceConfig:
    """Defaults, then config-file `serve` section, then environment, then
    explicit overrides (the CLI's flags)."""
    values = {"host": "127.0.0.1", "port": 8765, "checkpoint_dir": ".",
              "idle_timeout": 1800.0}
    if config_file is not None:
        p = Path(config_file)
        if not p.exists():
            raise ArgumentError(f"config file not found: {p}")
        doc = yaml.safe_load(p.read_text()) or {}
        if not isinstance(doc, dict):
            raise ArgumentError("config file root must be a mapping")
        sect = doc.get("serve") or {}
        if not isinstance(sect, dict):
            raise ArgumentError("config section 'serve' must be a mapping")
        unknown = sorted(set(sect) - set(_CONFIG_KEYS))
        if unknown:
            raise ArgumentError(f"unknown keys in config section 'serve': {unknown}")
        values.update(sect)
    for key in _CONFIG_KEYS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            values[key] = env
    for key, val in (overrides or {}).items():
        if key not in _CONFIG_KEYS:
            raise ArgumentError(f"unknown service config key '{key}'")
        if val is not None:
            values[key] = val
    try:
        return ServiceConfig(host=str(values["host"]), port=int(values["port"]),
                             checkpoint_dir=str(values["checkpoint_dir"]),
                             idle_timeout=float(values["idle_timeout"]))
    except (TypeError, ValueError) as exc:
        raise ArgumentError(f"bad service config value: {exc}") from exc


# --------------------------------------------------------- wire format


def _canonical(doc: dict) -> str:
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


def encode_frame(image) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def record_payload(rec) -> dict:
    """The event body for one trajectory record. Shared by the stream,
    the trajectory endpoint, and the equivalence tests."""
    return {
        "step": rec.step,
        "theta": [float(v) for v in tuple(rec.theta.sim_values) + tuple(rec.theta.vis_values)],
        "points": [[int(x), int(y)] for x, y in rec.points],
        "loss": rec.loss,
        "status": rec.status,
        "frame": encode_frame(rec.image),
    }


def sse_record(payload: dict) -> bytes:
    return f"data: {_canonical(payload)}\n\n".encode()


def sse_end(status: str) -> bytes:
    return f"event: end\ndata: {_canonical({'status': status})}\n\n".encode()


# ------------------------------------------------------------ sessions


class _Session:
    def __init__(self, sid: str, checkpoint_id: str, theta: ParameterVector, image):
        self.id = sid
        self.checkpoint_id = checkpoint_id
        self.created_at = time.time()
        self.last_touch = self.created_at
        self.theta = theta
        self.base_image = image
        self.selections = []
        self.status = "configured"
        self.error = None
        self.events: list[dict] = []
        self.cond = threading.Condition()
        self.done = False
        self.cancel = threading.Event()
        self.worker: threading.Thread | None = None

    def touch(self):
        self.last_touch = time.time()

    def push(self, payload: dict):
        with self.cond:
            self.events.append(payload)
            self.cond.notify_all()

    def finish(self, status: str):
        with self.cond:
            self.status = status
            self.done = True
            self.cond.notify_all()

    @property
    def busy(self) -> bool:
        return self.worker is not None and not self.done


class _Checkpoint:
    def __init__(self, cid: str, path: Path, checkpoint):
        self.id = cid
        self.path = path
        self.checkpoint = checkpoint
        self.generator = checkpoint.to_generator()

    def describe(self) -> dict:
        return {
            "id": self.id,
            "path": str(self.path),
            "resolution": self.checkpoint.config.resolution,
            "spec": self.checkpoint.spec.to_json_dict(),
            "metadata": self.checkpoint.metadata,
        }


class _State:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.lock = threading.Lock()
        self.checkpoints: dict[str, _Checkpoint] = {}
        self.sessions: dict[str, _Session] = {}
        self.scan_errors: list[str] = []
        self._scan_checkpoint_dir()
        sweeper = threading.Thread(target=self._sweep_loop, daemon=True)
        sweeper.start()

    def _scan_checkpoint_dir(self):
        root = Path(self.config.checkpoint_dir)
        if not root.is_dir():
            return
        for path in sorted(root.glob("*.ckpt")):
            try:
                self.register(path)
            except (DragsimError, OSError) as exc:
                self.scan_errors.append(f"{path}: {exc}")

    def register(self, path) -> _Checkpoint:
        path = Path(path).resolve()
        if not path.exists():
            raise ArgumentError(f"checkpoint file not found: {path}")
        with self.lock:
            for ck in self.checkpoints.values():
                if ck.path == path:
                    return ck
        loaded = load_checkpoint(path)  # validates outside the lock
        with self.lock:
            for ck in self.checkpoints.values():
                if ck.path == path:
                    return ck
            cid = path.stem
            k = 2
            while cid in self.checkpoints:
                cid = f"{path.stem}-{k}"
                k += 1
            ck = _Checkpoint(cid, path, loaded)
            self.checkpoints[cid] = ck
            return ck

    def checkpoint(self, cid: str) -> _Checkpoint:
        with self.lock:
            ck = self.checkpoints.get(cid)
        if ck is None:
            raise HTTPException(404, f"unknown checkpoint id '{cid}'")
        return ck

    def session(self, sid: str) -> _Session:
        with self.lock:
            sess = self.sessions.get(sid)
        if sess is None:
            raise HTTPException(404, f"unknown session id '{sid}'")
        sess.touch()
        return sess

    def _sweep_loop(self):
        period = min(self.config.idle_timeout / 4.0, 30.0)
        while True:
            time.sleep(period)
            cutoff = time.time() - self.config.idle_timeout
            with self.lock:
                stale = [
                    sid for sid, s in self.sessions.items()
                    if s.last_touch < cutoff and not s.busy
                ]
                for sid in stale:
                    del self.sessions[sid]


# ------------------------------------------------------------- bodies


class RegisterBody(BaseModel):
    path: str


class CreateSessionBody(BaseModel):
    checkpoint: str
    theta: list[float]


class SelectionBody(BaseModel):
    select: tuple[int, int]
    target: tuple[int, int]
    d: float = 0.95
    r: float = 3.0
    cap_radius: float | None = None


class StartDragBody(BaseModel):
    r_m: float | None = None
    d_threshold: float | None = None
    max_iters: int | None = None
    step_size: float | None = None
    free_mask: list[bool] | None = None
    feature_layer: str | None = None
    disappearance_window: str | None = None


_INPUT_ERRORS = (ArgumentError, DataError, RangeError, ShapeError, EmptyPatchError)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = _State(config or ServiceConfig())
    app = FastAPI(title="dragsim service")
    app.state.dragsim = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.post("/checkpoints", status_code=201)
    def register_checkpoint(body: RegisterBody):
        try:
            ck = state.register(body.path)
        except _INPUT_ERRORS as exc:
            raise HTTPException(422, str(exc))
        except CheckpointError as exc:
            raise HTTPException(422, str(exc))
        return ck.describe()

    @app.get("/checkpoints")
    def list_checkpoints():
        with state.lock:
            docs = [ck.describe() for ck in state.checkpoints.values()]
        return {"checkpoints": sorted(docs, key=lambda d: d["id"])}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        ck = state.checkpoint(body.checkpoint)
        spec = ck.generator.spec
        want = spec.m + spec.n
        if len(body.theta) != want:
            raise HTTPException(
                422, f"theta needs {want} values ({spec.m} simulation + "
                     f"{spec.n} visualization), got {len(body.theta)}"
            )
        theta = ParameterVector(tuple(body.theta[: spec.m]), tuple(body.theta[spec.m :]))
        try:
            image = ck.generator.generate(theta)
        except _INPUT_ERRORS as exc:
            raise HTTPException(422, str(exc))
        sess = _Session(uuid.uuid4().hex, ck.id, theta, image)
        with state.lock:
            state.sessions[sess.id] = sess
        return {
            "id": sess.id,
            "checkpoint": ck.id,
            "status": sess.status,
            "theta": list(body.theta),
            "frame": encode_frame(image),
        }

    @app.post("/sessions/{sid}/selections")
    def add_selection(sid: str, body: SelectionBody):
        sess = state.session(sid)
        if sess.status != "configured":
            raise HTTPException(409, f"session is {sess.status}; selections are closed")
        try:
            sel = select_patch(sess.base_image, tuple(body.select),
                               d=body.d, r=body.r, cap_radius=body.cap_radius)
        except _INPUT_ERRORS as exc:
            raise HTTPException(422, str(exc))
        sel.target = tuple(body.target)
        h, w = sess.base_image.shape[:2]
        tx, ty = sel.target
        if not (0 <= tx < w and 0 <= ty < h):
            raise HTTPException(422, f"target {sel.target} outside {w}x{h} image")
        sess.selections.append(sel)
        return {
            "index": len(sess.selections) - 1,
            "seed": list(sel.seed),
            "target": list(sel.target),
            "pixels": sorted([list(p) for p in sel.pixels]),
        }

    def _stream(sess: _Session):
        i = 0
        while True:
            with sess.cond:
                sess.cond.wait_for(lambda: len(sess.events) > i or sess.done)
                chunk = sess.events[i:]
                finished = sess.done and i + len(chunk) == len(sess.events)
                status = sess.status
            for payload in chunk:
                yield sse_record(payload)
            i += len(chunk)
            if finished:
                yield sse_end(status)
                return

    @app.post("/sessions/{sid}/drag")
    def start_drag(sid: str, body: StartDragBody):
        sess = state.session(sid)
        ck = state.checkpoint(sess.checkpoint_id)
        if sess.status != "configured":
            raise HTTPException(409, f"session is {sess.status}; drag already started")
        if not sess.selections:
            raise HTTPException(422, "session has no selections")
        overrides = {k: v for k, v in body.model_dump().items() if v is not None}
        if "free_mask" in overrides:
            overrides["free_mask"] = tuple(overrides["free_mask"])
        try:
            config = DragConfig(**overrides)
        except _INPUT_ERRORS as exc:
            raise HTTPException(422, str(exc))

        def work():
            try:
                result = run_drag(ck.generator, sess.theta, sess.selections, config,
                                  on_step=lambda rec: sess.push(record_payload(rec)),
                                  should_stop=sess.cancel.is_set)
                final = "cancelled" if sess.cancel.is_set() else result.status
                sess.error = result.error
            except Exception as exc:  # worker must always close the stream
                sess.error = str(exc)
                final = "aborted"
            sess.finish(final)

        sess.status = "running"
        sess.worker = threading.Thread(target=work, daemon=True)
        sess.worker.start()
        return StreamingResponse(_stream(sess), media_type="text/event-stream")

    @app.get("/sessions/{sid}/events")
    def attach_events(sid: str):
        sess = state.session(sid)
        if sess.worker is None:
            raise HTTPException(409, "drag not started; nothing to stream")
        return StreamingResponse(_stream(sess), media_type="text/event-stream")

    @app.get("/sessions/{sid}/trajectory")
    def get_trajectory(sid: str):
        sess = state.session(sid)
        with sess.cond:
            records = list(sess.events)
            status = sess.status
        return {"id": sess.id, "status": status, "steps": len(records),
                "records": records}

    @app.post("/sessions/{sid}/cancel")
    def cancel_session(sid: str):
        sess = state.session(sid)
        if sess.status == "configured":
            sess.finish("cancelled")
        elif not sess.done:
            sess.cancel.set()
            if sess.worker is not None:
                sess.worker.join()
        with sess.cond:
            status = sess.status
        return {"id": sess.id, "status": status}

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str):
        sess = state.session(sid)
        sess.cancel.set()
        if sess.worker is not None and not sess.done:
            sess.worker.join()
        with state.lock:
            state.sessions.pop(sid, None)

    @app.get("/health")
    def health():
        with state.lock:
            return {
                "status": "ok",
                "checkpoints": len(state.checkpoints),
                "sessions": len(state.sessions),
                "scan_errors": list(state.scan_errors),
            }

    return app


def run_server(config: ServiceConfig | None = None):
    """Blocking entry point used by the CLI serve command."""
    import uvicorn

    cfg = config or ServiceConfig()
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")
