"""HTTP session service for the interactive annotate-train-inspect loop.

Sessions persist on disk under a store root, one directory per session:

    <store>/<id>/session.json      committed metadata (atomic replace)
    <store>/<id>/image.png         uploaded image bytes, verbatim
    <store>/<id>/scribbles.png     current scribble mask (8-bit, 255 = unlabeled)
    <store>/<id>/rev_00001/        checkpoint.ckpt, mask.png, mask.json, prob.tif

A revision directory is fully written before session.json is replaced, so a
reader can never observe a mask from one revision with a checkpoint from
another, and a crash leaves the last committed revision intact. One training
job may run per session at a time; reads are always served from committed
files.
"""

from __future__ import annotations

import base64
import io
import json
import os
import shutil
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from PIL import Image

from . import featviz
from .backbone import BackboneSpec
from .decoder import DecoderConfig, LabelMask, argmax_mask
from .errors import (
    ConfigurationError,
    ContractError,
    InputError,
    ScribblesegError,
    SupervisionError,
)
from .fusion import FusionConfig
from .images import ImagePlane, decode_image_bytes, normalize_plane
from .loss import IGNORE_INDEX, LossConfig
from .model import ModelState, init_model
from .tiler import (
    TileLayout,
    save_label_mask_png,
    save_probability_tiff,
    tiled_inference,
    tv_smooth,
)
from .trainer import (
    ScribbleMask,
    TrainConfig,
    extract_rois,
    load_checkpoint,
    save_checkpoint,
    train,
)


class BusyError(ScribblesegError):
    """A mutation arrived while a training job holds the session."""


class NotFoundError(ScribblesegError):
    """Unknown session or revision."""


def _default_tiler_cfg() -> dict:
    return {"tile_size": 512, "overlap_fraction": 0.5, "tv_weight": 0.1, "eps_blend": 0.01}


class Session:
    """Runtime wrapper around one persisted session directory."""

    def __init__(self, root: Path):
        self.root = root
        self.lock = threading.RLock()
        self.events: list[dict] = []
        self.events_cond = threading.Condition(self.lock)
        self.status = "idle"
        self._model: ModelState | None = None
        self._image: ImagePlane | None = None
        self._job: threading.Thread | None = None

    # ---- persisted metadata -------------------------------------------------

    @property
    def meta_path(self) -> Path:
        return self.root / "session.json"

    def read_meta(self) -> dict:
        return json.loads(self.meta_path.read_text())

    def write_meta(self, meta: dict) -> None:
        tmp = self.root / "session.json.tmp"
        tmp.write_text(json.dumps(meta, indent=2, sort_keys=True))
        os.replace(tmp, self.meta_path)

    def rev_dir(self, revision: int) -> Path:
        return self.root / f"rev_{revision:05d}"

    # ---- lazy-loaded heavyweight state ---------------------------------------

    def image(self, meta: dict) -> ImagePlane:
        if self._image is None:
            raw = (self.root / meta["image_file"]).read_bytes()
            plane = decode_image_bytes(raw, spacing_um=meta["spacing_um"])
            self._image = normalize_plane(plane)
        return self._image

    def model(self, meta: dict) -> ModelState:
        if self._model is None:
            revision = meta["revision"]
            spec = BackboneSpec.from_dict(meta["model"]["backbone"])
            if revision > 0:
                ckpt = self.rev_dir(revision) / "checkpoint.ckpt"
                state, _, _ = load_checkpoint(ckpt)
                self._model = state
            else:
                self._model = init_model(
                    spec,
                    FusionConfig.from_dict(meta["model"]["fusion"]),
                    DecoderConfig.from_dict(meta["model"]["decoder"]),
                    seed=meta["seed"],
                )
        return self._model

    def scribbles(self, meta: dict) -> ScribbleMask:
        path = self.root / "scribbles.png"
        if not path.exists():
            h, w = meta["image_shape"]
            return ScribbleMask(
                data=np.full((h, w), IGNORE_INDEX, dtype=np.uint8),
                spacing_um=meta["spacing_um"],
            )
        with Image.open(path) as img:
            data = np.asarray(img.convert("L"), dtype=np.uint8)
        return ScribbleMask(data=data, spacing_um=meta["spacing_um"])

    def push_event(self, event: dict) -> None:
        with self.events_cond:
            event = dict(event, seq=len(self.events), time=time.time())
            self.events.append(event)
            self.events_cond.notify_all()


class SessionManager:
    """Owns the store root and the per-session runtime objects."""

    def __init__(self, store_root: str | Path):
        self.store_root = Path(store_root)
        self.store_root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # ---- lookup --------------------------------------------------------------

    def _session(self, session_id: str) -> Session:
        with self._registry_lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
            root = self.store_root / session_id
            if not (root / "session.json").exists():
                raise NotFoundError(f"no session {session_id!r}")
            session = Session(root)
            self._sessions[session_id] = session
            return session

    def list_sessions(self) -> list[dict]:
        out = []
        for meta_path in sorted(self.store_root.glob("*/session.json")):
            meta = json.loads(meta_path.read_text())
            out.append(self._public_meta(meta, self._status(meta["id"])))
        return out

    def _status(self, session_id: str) -> str:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        return session.status if session else "idle"

    @staticmethod
    def _public_meta(meta: dict, status: str) -> dict:
        return {
            "id": meta["id"],
            "revision": meta["revision"],
            "status": status,
            "spacing_um": meta["spacing_um"],
            "classes": meta["classes"],
            "image_shape": meta["image_shape"],
        }

    # ---- operations ------------------------------------------------------------

    def create_session(
        self,
        image_bytes: bytes,
        spacing_um: float,
        classes: list[dict],
        config: dict | None = None,
        seed: int = 0,
    ) -> dict:
        if len(classes) < 2:
            raise InputError("a session needs at least 2 classes")
        ids = [int(c["id"]) for c in classes]
        colors = [c.get("color", "") for c in classes]
        if len(set(ids)) != len(ids):
            raise InputError("class ids must be unique")
        if len(set(colors)) != len(colors):
            raise InputError("class colors must be unique")
        if any(i < 0 or i >= IGNORE_INDEX for i in ids):
            raise InputError(f"class ids must lie in [0, {IGNORE_INDEX - 1}]")
        plane = decode_image_bytes(image_bytes, spacing_um)  # validates payload

        config = config or {}
        spec = BackboneSpec.from_dict(config.get("backbone", {}))
        fusion = FusionConfig.from_dict(config.get("fusion", {}))
        decoder_cfg = dict(config.get("decoder", {}))
        decoder_cfg["num_classes"] = max(ids) + 1
        decoder = DecoderConfig.from_dict(decoder_cfg)
        loss = LossConfig.from_dict(config.get("loss", {}))
        train_cfg = TrainConfig.from_dict(config.get("train", {}))
        tiler_cfg = {**_default_tiler_cfg(), **config.get("tiler", {})}
        # fail fast on inconsistent model configs
        init_model(spec, fusion, decoder, seed=seed)

        session_id = uuid.uuid4().hex[:12]
        root = self.store_root / session_id
        root.mkdir(parents=True)
        (root / "image.png").write_bytes(image_bytes)
        meta = {
            "id": session_id,
            "revision": 0,
            "spacing_um": float(spacing_um),
            "classes": classes,
            "image_file": "image.png",
            "image_shape": list(plane.shape),
            "seed": int(seed),
            "model": {
                "backbone": spec.to_dict(),
                "fusion": fusion.to_dict(),
                "decoder": decoder.to_dict(),
                "loss": loss.to_dict(),
                "train": train_cfg.to_dict(),
                "tiler": tiler_cfg,
            },
        }
        session = Session(root)
        session.write_meta(meta)
        with self._registry_lock:
            self._sessions[session_id] = session
        return self._public_meta(meta, "idle")

    def get_session(self, session_id: str) -> dict:
        session = self._session(session_id)
        return self._public_meta(session.read_meta(), session.status)

    def put_scribbles(self, session_id: str, mask: np.ndarray) -> dict:
        session = self._session(session_id)
        with session.lock:
            if session.status != "idle":
                raise BusyError("session is training; retry when idle")
            meta = session.read_meta()
            h, w = meta["image_shape"]
            if mask.shape != (h, w):
                raise ContractError(
                    f"scribble mask {mask.shape} does not match image {(h, w)}"
                )
            known = {int(c["id"]) for c in meta["classes"]}
            present = {int(v) for v in np.unique(mask)} - {IGNORE_INDEX}
            unknown = present - known
            if unknown:
                raise ContractError(f"scribbles reference unknown class ids {sorted(unknown)}")
            tmp = session.root / "scribbles.png.tmp"
            Image.fromarray(mask.astype(np.uint8), mode="L").save(tmp, format="PNG")
            os.replace(tmp, session.root / "scribbles.png")
            return self._public_meta(meta, session.status)

    def get_scribbles(self, session_id: str) -> np.ndarray:
        session = self._session(session_id)
        meta = session.read_meta()
        return session.scribbles(meta).data

    def train_session(self, session_id: str, epochs: int | None = None) -> dict:
        session = self._session(session_id)
        with session.lock:
            if session.status != "idle":
                raise BusyError("a training job is already running")
            meta = session.read_meta()
            scribbles = session.scribbles(meta)
            present = scribbles.classes_present()
            if len(present) < 2:
                raise SupervisionError(
                    f"training needs scribbles in at least 2 classes, found {present}"
                )
            session.status = "training"
            session.events = []
            session.push_event({"type": "started", "revision": meta["revision"]})
            job = threading.Thread(
                target=self._run_training,
                args=(session, meta, scribbles, epochs),
                daemon=True,
            )
            session._job = job
            job.start()
            return self._public_meta(meta, session.status)

    def _run_training(self, session: Session, meta: dict, scribbles: ScribbleMask, epochs):
        try:
            model_cfg = meta["model"]
            train_cfg = TrainConfig.from_dict(model_cfg["train"])
            loss_cfg = LossConfig.from_dict(model_cfg["loss"])
            tiler_cfg = model_cfg["tiler"]
            state = session.model(meta)
            image = session.image(meta)

            rois = extract_rois(image, scribbles, train_cfg.roi_size)
            n_epochs = train_cfg.epochs_interactive if epochs is None else int(epochs)

            def progress(epoch, mean_loss):
                session.push_event({"type": "epoch", "epoch": epoch, "loss": mean_loss})

            train(state, rois, train_cfg, loss_cfg, n_epochs, progress=progress)

            session.status = "inferring"
            session.push_event({"type": "inferring"})
            layout = TileLayout(
                image_shape=image.shape,
                tile_size=tiler_cfg["tile_size"],
                overlap_fraction=tiler_cfg["overlap_fraction"],
            )
            prob = tiled_inference(image, state, layout, eps_blend=tiler_cfg["eps_blend"])
            prob = tv_smooth(prob, tiler_cfg["tv_weight"])
            mask = argmax_mask(prob)

            revision = meta["revision"] + 1
            rev_dir = session.rev_dir(revision)
            if rev_dir.exists():
                shutil.rmtree(rev_dir)  # leftovers from an interrupted job
            rev_dir.mkdir()
            save_checkpoint(state, rev_dir / "checkpoint.ckpt", train_cfg, loss_cfg)
            save_label_mask_png(
                mask, rev_dir / "mask.png", meta["classes"], rev_dir / "mask.json"
            )
            save_probability_tiff(prob, rev_dir / "prob.tif")
            with session.lock:
                meta = session.read_meta()
                meta["revision"] = revision
                session.write_meta(meta)
                session.status = "idle"
            session.push_event({"type": "completed", "revision": revision})
        except ScribblesegError as exc:
            session.status = "idle"
            session.push_event({"type": "error", "cause": str(exc)})
        except Exception as exc:  # keep the session usable after surprises
            session.status = "idle"
            session.push_event({"type": "error", "cause": f"internal error: {exc}"})

    # ---- committed artifacts ---------------------------------------------------

    def _committed(self, session_id: str, revision: int | None):
        session = self._session(session_id)
        meta = session.read_meta()
        committed = meta["revision"]
        if revision is None:
            revision = committed
        if revision > committed or revision < 0:
            raise NotFoundError(f"revision {revision} is not committed (latest {committed})")
        return session, meta, revision

    def get_mask_png(self, session_id: str, revision: int | None = None):
        session, meta, revision = self._committed(session_id, revision)
        if revision == 0:
            h, w = meta["image_shape"]
            untrained = LabelMask(np.zeros((h, w), dtype=np.uint8), meta["spacing_um"])
            buf = io.BytesIO()
            Image.fromarray(untrained.data, mode="P").save(buf, format="PNG")
            return buf.getvalue(), revision, session.status, True
        data = (session.rev_dir(revision) / "mask.png").read_bytes()
        return data, revision, session.status, False

    def get_probabilities_tiff(self, session_id: str, revision: int | None = None):
        session, meta, revision = self._committed(session_id, revision)
        if revision == 0:
            raise NotFoundError("no trained model yet (revision 0)")
        data = (session.rev_dir(revision) / "prob.tif").read_bytes()
        return data, revision, session.status

    def get_pca_png(self, session_id: str, layer: int):
        session = self._session(session_id)
        meta = session.read_meta()
        spec = BackboneSpec.from_dict(meta["model"]["backbone"])
        if layer not in spec.tap_layers:
            raise ConfigurationError(
                f"layer {layer} is not a tap layer of {spec.tap_layers}"
            )
        image = session.image(meta)
        rgb, _ = featviz.pca_rgb_roi(image, spec, layer, upsample_to_pixels=True)
        buf = io.BytesIO()
        Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
        return buf.getvalue(), meta["revision"], session.status

    def events_since(self, session_id: str, start: int, timeout: float = 30.0):
        """Block until events beyond `start` exist; returns (events, done flag)."""
        session = self._session(session_id)
        deadline = time.monotonic() + timeout
        with session.events_cond:
            while len(session.events) <= start:
                remaining = deadline - time.monotonic()
                terminal = session.events and session.events[-1]["type"] in ("completed", "error")
                if terminal or session.status == "idle" or remaining <= 0:
                    break
                session.events_cond.wait(timeout=min(remaining, 0.25))
            events = session.events[start:]
            done = bool(session.events) and session.events[-1]["type"] in ("completed", "error")
            return events, done


# ---- wire formats ---------------------------------------------------------------


def rle_encode(mask: np.ndarray, ignore_index: int = IGNORE_INDEX) -> dict:
    """Row-major run-length encoding of the labeled pixels of a mask."""
    h, w = mask.shape
    flat = mask.reshape(-1)
    runs = []
    change = np.nonzero(np.diff(flat) != 0)[0] + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    for s, e in zip(starts, ends):
        value = int(flat[s])
        if value != ignore_index:
            runs.append([int(s), int(e - s), value])
    return {"width": w, "height": h, "runs": runs}


def rle_decode(payload: dict, ignore_index: int = IGNORE_INDEX) -> np.ndarray:
    try:
        h, w = int(payload["height"]), int(payload["width"])
        runs = payload["runs"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed RLE scribble payload: {exc}") from exc
    flat = np.full(h * w, ignore_index, dtype=np.uint8)
    for start, length, value in runs:
        if start < 0 or length < 0 or start + length > flat.size:
            raise InputError(f"RLE run ({start}, {length}) exceeds {h}x{w} mask")
        flat[start : start + length] = value
    return flat.reshape(h, w)


def decode_scribble_png(raw: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise InputError(f"cannot decode scribble PNG: {exc}") from exc


# ---- HTTP layer ------------------------------------------------------------------


def create_app(store_root: str | Path):
    """Build the FastAPI app over a session store directory."""
    from fastapi.middleware.cors import CORSMiddleware

    manager = SessionManager(store_root)
    app = FastAPI(title="scribbleseg session service")
    app.state.manager = manager
    # the browser client is served from a different origin (or file://)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Revision", "X-Status", "X-Untrained"],
    )

    def error_response(exc: Exception):
        if isinstance(exc, NotFoundError):
            return JSONResponse({"error": str(exc)}, status_code=404)
        if isinstance(exc, BusyError):
            return JSONResponse({"error": str(exc)}, status_code=409)
        if isinstance(exc, SupervisionError):
            return JSONResponse({"error": str(exc)}, status_code=422)
        if isinstance(exc, (InputError, ContractError, ConfigurationError)):
            return JSONResponse({"error": str(exc)}, status_code=400)
        raise exc

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": manager.list_sessions()}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.json()
        try:
            image_bytes = base64.b64decode(body["image_b64"])
        except (KeyError, ValueError) as exc:
            return JSONResponse({"error": f"bad image payload: {exc}"}, status_code=400)
        try:
            return manager.create_session(
                image_bytes=image_bytes,
                spacing_um=float(body.get("spacing_um", 1.0)),
                classes=body.get("classes", []),
                config=body.get("config"),
                seed=int(body.get("seed", 0)),
            )
        except ScribblesegError as exc:
            return error_response(exc)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return manager.get_session(session_id)
        except ScribblesegError as exc:
            return error_response(exc)

    @app.put("/sessions/{session_id}/scribbles")
    async def put_scribbles(session_id: str, request: Request):
        raw = await request.body()
        content_type = request.headers.get("content-type", "")
        try:
            if content_type.startswith("image/png"):
                mask = decode_scribble_png(raw)
            else:
                mask = rle_decode(json.loads(raw))
            return manager.put_scribbles(session_id, mask)
        except ScribblesegError as exc:
            return error_response(exc)
        except json.JSONDecodeError as exc:
            return JSONResponse({"error": f"bad scribble payload: {exc}"}, status_code=400)

    @app.get("/sessions/{session_id}/scribbles")
    def get_scribbles(session_id: str):
        try:
            mask = manager.get_scribbles(session_id)
        except ScribblesegError as exc:
            return error_response(exc)
        meta = manager.get_session(session_id)
        payload = dict(rle_encode(mask), revision=meta["revision"], status=meta["status"])
        return payload

    @app.post("/sessions/{session_id}/train", status_code=202)
    async def train_session(session_id: str, request: Request):
        raw = await request.body()
        body = json.loads(raw) if raw else {}
        try:
            return manager.train_session(session_id, epochs=body.get("epochs"))
        except ScribblesegError as exc:
            return error_response(exc)

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str, revision: int | None = None):
        try:
            data, rev, status, untrained = manager.get_mask_png(session_id, revision)
        except ScribblesegError as exc:
            return error_response(exc)
        headers = {
            "X-Revision": str(rev),
            "X-Status": status,
            "X-Untrained": "1" if untrained else "0",
        }
        return Response(content=data, media_type="image/png", headers=headers)

    @app.get("/sessions/{session_id}/probabilities")
    def get_probabilities(session_id: str, revision: int | None = None):
        try:
            data, rev, status = manager.get_probabilities_tiff(session_id, revision)
        except ScribblesegError as exc:
            return error_response(exc)
        headers = {"X-Revision": str(rev), "X-Status": status}
        return Response(content=data, media_type="image/tiff", headers=headers)

    @app.get("/sessions/{session_id}/pca/{layer}")
    def get_pca(session_id: str, layer: int):
        try:
            data, rev, status = manager.get_pca_png(session_id, layer)
        except ScribblesegError as exc:
            return error_response(exc)
        headers = {"X-Revision": str(rev), "X-Status": status}
        return Response(content=data, media_type="image/png", headers=headers)

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str):
        try:
            manager.get_session(session_id)
        except ScribblesegError as exc:
            return error_response(exc)

        def stream():
            cursor = 0
            while True:
                events, done = manager.events_since(session_id, cursor, timeout=30.0)
                for event in events:
                    yield f"data: {json.dumps(event)}\n\n"
                cursor += len(events)
                if done or not events:
                    break

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
