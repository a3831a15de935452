"""HTTP session service: volumes, automatic segmentation, click editing,
supervoxels, and slice rendering for browser clients.

Volumes are stored as NIfTI files under the data directory; sessions persist
as append-only click logs and are rebuilt by replay after a restart. All
heavy lifting stays server-side: clients get PNG slices and run-length
encoded mask rows.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from . import nifti
from .editing import SegmentationSession
from .errors import EngineError, StateError, UnsupportedCapabilityError
from .grid import BinaryMask, LabelVolume, Volume
from .metrics import dice
from .predictors import resolve_predictor
from .prompts import DEFAULT_AMBIGUOUS_CLASSES, ClassPrompt, PromptContext
from .sliding import BlendKernel, binarize, sliding_window
from .supervoxel import SupervoxelMap, builtin_extractor, slic3d, triaxial_features

Coord = tuple[int, int, int]


@dataclass
class ServiceConfig:
    data_dir: Path = Path("./vf-data")
    port: int = 8080
    max_upload_mb: int = 512
    patch_size: Coord = (128, 128, 128)
    overlap: float = 0.25
    threshold: float = 0.5
    connectivity: int = 26
    default_predictor: str = "region_grow"
    tolerance: float = 50.0
    external_predictors: dict[str, list[str]] = field(default_factory=dict)
    ambiguous_classes: frozenset[int] = DEFAULT_AMBIGUOUS_CLASSES

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.patch_size = tuple(int(p) for p in self.patch_size)  # type: ignore[assignment]
        self.ambiguous_classes = frozenset(int(c) for c in self.ambiguous_classes)

    @staticmethod
    def load(config_path: str | None = None, **overrides) -> "ServiceConfig":
        """Config file values, then environment, then explicit overrides."""
        values: dict = {}
        if config_path:
            with open(config_path, "r", encoding="utf-8") as f:
                values.update(json.load(f))
        env = os.environ
        if "VF_PORT" in env:
            values["port"] = int(env["VF_PORT"])
        if "VF_DATA_DIR" in env:
            values["data_dir"] = env["VF_DATA_DIR"]
        if "VF_MAX_UPLOAD_MB" in env:
            values["max_upload_mb"] = int(env["VF_MAX_UPLOAD_MB"])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ServiceConfig(**values)


def _bad_request(msg: str, loc: list | None = None):
    detail = [{"loc": loc or ["body"], "msg": msg}]
    return HTTPException(status_code=422, detail=detail)


def _plane_axes(axis: int) -> tuple[int, int]:
    if axis not in (0, 1, 2):
        raise _bad_request("axis must be 0, 1, or 2", ["query", "axis"])
    u, v = [a for a in (0, 1, 2) if a != axis]
    return u, v


def extract_plane(data: np.ndarray, axis: int, index: int) -> np.ndarray:
    """2D plane (u, v) perpendicular to ``axis``; u and v keep ascending axis order."""
    if not 0 <= index < data.shape[axis]:
        raise _bad_request(
            f"index {index} outside 0..{data.shape[axis] - 1}", ["query", "index"]
        )
    return np.take(data, index, axis=axis)


def rle_encode_plane(plane: np.ndarray) -> list[list[list[int]]]:
    """Per-row [start, length] runs of the foreground; rows iterate the second
    plane axis, runs go along the first."""
    rows = []
    for v in range(plane.shape[1]):
        row = plane[:, v]
        runs = []
        flat = np.flatnonzero(np.diff(np.concatenate(([0], row.view(np.int8), [0]))))
        for start, stop in zip(flat[::2], flat[1::2]):
            runs.append([int(start), int(stop - start)])
        rows.append(runs)
    return rows


class ClickBody(BaseModel):
    xyz: list[int]
    polarity: str


class SessionBody(BaseModel):
    volume_id: str
    class_index: int | str = "zero_shot"
    predictor: str | None = None
    gt_volume_id: str | None = None
    tolerance: float | None = None


@dataclass
class _SessionState:
    session_id: str
    volume_id: str
    engine: SegmentationSession
    context: PromptContext
    predictor_name: str
    gt: LabelVolume | None = None
    version: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def snapshot(self) -> dict:
        gt_dice = None
        if self.gt is not None:
            if self.context.class_index is not None:
                target = BinaryMask(self.gt.data == self.context.class_index)
            else:
                target = BinaryMask(self.gt.data > 0)
            gt_dice = dice(self.engine.current, target)
        return {
            "session_id": self.session_id,
            "volume_id": self.volume_id,
            "class_index": self.context.class_index,
            "context": self.context.kind,
            "predictor": self.predictor_name,
            "version": self.version,
            "clicks": len(self.engine.clicks),
            "dims": list(self.engine.volume.dims),
            "dice": gt_dice,
        }


class ServiceState:
    """Volume files on disk plus in-memory sessions backed by replayable logs."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.volumes_dir = config.data_dir / "volumes"
        self.sessions_dir = config.data_dir / "sessions"
        self.cache_dir = config.data_dir / "cache"
        for d in (self.volumes_dir, self.sessions_dir, self.cache_dir):
            d.mkdir(parents=True, exist_ok=True)
        self._volumes: dict[str, Volume | LabelVolume] = {}
        self._sessions: dict[str, _SessionState] = {}
        self._registry_lock = threading.Lock()

    # -- volumes ------------------------------------------------------------

    def store_volume(self, raw: bytes) -> tuple[str, Volume | LabelVolume]:
        container = nifti.from_bytes(raw, name="<upload>")
        normalized = nifti.to_bytes(container)
        volume_id = hashlib.sha256(normalized).hexdigest()[:12]
        path = self.volumes_dir / f"{volume_id}.nii"
        if not path.exists():
            path.write_bytes(normalized)
        with self._registry_lock:
            self._volumes[volume_id] = container
        return volume_id, container

    def get_volume(self, volume_id: str) -> Volume | LabelVolume:
        with self._registry_lock:
            vol = self._volumes.get(volume_id)
        if vol is not None:
            return vol
        path = self.volumes_dir / f"{volume_id}.nii"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown volume {volume_id}")
        vol = nifti.read_nifti(path)
        with self._registry_lock:
            self._volumes[volume_id] = vol
        return vol

    def get_scalar_volume(self, volume_id: str) -> Volume:
        vol = self.get_volume(volume_id)
        if isinstance(vol, LabelVolume):
            return Volume(vol.data.astype(np.float32), vol.spacing, vol.origin)
        return vol

    # -- sessions -----------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def _append_event(self, session_id: str, event: dict):
        with open(self._log_path(session_id), "a", encoding="utf-8") as f:
            f.write(json.dumps(event) + "\n")

    def _build_session(self, session_id: str, body: SessionBody) -> _SessionState:
        volume = self.get_scalar_volume(body.volume_id)
        if body.class_index == "zero_shot":
            context = PromptContext.zero_shot()
        elif isinstance(body.class_index, int):
            if not 1 <= body.class_index <= 127:
                raise _bad_request("class_index must be 1..127 or 'zero_shot'",
                                   ["body", "class_index"])
            context = PromptContext.for_class(body.class_index, self.config.ambiguous_classes)
        else:
            raise _bad_request("class_index must be an integer or 'zero_shot'",
                               ["body", "class_index"])
        gt = None
        if body.gt_volume_id is not None:
            candidate = self.get_volume(body.gt_volume_id)
            if not isinstance(candidate, LabelVolume):
                raise _bad_request("gt_volume_id must point to an integer-typed volume",
                                   ["body", "gt_volume_id"])
            if candidate.dims != volume.dims:
                raise _bad_request("ground-truth dims do not match the volume",
                                   ["body", "gt_volume_id"])
            gt = candidate
        name = body.predictor or self.config.default_predictor
        try:
            predictor = resolve_predictor(
                name,
                gt=gt,
                tolerance=body.tolerance if body.tolerance is not None else self.config.tolerance,
                external_commands=self.config.external_predictors,
            )
        except ValueError as e:
            raise _bad_request(str(e), ["body", "predictor"]) from e
        engine = SegmentationSession(
            volume=volume,
            predictor=predictor,
            context=context,
            patch_size=self.config.patch_size,
            connectivity=self.config.connectivity,
            threshold=self.config.threshold,
        )
        return _SessionState(
            session_id=session_id,
            volume_id=body.volume_id,
            engine=engine,
            context=context,
            predictor_name=name,
            gt=gt,
        )

    def create_session(self, body: SessionBody) -> _SessionState:
        session_id = uuid.uuid4().hex[:16]
        state = self._build_session(session_id, body)
        self._append_event(session_id, {"event": "create", **body.model_dump()})
        with self._registry_lock:
            self._sessions[session_id] = state
        return state

    def get_session(self, session_id: str) -> _SessionState:
        with self._registry_lock:
            state = self._sessions.get(session_id)
        if state is not None:
            return state
        log = self._log_path(session_id)
        if not log.exists():
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        state = self._replay(session_id, log)
        with self._registry_lock:
            self._sessions[session_id] = state
        return state

    def _replay(self, session_id: str, log: Path) -> _SessionState:
        state = None
        with open(log, "r", encoding="utf-8") as f:
            for line in f:
                event = json.loads(line)
                kind = event.pop("event")
                if kind == "create":
                    state = self._build_session(session_id, SessionBody(**event))
                elif kind == "auto":
                    self._run_auto(state)
                elif kind == "click":
                    click = state.engine.make_click(tuple(event["xyz"]),
                                                    event["polarity"] == "pos")
                    state.engine.apply_click(click)
                    state.version += 1
                elif kind == "undo":
                    state.engine.undo()
                    state.version += 1
        if state is None:
            raise HTTPException(status_code=404, detail=f"empty session log {session_id}")
        return state

    def _run_auto(self, state: _SessionState):
        prompt = ClassPrompt(state.context.class_index) if state.context.class_index else None
        if prompt is None:
            raise _bad_request("automatic segmentation needs a class-index session",
                               ["body", "class_index"])
        try:
            prob = sliding_window(
                state.engine.volume,
                state.engine.predictor,
                prompt,
                patch_size=self.config.patch_size,
                overlap=self.config.overlap,
                blend=BlendKernel("gaussian"),
            )
        except UnsupportedCapabilityError as e:
            raise _bad_request(str(e), ["body", "predictor"]) from e
        state.engine.reset_with_automatic(binarize(prob, self.config.threshold))
        state.version += 1

    # -- supervoxel cache ----------------------------------------------------

    def supervoxels(self, volume_id: str, n: int, sigma: float, compactness: float,
                    extractor: str) -> bytes:
        key = f"{volume_id}_n{n}_s{sigma:g}_c{compactness:g}_{extractor}"
        path = self.cache_dir / f"{key}.nii"
        if path.exists():
            return path.read_bytes()
        volume = self.get_scalar_volume(volume_id)
        feats = triaxial_features(volume, builtin_extractor(extractor))
        sv: SupervoxelMap = slic3d(feats, n_segments=n, sigma=sigma, compactness=compactness)
        raw = nifti.to_bytes(
            LabelVolume(sv.labels.astype(np.int32), volume.spacing, volume.origin)
        )
        path.write_bytes(raw)
        return raw


def changed_bbox(before: np.ndarray, after: np.ndarray) -> list[int] | None:
    """Inclusive [x0, y0, z0, x1, y1, z1] bounds of all differing voxels."""
    diff = before != after
    if not diff.any():
        return None
    coords = np.argwhere(diff)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    return [int(v) for v in (*lo, *hi)]


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig.load()
    state = ServiceState(config)
    app = FastAPI(title="voxelforge service", version="0.1.0")
    app.state.engine = state

    max_upload = config.max_upload_mb * 1024 * 1024

    @app.exception_handler(EngineError)
    async def engine_error_handler(request, exc):
        from fastapi.responses import JSONResponse

        status = 409 if isinstance(exc, StateError) else 422
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/volumes")
    async def upload_volume(request: Request):
        declared = request.headers.get("content-length")
        if declared and int(declared) > max_upload:
            raise HTTPException(status_code=413, detail="upload exceeds configured cap")
        raw = await request.body()
        if len(raw) > max_upload:
            raise HTTPException(status_code=413, detail="upload exceeds configured cap")
        volume_id, container = state.store_volume(raw)
        return {
            "volume_id": volume_id,
            "dims": list(container.dims),
            "spacing": list(container.spacing),
            "kind": "labels" if isinstance(container, LabelVolume) else "image",
        }

    @app.get("/volumes/{volume_id}")
    def volume_info(volume_id: str):
        vol = state.get_volume(volume_id)
        return {
            "volume_id": volume_id,
            "dims": list(vol.dims),
            "spacing": list(vol.spacing),
            "kind": "labels" if isinstance(vol, LabelVolume) else "image",
        }

    @app.get("/volumes/{volume_id}/slice")
    def volume_slice(volume_id: str, axis: int, index: int, window: str | None = None):
        vol = state.get_scalar_volume(volume_id)
        _plane_axes(axis)
        plane = extract_plane(vol.data, axis, index)
        if window:
            try:
                lo, hi = (float(v) for v in window.split(","))
            except ValueError:
                raise _bad_request("window must be 'lo,hi'", ["query", "window"])
            if not lo < hi:
                raise _bad_request("window requires lo < hi", ["query", "window"])
        else:
            lo, hi = float(vol.data.min()), float(vol.data.max())
            if lo == hi:
                hi = lo + 1.0
        scaled = np.clip((plane.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
        img8 = (scaled * 255.0 + 0.5).astype(np.uint8)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(img8.T, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/volumes/{volume_id}/supervoxels")
    def volume_supervoxels(
        volume_id: str,
        n: int = 100,
        sigma: float = 3.0,
        compactness: float = 0.1,
        extractor: str = "gauss_pyramid",
    ):
        if n < 1:
            raise _bad_request("n must be >= 1", ["query", "n"])
        if extractor not in ("intensity", "gauss_pyramid"):
            raise _bad_request("unknown extractor", ["query", "extractor"])
        try:
            raw = state.supervoxels(volume_id, n, sigma, compactness, extractor)
        except ValueError as e:
            raise _bad_request(str(e), ["query"]) from e
        return Response(content=raw, media_type="application/octet-stream")

    @app.post("/sessions")
    def create_session(body: SessionBody):
        session = state.create_session(body)
        return {"session_id": session.session_id, "version": session.version}

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        return state.get_session(session_id).snapshot()

    @app.post("/sessions/{session_id}/auto")
    def run_auto(session_id: str):
        session = state.get_session(session_id)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="session is busy")
        try:
            state._run_auto(session)
            state._append_event(session_id, {"event": "auto"})
            return {"version": session.version}
        finally:
            session.lock.release()

    @app.post("/sessions/{session_id}/clicks")
    def post_click(session_id: str, body: ClickBody):
        session = state.get_session(session_id)
        if len(body.xyz) != 3:
            raise _bad_request("xyz must have three components", ["body", "xyz"])
        if body.polarity not in ("pos", "neg"):
            raise _bad_request("polarity must be 'pos' or 'neg'", ["body", "polarity"])
        dims = session.engine.volume.dims
        for i, (c, d) in enumerate(zip(body.xyz, dims)):
            if not 0 <= c < d:
                raise _bad_request(f"coordinate {c} outside 0..{d - 1}", ["body", "xyz", i])
        if not session.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="session is busy")
        try:
            before = session.engine.current.data
            click = session.engine.make_click(tuple(body.xyz), body.polarity == "pos")
            session.engine.apply_click(click)
            session.version += 1
            state._append_event(
                session_id, {"event": "click", "xyz": body.xyz, "polarity": body.polarity}
            )
            return {
                "version": session.version,
                "changed_bbox": changed_bbox(before, session.engine.current.data),
            }
        finally:
            session.lock.release()

    @app.post("/sessions/{session_id}/undo")
    def post_undo(session_id: str):
        session = state.get_session(session_id)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="session is busy")
        try:
            session.engine.undo()
            session.version += 1
            state._append_event(session_id, {"event": "undo"})
            return {"version": session.version}
        finally:
            session.lock.release()

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str, format: str = "nifti"):
        session = state.get_session(session_id)
        mask = session.engine.current
        if format == "nifti":
            vol = session.engine.volume
            raw = nifti.to_bytes(
                LabelVolume(mask.data.astype(np.uint8), vol.spacing, vol.origin)
            )
            return Response(
                content=raw,
                media_type="application/octet-stream",
                headers={"X-Mask-Version": str(session.version)},
            )
        if format == "rle":
            flat = mask.data.ravel(order="F").view(np.int8)
            edges = np.flatnonzero(np.diff(np.concatenate(([0], flat, [0]))))
            runs = [
                [int(a), int(b - a)] for a, b in zip(edges[::2], edges[1::2])
            ]
            return {
                "version": session.version,
                "dims": list(mask.dims),
                "order": "x-fastest",
                "rle": runs,
            }
        raise _bad_request("format must be 'nifti' or 'rle'", ["query", "format"])

    @app.get("/sessions/{session_id}/mask/slice")
    def get_mask_slice(session_id: str, axis: int, index: int):
        session = state.get_session(session_id)
        _plane_axes(axis)
        plane = extract_plane(session.engine.current.data, axis, index)
        return {
            "version": session.version,
            "dims": list(plane.shape),
            "rle": rle_encode_plane(plane),
        }

    ui_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dist.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dist), html=True), name="ui")

    return app


def run_service(config: ServiceConfig):
    import uvicorn

    uvicorn.run(create_app(config), host="0.0.0.0", port=config.port, log_level="info")
