"""HTTP session service for the interactive studio workflow.

JSON over HTTP under /api/v1: a session collects an uploaded segmentation,
sampled depth candidates, segment-shift edits (each edit forks a new
candidate; stored candidates are immutable), and generated images. Assets
are fetched by id as PNG bytes. Sampling endpoints are deterministic given
explicit seeds and always report the seed they used.
"""

from __future__ import annotations

import dataclasses
import io
import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from .conditions import (
    DepthMap,
    ImageTensor,
    SegmentationMap,
    ValidationError,
    load_segmentation_png,
    save_depth_png,
    save_image_png,
    save_segmentation_png,
)
from .depth_edit import DepthOrderError, segment_mean_depth, shift_segment_depth
from .pipeline import phase1_sample_depths, phase2_sample_images
from .training import InferenceBundle

API_PREFIX = "/api/v1"


@dataclasses.dataclass
class DepthCandidate:
    candidate_id: str
    depth: DepthMap
    seed: int
    edit_history: list[dict]


@dataclasses.dataclass
class Session:
    session_id: str
    created_at: float
    updated_at: float
    seg: SegmentationMap | None = None
    candidates: dict[str, DepthCandidate] = dataclasses.field(default_factory=dict)
    candidate_order: list[str] = dataclasses.field(default_factory=list)
    images: dict[str, ImageTensor] = dataclasses.field(default_factory=dict)
    image_order: list[str] = dataclasses.field(default_factory=list)
    counter: int = 0

    def next_id(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}-{self.counter:04d}"


class SessionStore:
    """In-memory session map with optional directory-backed persistence."""

    def __init__(self, persist_dir: str | Path | None = None):
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        self._counter = 0
        self.persist_dir = Path(persist_dir) if persist_dir else None
        if self.persist_dir:
            self.persist_dir.mkdir(parents=True, exist_ok=True)

    def create(self) -> Session:
        with self._store_lock:
            self._counter += 1
            sid = f"session-{self._counter:06d}"
            session = Session(session_id=sid, created_at=time.time(),
                              updated_at=time.time())
            self._sessions[sid] = session
            self._locks[sid] = threading.Lock()
        return session

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    def lock(self, session_id: str) -> threading.Lock:
        self.get(session_id)
        return self._locks[session_id]

    def persist(self, session: Session) -> None:
        if not self.persist_dir:
            return
        root = self.persist_dir / session.session_id
        (root / "assets").mkdir(parents=True, exist_ok=True)
        if session.seg is not None:
            save_segmentation_png(session.seg, root / "segmentation.png")
        for cid in session.candidate_order:
            path = root / "assets" / f"{cid}.png"
            if not path.exists():
                save_depth_png(session.candidates[cid].depth, path)
        for iid in session.image_order:
            path = root / "assets" / f"{iid}.png"
            if not path.exists():
                save_image_png(session.images[iid], path)
        meta = {
            "session_id": session.session_id,
            "created_at": session.created_at,
            "updated_at": session.updated_at,
            "candidates": [
                {
                    "candidate_id": cid,
                    "seed": session.candidates[cid].seed,
                    "edit_history": session.candidates[cid].edit_history,
                }
                for cid in session.candidate_order
            ],
            "images": list(session.image_order),
        }
        with open(root / "session.json", "w") as fh:
            fh.write(json.dumps(meta, sort_keys=True, indent=2) + "\n")


class DepthsRequest(BaseModel):
    n: int = 4
    seed: int | None = None


class ShiftRequest(BaseModel):
    label: str | int
    delta: float


class ImagesRequest(BaseModel):
    candidate_id: str
    n: int = 4
    seed: int | None = None


def _candidate_descriptor(session: Session, cand: DepthCandidate,
                          seg: SegmentationMap) -> dict:
    means = segment_mean_depth(cand.depth, seg)
    return {
        "candidate_id": cand.candidate_id,
        "seed": cand.seed,
        "edit_history": cand.edit_history,
        "segment_means": {seg.label_set[k]: round(v, 6) for k, v in means.items()},
        "asset_url": f"{API_PREFIX}/sessions/{session.session_id}/assets/{cand.candidate_id}",
    }


def create_app(s2d: InferenceBundle, sd2i: InferenceBundle,
               persist_dir: str | Path | None = None,
               workers: int = 2,
               static_dir: str | Path | None = None) -> FastAPI:
    if s2d.mode != "s2d" or sd2i.mode != "sd2i":
        raise ValueError("service needs one s2d and one sd2i checkpoint")
    app = FastAPI(title="depthscape studio service")
    store = SessionStore(persist_dir)
    inference_slots = threading.Semaphore(max(1, workers))
    app.state.store = store
    label_set = tuple(s2d.cfg.label_set)
    resolution = s2d.cfg.output_resolution

    def _require_seg(session: Session) -> SegmentationMap:
        if session.seg is None:
            raise HTTPException(422, "session has no segmentation uploaded yet")
        return session.seg

    @app.post(f"{API_PREFIX}/sessions")
    def create_session() -> dict:
        session = store.create()
        store.persist(session)
        return {"session_id": session.session_id, "label_set": list(label_set),
                "resolution": resolution}

    @app.get(f"{API_PREFIX}/sessions/{{sid}}")
    def get_session(sid: str) -> dict:
        session = store.get(sid)
        seg = session.seg
        return {
            "session_id": session.session_id,
            "has_segmentation": seg is not None,
            "candidates": [
                _candidate_descriptor(session, session.candidates[cid], seg)
                for cid in session.candidate_order
            ] if seg is not None else [],
            "images": [
                {"image_id": iid,
                 "asset_url": f"{API_PREFIX}/sessions/{sid}/assets/{iid}"}
                for iid in session.image_order
            ],
        }

    @app.put(f"{API_PREFIX}/sessions/{{sid}}/segmentation")
    async def upload_segmentation(sid: str, request: Request) -> dict:
        body = await request.body()
        with store.lock(sid):
            session = store.get(sid)
            if session.candidates:
                raise HTTPException(
                    409, "segmentation cannot be replaced once depth candidates exist")
            try:
                buffer = io.BytesIO(body)
                seg = load_segmentation_png(buffer, label_set)
            except (ValidationError, OSError) as err:
                raise HTTPException(422, f"invalid segmentation PNG: {err}") from err
            if seg.height != resolution or seg.width != resolution:
                raise HTTPException(
                    422, f"segmentation must be {resolution}x{resolution}, "
                         f"got {seg.height}x{seg.width}")
            session.seg = seg
            session.updated_at = time.time()
            store.persist(session)
        return {"ok": True, "resolution": resolution}

    @app.post(f"{API_PREFIX}/sessions/{{sid}}/depths")
    def request_depths(sid: str, req: DepthsRequest) -> dict:
        if req.n < 1 or req.n > 16:
            raise HTTPException(422, "n must be in [1, 16]")
        with store.lock(sid):
            session = store.get(sid)
            seg = _require_seg(session)
            seed = req.seed if req.seed is not None else session.counter + 1
            with inference_slots:
                depths = phase1_sample_depths(seg, req.n, seed, s2d)
            descriptors = []
            for depth in depths:
                cand = DepthCandidate(session.next_id("depth"), depth, seed, [])
                session.candidates[cand.candidate_id] = cand
                session.candidate_order.append(cand.candidate_id)
                descriptors.append(_candidate_descriptor(session, cand, seg))
            session.updated_at = time.time()
            store.persist(session)
        return {"candidates": descriptors, "seed": seed}

    @app.post(f"{API_PREFIX}/sessions/{{sid}}/depths/{{cid}}/shift")
    def shift_depth(sid: str, cid: str, req: ShiftRequest) -> dict:
        with store.lock(sid):
            session = store.get(sid)
            seg = _require_seg(session)
            source = session.candidates.get(cid)
            if source is None:
                raise HTTPException(404, f"unknown depth candidate {cid!r}")
            if isinstance(req.label, str):
                try:
                    label_id = seg.label_id(req.label)
                except KeyError as err:
                    raise HTTPException(422, str(err)) from err
            else:
                label_id = int(req.label)
            try:
                shifted = shift_segment_depth(source.depth, seg, label_id, req.delta)
            except DepthOrderError as err:
                raise HTTPException(422, detail={
                    "error": "order-violation",
                    "message": str(err),
                    "flipped_pair": list(err.flipped_names),
                }) from err
            except ValueError as err:
                raise HTTPException(422, str(err)) from err
            cand = DepthCandidate(
                session.next_id("depth"), shifted, source.seed,
                source.edit_history + [{"label": seg.label_set[label_id],
                                        "delta": req.delta}],
            )
            session.candidates[cand.candidate_id] = cand
            session.candidate_order.append(cand.candidate_id)
            session.updated_at = time.time()
            store.persist(session)
            return _candidate_descriptor(session, cand, seg)

    @app.post(f"{API_PREFIX}/sessions/{{sid}}/images")
    def request_images(sid: str, req: ImagesRequest) -> dict:
        if req.n < 1 or req.n > 16:
            raise HTTPException(422, "n must be in [1, 16]")
        with store.lock(sid):
            session = store.get(sid)
            seg = _require_seg(session)
            cand = session.candidates.get(req.candidate_id)
            if cand is None:
                raise HTTPException(404, f"unknown depth candidate {req.candidate_id!r}")
            seed = req.seed if req.seed is not None else session.counter + 1
            with inference_slots:
                images = phase2_sample_images(seg, cand.depth, req.n, seed, sd2i)
            descriptors = []
            for image in images:
                iid = session.next_id("image")
                session.images[iid] = image
                session.image_order.append(iid)
                descriptors.append({
                    "image_id": iid,
                    "seed": seed,
                    "candidate_id": cand.candidate_id,
                    "asset_url": f"{API_PREFIX}/sessions/{sid}/assets/{iid}",
                })
            session.updated_at = time.time()
            store.persist(session)
        return {"images": descriptors, "seed": seed}

    @app.get(f"{API_PREFIX}/sessions/{{sid}}/assets/{{aid}}")
    def fetch_asset(sid: str, aid: str) -> Response:
        session = store.get(sid)
        buffer = io.BytesIO()
        if aid in session.candidates:
            save_depth_png(session.candidates[aid].depth, buffer)
        elif aid in session.images:
            save_image_png(session.images[aid], buffer)
        elif aid == "segmentation" and session.seg is not None:
            save_segmentation_png(session.seg, buffer)
        else:
            raise HTTPException(404, f"unknown asset {aid!r}")
        return Response(content=buffer.getvalue(), media_type="image/png")

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")

    return app
