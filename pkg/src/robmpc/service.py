"""Interactive simulation service: sessions around the receding-horizon
loop with live preference/reference steering.

Steering is step-atomic: mutations are queued and applied by the session's
owner task between steps, so every emitted frame reports exactly the pair
that produced its control.  A session that is never steered replays the CLI
simulation bit for bit.  All frames are JSON text; floats use shortest
round-trip notation (exact value recovery).
"""
from __future__ import annotations

import asyncio
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .controller import (
    MethodVariant,
    MpcConfig,
    MpcSimulation,
    Preference,
    StepRecord,
)
from .library import Library, load_library
from .tracks import test_track
from .vehicle import Track

__all__ = ["create_app", "frame_from_record"]

log = logging.getLogger(__name__)

FRAME_BUFFER = 512
SUBSCRIBER_QUEUE = 256


def frame_from_record(rec: StepRecord, progress: float, metrics: dict) -> dict:
    s, x = rec.state, rec.reduced
    return {
        "type": "step",
        "step": rec.step,
        "t": rec.t,
        "pose": {"p1": s.p1, "p2": s.p2, "theta": s.theta,
                 "v_y": s.v_y, "r": s.r},
        "reduced": {"v_y": x.v_y, "r": x.r, "xi": x.xi, "d": x.d,
                    "kappa": x.kappa},
        "mirrored": rec.mirrored,
        "control": [float(v) for v in rec.control],
        "applied": [float(v) for v in rec.applied],
        "objectives": [float(v) for v in rec.objectives],
        "front": [[float(v) for v in row] for row in rec.worst_case_front],
        "rho": [float(v) for v in rec.rho],
        "z": [float(v) for v in rec.z],
        "violation": rec.violation,
        "warnings": list(rec.warnings),
        "progress": progress,
        "metrics": metrics,
    }


class _Subscriber:
    """Bounded frame queue; overflow drops the oldest frames and the gap is
    announced explicitly before the stream resumes."""

    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=SUBSCRIBER_QUEUE)
        self.dropped_from: int | None = None

    def push(self, frame: dict):
        while True:
            try:
                self.queue.put_nowait(frame)
                return
            except asyncio.QueueFull:
                try:
                    lost = self.queue.get_nowait()
                    if self.dropped_from is None and lost.get("type") == "step":
                        self.dropped_from = lost["step"]
                except asyncio.QueueEmpty:
                    pass

    async def next_frame(self) -> str:
        frame = await self.queue.get()
        if self.dropped_from is not None and frame.get("type") == "step":
            gap = {"type": "gap", "dropped_from": self.dropped_from,
                   "resumed_at": frame["step"]}
            self.dropped_from = None
            # deliver the gap marker first; the step frame goes back in front
            items = [frame]
            while not self.queue.empty():
                items.append(self.queue.get_nowait())
            for item in items:
                self.queue.put_nowait(item)
            return json.dumps(gap)
        return json.dumps(frame)


@dataclass
class Session:
    id: str
    method: MethodVariant
    track_id: str
    config: MpcConfig
    sim: MpcSimulation
    status: str = "idle"  # idle | running | paused
    pending: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    frames: list[dict] = field(default_factory=list)
    subscribers: list[_Subscriber] = field(default_factory=list)
    steps_remaining: int | None = None
    task: asyncio.Task | None = None

    def apply_pending(self):
        for change in self.pending:
            if change["kind"] == "preference":
                self.sim.preference = Preference(np.asarray(change["value"]))
            else:
                self.sim.z = np.asarray(change["value"], dtype=float)
            self.events.append({
                "step": self.sim.step_index,
                "type": change["kind"],
                "value": list(change["value"]),
            })
        self.pending.clear()

    def emit(self, rec: StepRecord):
        frame = frame_from_record(
            rec, self.sim.log.progress, self.metrics()
        )
        self.frames.append(frame)
        if len(self.frames) > FRAME_BUFFER:
            del self.frames[: len(self.frames) - FRAME_BUFFER]
        for sub in self.subscribers:
            sub.push(frame)

    def metrics(self) -> dict:
        m = self.sim.log
        return {
            "accumulated_abs_distance": m.accumulated_abs_distance,
            "accumulated_sq_distance": m.accumulated_sq_distance,
            "max_abs_distance": m.max_abs_distance,
            "progress": m.progress,
            "lap_time": m.lap_time,
            "violations": m.violations,
        }

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "method": self.method.value,
            "track": self.track_id,
            "status": self.status,
            "step": self.sim.step_index,
            "rho": [float(v) for v in self.sim.preference.rho],
            "z": [float(v) for v in self.sim.z],
            "metrics": self.metrics(),
            "seed": self.config.seed,
            "last_frame": self.frames[-1] if self.frames else None,
            "events": self.events,
        }


def create_app(
    library_path=None,
    nominal_library_path=None,
    tracks_dir="tracks",
    library: Library | None = None,
    nominal_library: Library | None = None,
) -> FastAPI:
    app = FastAPI(title="robmpc service")

    if library is None and library_path:
        library, warns = load_library(library_path)
        for w in warns:
            log.warning("%s: %s", library_path, w)
    if nominal_library is None and nominal_library_path:
        nominal_library, warns = load_library(nominal_library_path)
        for w in warns:
            log.warning("%s: %s", nominal_library_path, w)

    tracks: dict[str, Track] = {"default": test_track()}
    tdir = Path(tracks_dir)
    if tdir.is_dir():
        for path in sorted(tdir.glob("*.csv")):
            try:
                tracks[path.stem] = Track.from_csv(path)
            except Exception:  # noqa: BLE001 - skip unreadable track files
                log.warning("skipping unreadable track file %s", path)

    sessions: dict[str, Session] = {}
    counter = itertools.count(1)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="no such session")
        return session

    def build_sim(method: MethodVariant, track: Track, config: MpcConfig,
                  rho) -> MpcSimulation:
        try:
            return MpcSimulation(
                method, track, config,
                library=library, nominal_library=nominal_library,
                preference=Preference(np.asarray(rho, dtype=float)),
            )
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    async def run_loop(session: Session):
        while session.status == "running":
            if session.steps_remaining is not None and session.steps_remaining <= 0:
                session.status = "paused"
                break
            session.apply_pending()
            rec = await asyncio.get_running_loop().run_in_executor(
                None, session.sim.step
            )
            session.emit(rec)
            if session.steps_remaining is not None:
                session.steps_remaining -= 1
            await asyncio.sleep(0)

    @app.post("/sessions", status_code=201)
    async def start_session(body: dict):
        try:
            method = MethodVariant(body.get("method", "hybrid"))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        track_id = body.get("track", "default")
        track = tracks.get(track_id)
        if track is None:
            raise HTTPException(status_code=404, detail=f"no track {track_id!r}")
        cfg = body.get("config", {})
        rho = cfg.get("rho", [0.5, 0.5])
        try:
            Preference(np.asarray(rho, dtype=float))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        kwargs = {}
        for key in ("seed", "rpm_budget", "t_p", "h", "applied_steps", "v_x"):
            if key in cfg:
                kwargs[key] = cfg[key]
        if "z" in cfg:
            kwargs["z"] = tuple(float(v) for v in cfg["z"])
        config = MpcConfig(**kwargs)
        session_id = f"s{next(counter)}"
        sim = build_sim(method, track, config, rho)
        sessions[session_id] = Session(
            id=session_id, method=method, track_id=track_id,
            config=config, sim=sim,
        )
        return {"id": session_id, "status": "idle"}

    @app.post("/sessions/{session_id}/control")
    async def control(session_id: str, body: dict):
        session = get_session(session_id)
        action = body.get("action")
        if action == "run":
            steps = body.get("steps")
            session.steps_remaining = int(steps) if steps is not None else None
            if session.status != "running":
                session.status = "running"
                session.task = asyncio.create_task(run_loop(session))
            if body.get("wait") and session.task is not None:
                await session.task
        elif action == "pause":
            session.status = "paused"
            if session.task is not None:
                await session.task
        elif action == "reset":
            session.status = "idle"
            if session.task is not None:
                task, session.task = session.task, None
                await task
            session.sim = build_sim(
                session.method, tracks[session.track_id], session.config,
                session.sim.preference.rho,
            )
            session.frames.clear()
            session.events.clear()
            session.pending.clear()
        else:
            raise HTTPException(status_code=422,
                                detail="action must be run|pause|reset")
        return session.snapshot()

    @app.put("/sessions/{session_id}/preference")
    async def set_preference(session_id: str, body: dict):
        session = get_session(session_id)
        rho = body.get("rho")
        try:
            Preference(np.asarray(rho, dtype=float))
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session.pending.append({"kind": "preference", "value": rho})
        if session.status != "running":
            session.apply_pending()
        return session.snapshot()

    @app.put("/sessions/{session_id}/reference")
    async def set_reference(session_id: str, body: dict):
        session = get_session(session_id)
        z = body.get("z")
        try:
            valid = (isinstance(z, (list, tuple)) and len(z) == 2
                     and all(np.isfinite(float(v)) for v in z))
        except (TypeError, ValueError):
            valid = False
        if not valid:
            raise HTTPException(status_code=422,
                                detail="z must be two finite numbers")
        session.pending.append({"kind": "reference", "value": z})
        if session.status != "running":
            session.apply_pending()
        return session.snapshot()

    @app.get("/sessions/{session_id}")
    async def session_state(session_id: str):
        return get_session(session_id).snapshot()

    @app.get("/tracks")
    async def list_tracks():
        return [
            {"id": tid, "length": t.length, "closed": t.closed,
             "d_max": t.d_max, "n_points": len(t.points)}
            for tid, t in tracks.items()
        ]

    @app.get("/tracks/{track_id}")
    async def track_detail(track_id: str):
        track = tracks.get(track_id)
        if track is None:
            raise HTTPException(status_code=404, detail=f"no track {track_id!r}")
        return {
            "id": track_id,
            "closed": track.closed,
            "d_max": track.d_max,
            "length": track.length,
            "points": [[float(x), float(y)] for x, y in track.points],
        }

    @app.get("/library/meta")
    async def library_meta():
        out = {}
        for name, lib in (("robust", library), ("nominal", nominal_library)):
            if lib is None:
                out[name] = {"loaded": False}
            else:
                out[name] = {
                    "loaded": True,
                    "nodes": lib.n_solved,
                    "total_nodes": lib.spec.total_nodes,
                    "manifest": lib.manifest,
                }
        return out

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        sub = _Subscriber()
        # a reconnect resumes from the current step; announce what was missed
        if session.frames:
            sub.push({"type": "gap", "dropped_from": 0,
                      "resumed_at": session.sim.step_index}
                     if session.sim.step_index > len(session.frames)
                     else {"type": "resume",
                           "at_step": session.sim.step_index})
        session.subscribers.append(sub)
        try:
            while True:
                await websocket.send_text(await sub.next_frame())
        except WebSocketDisconnect:
            pass
        finally:
            if sub in session.subscribers:
                session.subscribers.remove(sub)

    return app
