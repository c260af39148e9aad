"""Editing sessions: per-scene state, solve serialization, drag coalescing.

Each loaded archive gets an isolated session holding its rig, its ARAP
solver (with the warm-start iterate) and the current handle set. All
operations on a session run under its work lock, so there is at most one
in-flight solve or render per session; drags that queue up behind a solve
are coalesced to the most recent one.
"""

import threading
import time
import uuid
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..arap import ArapSolver, HandleSet, editing_transforms
from ..errors import InvalidInputError
from ..io import load_scene
from ..scene import SKIN_K, WHITE, SceneRig, encode_png, render_pixels


class UnknownSessionError(KeyError):
    """Session id does not name a live session."""

    def __str__(self):
        return self.args[0] if self.args else "unknown session"


@dataclass
class EditSession:
    """One client's view of one loaded archive."""

    sid: str
    path: str
    rig: SceneRig
    solver: ArapSolver = None
    handles: HandleSet = None
    last_solve: dict = None
    edit: tuple = None  # (node_r, node_t) of the last solve
    renders: int = 0
    solves: int = 0
    lock: threading.RLock = field(default_factory=threading.RLock)
    _queue_lock: threading.Lock = field(default_factory=threading.Lock)
    _drag_seq: int = 0
    _pending: tuple = None


class SessionStore:
    """Registry of live sessions plus the scene-loading policy.

    scene_root, when set, confines archive paths to that directory.
    solver_radius overrides the trajectory-space graph radius (None keeps
    the data-driven default).
    """

    def __init__(
        self,
        scene_root=None,
        solver_radius: float = None,
        k: int = SKIN_K,
        solve_iters: int = 10,
    ):
        self.scene_root = Path(scene_root) if scene_root is not None else None
        self.solver_radius = solver_radius
        self.k = k
        # drags refine across requests (each warm-starts from the last), so
        # a capped per-request iteration count keeps latency bounded without
        # changing the fixed point
        self.solve_iters = solve_iters
        self._sessions = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._sessions)

    def get(self, sid: str) -> EditSession:
        with self._lock:
            try:
                return self._sessions[sid]
            except KeyError:
                raise UnknownSessionError(f"unknown session {sid!r}") from None

    def _resolve(self, path) -> Path:
        p = Path(path)
        if self.scene_root is not None:
            p = (self.scene_root / p).resolve()
            if not p.is_relative_to(self.scene_root.resolve()):
                raise InvalidInputError(
                    f"scene path {str(path)!r} escapes the configured scene root"
                )
        return p

    # -- operations ----------------------------------------------------------

    def load(self, path) -> dict:
        """Open an archive and create a fresh session around it.

        Returns the scene summary. The archive is read once and never
        written; edits live only in session state.
        """
        p = self._resolve(path)
        if not p.is_file():
            raise FileNotFoundError(f"no archive at {p}")
        archive = load_scene(str(p))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rig = SceneRig(archive, k=self.k, graph_radius=self.solver_radius)
        solver = ArapSolver(rig.graph) if rig.graph is not None else None
        session = EditSession(sid=uuid.uuid4().hex, path=str(p), rig=rig, solver=solver)
        with self._lock:
            self._sessions[session.sid] = session
        lo, hi = rig.bbox()
        summary = {
            "session": session.sid,
            "counts": {
                "gaussians": len(archive.gaussians),
                "control_points": len(archive.control),
                "edges": rig.graph.n_edges if rig.graph is not None else 0,
            },
            "bbox": {"min": lo.tolist(), "max": hi.tolist()},
            "time_range": [0.0, 1.0],
            "meta": archive.meta,
        }
        if caught:
            summary["warning"] = "; ".join(str(w.message) for w in caught)
        return summary

    def render_frame(self, session: EditSession, t: float, cam, background=WHITE):
        """PNG bytes of the scene at time t (or of the active edit).

        Returns (png, elapsed_ms, mode) where mode says which motion source
        produced the frame: "field" or "edit".
        """
        with session.lock:
            if not 0.0 <= t <= 1.0:
                raise InvalidInputError(f"time {t} outside [0, 1]")
            start = time.perf_counter()
            if session.edit is not None:
                node_r, node_t = session.edit
                posed = session.rig.pose_edit(node_r, node_t)
                mode = "edit"
            else:
                posed = session.rig.pose(t)
                mode = "field"
            png = encode_png(render_pixels(posed, cam, background))
            session.renders += 1
            return png, (time.perf_counter() - start) * 1000.0, mode

    def nodes(self, session: EditSession, t: float) -> dict:
        """Control-point positions at time t plus the graph edges."""
        with session.lock:
            if not 0.0 <= t <= 1.0:
                raise InvalidInputError(f"time {t} outside [0, 1]")
            rig = session.rig
            positions = rig.node_positions(t)
            out = {
                "t": float(t),
                "canonical": rig.archive.control.p.tolist(),
                "positions": positions.tolist(),
                "edges": [],
                "isolated": [],
            }
            graph = rig.graph
            if graph is not None:
                src = np.repeat(np.arange(len(graph)), np.diff(graph.indptr))
                out["edges"] = [
                    [int(i), int(j), float(w)]
                    for i, j, w in zip(src, graph.indices, graph.weights)
                ]
                out["isolated"] = np.flatnonzero(graph.isolated).tolist()
            return out

    def set_handles(self, session: EditSession, ids, targets) -> dict:
        """Queue a handle update and solve the most recent one.

        Drags that arrive while a solve is running overwrite each other in
        the pending slot; whichever request drains the queue solves only the
        newest targets. A response whose "coalesced" flag is true carries
        the result of that newer drag, not of its own (dropped) payload.
        """
        if np.asarray(ids).size == 0:
            # an empty handle set means "no constraints": same as clearing
            self.clear_handles(session)
            return {
                "positions": session.rig.archive.control.p.tolist(),
                "energy": 0.0,
                "iters": 0,
                "seq": session._drag_seq,
                "coalesced": False,
                "cleared": True,
            }
        if session.solver is None:
            raise InvalidInputError("editing needs at least 2 control points")
        handles = HandleSet(
            ids=np.asarray(ids, dtype=int), targets=np.asarray(targets, dtype=float)
        )
        handles.validate(session.rig.graph)
        with session._queue_lock:
            session._drag_seq += 1
            my_seq = session._drag_seq
            session._pending = (my_seq, handles)
        with session.lock:
            with session._queue_lock:
                pending, session._pending = session._pending, None
            repeat = (
                pending is not None
                and session.handles is not None
                and session.last_solve is not None
                and np.array_equal(session.handles.ids, pending[1].ids)
                and np.array_equal(session.handles.targets, pending[1].targets)
            )
            if repeat:
                # identical payload: the cached solve is its own fixed point
                session.last_solve = dict(session.last_solve, seq=pending[0])
            elif pending is not None:
                seq, hs = pending
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    deformed, rotations, energies = session.solver.solve(
                        hs, max_iters=self.solve_iters, warm_start=True
                    )
                node_r, node_t = editing_transforms(
                    session.rig.graph.positions, deformed, rotations
                )
                session.handles = hs
                session.edit = (node_r, node_t)
                session.last_solve = {
                    "positions": deformed.tolist(),
                    "energy": float(energies[-1]),
                    "iters": len(energies),
                    "seq": seq,
                }
                if caught:
                    session.last_solve["warning"] = "; ".join(
                        str(w.message) for w in caught
                    )
                session.solves += 1
            if session.last_solve is None:
                # the queued drag was cleared before this request drained it
                return {
                    "positions": session.rig.graph.positions.tolist(),
                    "energy": 0.0,
                    "iters": 0,
                    "seq": my_seq,
                    "coalesced": True,
                    "warning": "handles were cleared while this drag was queued",
                }
            out = dict(session.last_solve)
            out["coalesced"] = out["seq"] != my_seq
            return out

    def clear_handles(self, session: EditSession) -> None:
        """Back to field-driven motion; pending drags are dropped."""
        with session.lock:
            with session._queue_lock:
                session._pending = None
            session.handles = None
            session.last_solve = None
            session.edit = None
            if session.solver is not None:
                session.solver.reset()

    def status(self, session: EditSession) -> dict:
        with session.lock:
            rig = session.rig
            handles = None
            if session.handles is not None and session.last_solve is not None:
                handles = {
                    "ids": session.handles.ids.tolist(),
                    "energy": session.last_solve["energy"],
                    "iters": session.last_solve["iters"],
                }
            return {
                "session": session.sid,
                "path": session.path,
                "counts": {
                    "gaussians": len(rig.archive.gaussians),
                    "control_points": len(rig.archive.control),
                    "edges": rig.graph.n_edges if rig.graph is not None else 0,
                },
                "handles": handles,
                "renders": session.renders,
                "solves": session.solves,
            }
