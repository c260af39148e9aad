"""HTTP facade over the session store.

Plain request/response: JSON control messages, binary PNG frames. The JSON
schemas are documented in docs/api.md. Errors come back as 4xx with an
{"error": message} body rather than stack traces.
"""

import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from ..errors import DynsplatError
from ..scene import orbit_camera
from .sessions import SessionStore, UnknownSessionError

DEFAULT_PORT = 8787


@dataclass
class ServerConfig:
    """Service settings; resolved as flags > environment > defaults."""

    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    scene_root: str = None
    solver_radius: float = None
    threads: int = 1

    @classmethod
    def from_env(cls, **overrides) -> "ServerConfig":
        """Read DYNSPLAT_* variables, then apply explicit overrides."""
        values = {}
        env = os.environ
        if "DYNSPLAT_HOST" in env:
            values["host"] = env["DYNSPLAT_HOST"]
        if "DYNSPLAT_PORT" in env:
            values["port"] = int(env["DYNSPLAT_PORT"])
        if "DYNSPLAT_SCENE_ROOT" in env:
            values["scene_root"] = env["DYNSPLAT_SCENE_ROOT"]
        if "DYNSPLAT_SOLVER_RADIUS" in env:
            values["solver_radius"] = float(env["DYNSPLAT_SOLVER_RADIUS"])
        if "DYNSPLAT_THREADS" in env:
            values["threads"] = int(env["DYNSPLAT_THREADS"])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class LoadRequest(BaseModel):
    path: str


class HandlesRequest(BaseModel):
    session: str
    ids: List[int]
    targets: List[List[float]]


class SessionRequest(BaseModel):
    session: str


def _apply_thread_limit(threads: int) -> None:
    """Cap the compute thread pool; extra requests still inherit it."""
    try:
        import numba

        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


def create_app(config: ServerConfig = None) -> FastAPI:
    """Build the service around a fresh session store."""
    config = config or ServerConfig.from_env()
    _apply_thread_limit(config.threads)
    store = SessionStore(
        scene_root=config.scene_root, solver_radius=config.solver_radius
    )
    app = FastAPI(title="dynsplat editor service")
    app.state.store = store
    app.state.config = config

    @app.exception_handler(DynsplatError)
    async def _bad_input(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(UnknownSessionError)
    async def _no_session(request, exc):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _no_file(request, exc):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.post("/load")
    def load(req: LoadRequest):
        return store.load(req.path)

    @app.get("/render")
    def render_frame(
        session: str,
        t: float = 0.0,
        azimuth: float = 0.0,
        elevation: float = 0.35,
        radius: Optional[float] = None,
        target_x: Optional[float] = None,
        target_y: Optional[float] = None,
        target_z: Optional[float] = None,
        width: int = 256,
        height: int = 256,
        fov_x: Optional[float] = None,
    ):
        sess = store.get(session)
        lo, hi = sess.rig.bbox()
        center = 0.5 * (lo + hi)
        if radius is None:
            # frame the whole scene with some margin
            radius = max(2.5 * float(np.linalg.norm(hi - lo)) / 2.0, 1.0)
        target = np.array(
            [
                center[0] if target_x is None else target_x,
                center[1] if target_y is None else target_y,
                center[2] if target_z is None else target_z,
            ]
        )
        cam = orbit_camera(
            azimuth, elevation, radius, target, width=width, height=height, fov_x=fov_x
        )
        png, ms, mode = store.render_frame(sess, t, cam)
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Render-Ms": f"{ms:.2f}", "X-Render-Mode": mode},
        )

    @app.get("/nodes")
    def nodes(session: str, t: float = 0.0):
        return store.nodes(store.get(session), t)

    @app.post("/handles")
    def set_handles(req: HandlesRequest):
        return store.set_handles(store.get(req.session), req.ids, req.targets)

    @app.post("/handles/clear")
    def clear_handles(req: SessionRequest):
        store.clear_handles(store.get(req.session))
        return {"ok": True}

    @app.get("/status")
    def status(session: str):
        return store.status(store.get(session))

    return app


def serve(config: ServerConfig) -> None:
    """Run the service until interrupted (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
