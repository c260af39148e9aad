"""Editor/viewer service: sessions, on-demand rendering, handle editing."""

from .app import ServerConfig, create_app, serve
from .sessions import EditSession, SessionStore, UnknownSessionError

__all__ = [
    "ServerConfig",
    "create_app",
    "serve",
    "EditSession",
    "SessionStore",
    "UnknownSessionError",
]
