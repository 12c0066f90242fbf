"""HTTP surfaces: the grading service and the backend wire server."""

from .app import DEFAULT_GUIDELINES, create_grading_app
from .backend_server import create_backend_app

__all__ = ["DEFAULT_GUIDELINES", "create_grading_app", "create_backend_app"]
