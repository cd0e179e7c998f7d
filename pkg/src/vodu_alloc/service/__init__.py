"""FastAPI service wrapping the experiment harness."""

from .app import app, create_app
from .schemas import RunRequest, RunResponse

__all__ = ["RunRequest", "RunResponse", "app", "create_app"]
