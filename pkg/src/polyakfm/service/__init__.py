"""HTTP service wrapping the solver package: FastAPI app, pydantic
request/response schemas, and the shared handler functions."""

from .app import ROUTES, app, create_app

__all__ = ["ROUTES", "app", "create_app"]
