"""HTTP service wrapping the pipeline for remote or in-process use."""

from .app import app, create_app

__all__ = ["app", "create_app"]
