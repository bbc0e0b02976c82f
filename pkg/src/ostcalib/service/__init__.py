"""HTTP service wrapping the calibration core.

Run with ``uvicorn ostcalib.service:app`` or ``ostcalib serve``.
"""

from .app import app, create_app

__all__ = ["app", "create_app"]
