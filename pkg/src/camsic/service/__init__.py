"""HTTP façade over the codec engine."""

from .app import create_app

__all__ = ["create_app"]
