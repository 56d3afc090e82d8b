"""Statement-level sandbox runner for buggy snippet localization."""

__version__ = "0.1.0"

from .localize import execute
from .service import handle_line, handle_request, serve

__all__ = ["execute", "handle_line", "handle_request", "serve"]
