"""Analysis of planar slow-fast systems with two canard points."""
from __future__ import annotations

__version__ = "0.1.0"

from .sysmodel import SlowFastSystem  # noqa: E402,F401
