"""Telemetry analysis toolkit for a hybrid NiMH battery and PEM fuel-cell vehicle."""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
