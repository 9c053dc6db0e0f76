"""Tiled-multicore security architecture simulator."""

__version__ = "0.1.0"
