"""Discover, name and reuse new classes hidden in audio collections."""

__version__ = "0.1.0"
