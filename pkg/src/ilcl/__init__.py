"""Budgeted exploration of interactive environments into reusable context documents."""

__version__ = "0.1.0"
