"""Exploration engine for gigapixel multi-channel tissue images.

Core pieces: a chunked multi-resolution dataset store, a CPU renderer with
focus+context lenses, single-cell region analytics over a ball-tree index,
integral-histogram similarity search, rich ROI snapshots, and an HTTP
service tying them together.
"""

__version__ = "0.1.0"
