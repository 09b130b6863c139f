"""Color-channel selection for scene-text word recognition."""

__version__ = "0.1.0"
