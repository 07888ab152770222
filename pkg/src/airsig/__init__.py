"""Tip-tail air-signature capture, reconstruction, and SliTCNN classification."""

__version__ = "0.1.0"
