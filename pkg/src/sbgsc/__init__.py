"""Schrödinger-bridge generative semantic communication at desk scale."""

__version__ = "0.1.0"
