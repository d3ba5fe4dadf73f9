"""Aspect-aware evaluation of reasoning-intensive retrieval."""

__version__ = "0.1.0"
