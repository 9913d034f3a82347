"""Adapt a dense retriever to a new domain from a plain-text description."""

__version__ = "0.1.0"
