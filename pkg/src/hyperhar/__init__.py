"""Heterogeneous hypergraph learning for context-aware activity recognition."""

__version__ = "0.1.0"
