"""Hyper-relational knowledge graph toolkit: ingestion, decomposition to
triples, curvature analysis and desk-scale embedding models."""

__version__ = "0.1.0"
