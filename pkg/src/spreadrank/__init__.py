"""Rank influence-proxy measures by how well they predict the spread of node sets."""

__version__ = "0.1.0"
