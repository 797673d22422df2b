"""Exact matricial-algebra toolkit for building continuous factors as limits of
matrix-algebra chains over Q, Q(i) and GF(p)."""

__version__ = "0.1.0"
