"""Verkle-trie state database: live and archive stores with occupancy-aware node layouts."""

__version__ = "0.1.0"
