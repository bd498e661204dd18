"""Persistent node storage: per-tag record files, flush buffer, checkpoints."""

from .buffer import FlushBuffer
from .files import PAGE_SIZE, PageCache, PositionalFile
from .roots import RootIndex
from .store import FORMAT_VERSION, NodeFileStore, StorageConfig, StorageManager

__all__ = [
    "FORMAT_VERSION",
    "FlushBuffer",
    "NodeFileStore",
    "PAGE_SIZE",
    "PageCache",
    "PositionalFile",
    "RootIndex",
    "StorageConfig",
    "StorageManager",
]
