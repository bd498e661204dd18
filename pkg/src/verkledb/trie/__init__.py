"""Verkle trie: batch assembly, key embedding, the state database and its reference model."""

from .batch import KEY_BYTES, SubBatch, UpdateBatch, assemble_batch, partition
from .database import ARCHIVE, LIVE, BlockResult, DBConfig, GuardTracker, VerkleDB
from .embedding import Embedding
from .pool import WorkStealingPool
from .reference import ReferenceTrie

__all__ = [
    "ARCHIVE",
    "KEY_BYTES",
    "LIVE",
    "BlockResult",
    "DBConfig",
    "Embedding",
    "GuardTracker",
    "ReferenceTrie",
    "SubBatch",
    "UpdateBatch",
    "VerkleDB",
    "WorkStealingPool",
    "assemble_batch",
    "partition",
]
