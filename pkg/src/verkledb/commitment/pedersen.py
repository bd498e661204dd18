"""Pedersen vector commitments and the Verkle node commitment rules.

Generator ``G_i`` of the usual 1-based notation is ``basis.generators[i - 1]``
here.  All slot indices in this module are 0-based.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import InvalidArgument
from .groups import ORDER, Element, GroupBackend, get_backend
from .msm import (
    NARROW_WINDOW,
    WIDE_WINDOW,
    WIDE_WINDOW_MAX_GENERATORS,
    MsmConfig,
    msm,
    naive_msm,
)

WIDTH = 256
PRESENCE_BIT = 1 << 128
LEAF_VERSION_MARKER = 1


@dataclass(frozen=True)
class GeneratorBasis:
    backend: GroupBackend
    seed: bytes
    generators: tuple

    def __len__(self) -> int:
        return len(self.generators)


def derive_generators(seed: bytes, count: int, backend: GroupBackend) -> GeneratorBasis:
    """Deterministic basis: generator ``i`` is hash-to-group of (seed, i).

    Generator ``i`` depends only on ``(seed, i)``, so shorter bases are
    prefixes of longer ones.
    """
    if count < 1:
        raise InvalidArgument("generator count must be >= 1")
    gens = []
    for i in range(count):
        g = backend.hash_to_element(b"verkledb/generator/" + seed + b"/" + i.to_bytes(4, "little"))
        gens.append(g)
    return GeneratorBasis(backend, bytes(seed), tuple(gens))


@dataclass(frozen=True)
class ValueHalves:
    low_mod: int
    high: int


def encode_value(present: bool, value: Optional[bytes]) -> ValueHalves:
    """Split a 32-byte value into committed halves; bit 128 of the low half marks presence."""
    if not present:
        return ValueHalves(0, 0)
    if value is None or len(value) != 32:
        raise InvalidArgument("present values must be exactly 32 bytes")
    low = int.from_bytes(value[:16], "little") | PRESENCE_BIT
    high = int.from_bytes(value[16:], "little")
    return ValueHalves(low, high)


def stem_scalar(stem: bytes) -> int:
    if len(stem) != 31:
        raise InvalidArgument("stem must be 31 bytes")
    value = int.from_bytes(stem, "little")
    assert value < ORDER
    return value


class Pedersen:
    """Commitment engine bound to one generator basis.

    Owns the precomputed MSM tables (window 16 for the first five generators,
    window 10 for everything else) and counts scalar multiplications so tests
    can check the incremental-update cost model.
    """

    def __init__(self, basis: GeneratorBasis):
        if len(basis) != WIDTH:
            raise InvalidArgument(f"basis must hold {WIDTH} generators")
        self.basis = basis
        self.backend = basis.backend
        self.narrow = MsmConfig(NARROW_WINDOW, self.backend, basis.generators)
        self.wide = MsmConfig(WIDE_WINDOW, self.backend, basis.generators[:WIDE_WINDOW_MAX_GENERATORS])
        self._count_lock = threading.Lock()
        self.scalar_mults = 0
        self.msm_calls = 0
        self.wide_calls = 0

    # -- primitives -------------------------------------------------------

    def reset_counters(self) -> None:
        with self._count_lock:
            self.scalar_mults = self.msm_calls = self.wide_calls = 0

    def config_for(self, indices: Sequence[int]) -> MsmConfig:
        if indices and max(indices) < WIDE_WINDOW_MAX_GENERATORS:
            return self.wide
        return self.narrow

    def msm(self, scalars: Sequence[int], indices: Sequence[int]) -> Element:
        if len(scalars) != len(indices):
            raise InvalidArgument(f"{len(scalars)} scalars but {len(indices)} indices")
        for i in indices:
            if not 0 <= i < WIDTH:
                raise InvalidArgument(f"generator index {i} out of range")
        config = self.config_for(indices)
        with self._count_lock:
            self.scalar_mults += len(scalars)
            self.msm_calls += 1
            if config is self.wide:
                self.wide_calls += 1
        return msm(scalars, indices, config)

    def commit(self, values: Sequence[int]) -> Element:
        """``sum(values[i] * G_(i+1))``; zero entries are skipped."""
        if len(values) > WIDTH:
            raise InvalidArgument(f"vector of length {len(values)} exceeds basis")
        idx = [i for i, v in enumerate(values) if v % ORDER]
        return self.msm([values[i] for i in idx], idx)

    def commit_sparse(self, entries: dict[int, int]) -> Element:
        idx = sorted(i for i, v in entries.items() if v % ORDER)
        return self.msm([entries[i] for i in idx], idx)

    def naive_commit(self, values: Sequence[int]) -> Element:
        if len(values) > WIDTH:
            raise InvalidArgument(f"vector of length {len(values)} exceeds basis")
        return naive_msm(values, self.basis.generators[: len(values)], self.backend)

    def update_commitment(self, c: Element, index: int, old: int, new: int) -> Element:
        """``c + (new - old) * G_(index+1)``."""
        if not 0 <= index < WIDTH:
            raise InvalidArgument(f"slot index {index} out of range")
        delta = (new - old) % ORDER
        if not delta:
            return c
        return self.backend.add(c, self.msm([delta], [index]))

    def apply_deltas(self, c: Element, deltas: dict[int, int]) -> Element:
        """Apply several slot changes ``{index: new - old}`` with one MSM."""
        idx = sorted(deltas)
        if not idx:
            return c
        return self.backend.add(c, self.msm([deltas[i] for i in idx], idx))

    def serialize(self, c: Element) -> bytes:
        return self.backend.serialize(c)

    def deserialize(self, data: bytes) -> Element:
        return self.backend.deserialize(data)

    def to_scalar(self, c: Element) -> int:
        """Child-commitment-to-field map: compressed encoding, little-endian, mod the group order."""
        return int.from_bytes(self.backend.serialize(c), "little") % ORDER

    def identity(self) -> Element:
        return self.backend.identity()

    def eq(self, a: Element, b: Element) -> bool:
        return self.backend.eq(a, b)

    # -- Verkle node rules ----------------------------------------------------

    def leaf_suffix_commitments(self, values: dict[int, bytes]) -> tuple[Element, Element]:
        """(C1, C2) over interleaved (low_mod, high) pairs of slots 0..127 and 128..255."""
        lo: dict[int, int] = {}
        hi: dict[int, int] = {}
        for suffix, value in values.items():
            halves = encode_value(True, value)
            target = lo if suffix < 128 else hi
            base = 2 * (suffix % 128)
            target[base] = halves.low_mod
            target[base + 1] = halves.high
        return self.commit_sparse(lo), self.commit_sparse(hi)

    def leaf_commitment(self, stem: bytes, c1: Element, c2: Element) -> Element:
        scalars = [LEAF_VERSION_MARKER, stem_scalar(stem), self.to_scalar(c1), self.to_scalar(c2)]
        return self.msm(scalars, [0, 1, 2, 3])

    def inner_commitment(self, child_scalars: Sequence[int]) -> Element:
        if len(child_scalars) != WIDTH:
            raise InvalidArgument(f"inner commitment needs {WIDTH} child scalars")
        return self.commit(child_scalars)


_ENGINES: dict[tuple[str, bytes], Pedersen] = {}
_ENGINES_LOCK = threading.Lock()


def get_pedersen(backend: str = "test", seed: bytes = b"verkledb") -> Pedersen:
    """Shared engine per (backend, seed); tables are expensive, so engines are cached."""
    key = (backend, bytes(seed))
    with _ENGINES_LOCK:
        engine = _ENGINES.get(key)
        if engine is None:
            engine = Pedersen(derive_generators(seed, WIDTH, get_backend(backend)))
            _ENGINES[key] = engine
        return engine
