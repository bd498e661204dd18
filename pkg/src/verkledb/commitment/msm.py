"""Windowed signed-digit multi-scalar multiplication over fixed generators.

Each scalar is recoded into signed base-``2**w`` digits in
``[-2**(w-1), 2**(w-1) - 1]`` (Booth-style recoding with carry).  Per
generator we keep a table of the ``2**(w-1)`` multiples ``1*G .. 2**(w-1)*G``;
a digit ``d`` then costs one table lookup and one group addition (or
subtraction for negative digits).  The accumulator is shared across all terms
so the ``w`` doublings per window are paid once, not per scalar.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import InvalidArgument
from .groups import ORDER, Element, GroupBackend

SCALAR_BITS = ORDER.bit_length()  # 253
WIDE_WINDOW = 16
NARROW_WINDOW = 10
WIDE_WINDOW_MAX_GENERATORS = 5


def recode(scalar: int, w: int) -> list[int]:
    """Signed base-2**w digits of ``scalar``, least significant first.

    ``sum(d * 2**(w*i)) == scalar`` and every digit lies in
    ``[-2**(w-1), 2**(w-1) - 1]``.
    """
    half = 1 << (w - 1)
    full = 1 << w
    mask = full - 1
    ndigits = -(-SCALAR_BITS // w)
    digits = []
    carry = 0
    for _ in range(ndigits):
        d = (scalar & mask) + carry
        scalar >>= w
        if d >= half:
            d -= full
            carry = 1
        else:
            carry = 0
        digits.append(d)
    assert not carry and not scalar, "scalar must be reduced"
    return digits


@dataclass
class MsmConfig:
    """Precomputed multiples for one window width over a generator list."""

    window_bits: int
    backend: GroupBackend
    generators: Sequence[Element]
    tables: dict[int, list[Element]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        if self.window_bits not in (NARROW_WINDOW, WIDE_WINDOW):
            raise InvalidArgument(f"window must be {NARROW_WINDOW} or {WIDE_WINDOW}")

    @property
    def table_size(self) -> int:
        return 1 << (self.window_bits - 1)

    def table(self, index: int) -> list[Element]:
        """Multiples ``[1*G, 2*G, ..., 2**(w-1)*G]`` of generator ``index`` (built lazily)."""
        tab = self.tables.get(index)
        if tab is not None:
            return tab
        with self._lock:
            tab = self.tables.get(index)
            if tab is None:
                be = self.backend
                g = self.generators[index]
                tab = [g]
                acc = g
                for _ in range(self.table_size - 1):
                    acc = be.add(acc, g)
                    tab.append(acc)
                self.tables[index] = tab
        return tab

    def precompute(self, indices: Sequence[int]) -> None:
        for i in indices:
            self.table(i)

    def point_count(self) -> int:
        return sum(len(t) for t in self.tables.values())


def msm(scalars: Sequence[int], indices: Sequence[int], config: MsmConfig) -> Element:
    """Compute ``sum(scalars[j] * G[indices[j]])`` with the configured window."""
    if len(scalars) != len(indices):
        raise InvalidArgument(f"{len(scalars)} scalars but {len(indices)} generator indices")
    be = config.backend
    w = config.window_bits
    terms = []
    for s, i in zip(scalars, indices):
        s %= ORDER
        if s:
            terms.append((recode(s, w), config.table(i)))
    acc = be.identity()
    if not terms:
        return acc
    ndigits = max(len(d) for d, _ in terms)
    started = False
    for pos in range(ndigits - 1, -1, -1):
        if started:
            acc = be.mul_pow2(acc, w)
        for digits, tab in terms:
            if pos >= len(digits):
                continue
            d = digits[pos]
            if d > 0:
                acc = be.add(acc, tab[d - 1])
                started = True
            elif d < 0:
                acc = be.sub(acc, tab[-d - 1])
                started = True
    return acc


def naive_msm(scalars: Sequence[int], generators: Sequence[Element], backend: GroupBackend) -> Element:
    """Reference sum of independent scalar multiplications."""
    if len(scalars) != len(generators):
        raise InvalidArgument(f"{len(scalars)} scalars but {len(generators)} generators")
    acc = backend.identity()
    for s, g in zip(scalars, generators):
        acc = backend.add(acc, backend.mul(g, s))
    return acc
