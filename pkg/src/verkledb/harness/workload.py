"""Synthetic block workloads and their line-oriented text format.

File layout: ``#`` header lines, then one line per block::

    <height> <op> <op> ...

Ops are either raw key writes ``<key hex64>=<value hex64>`` (``=-`` deletes)
or typed account ops:

    b:<addr>=<int>            balance
    n:<addr>=<int>            nonce
    z:<addr>=<int>            code size
    c:<addr>:<chunk>=<hex64>  code chunk
    s:<addr>:<slot>=<hex64>   storage slot (``=-`` deletes)

``addr`` is 40 hex digits.  Typed ops go through the account embedding
when replayed.

Generation is driven by a population of stems.  Each stem draws a target
occupancy (mostly 1 to 3 values, with a power-law tail up to 256), is
created in one block with all its values, and afterwards receives updates
picked with Zipf skew, plus occasional deletions.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Iterator, Optional, TextIO, Union

from ..errors import InvalidArgument
from ..trie.embedding import Embedding

MAGIC = "# verkledb-workload 1"

# weighted-op proxy for throughput (documented in the README)
OP_WEIGHTS = {"raw": 1.0, "delete": 1.0, "b": 1.0, "n": 1.0, "z": 1.0, "c": 2.0, "s": 2.0}

HEADER_FIELDS = ("b", "n", "z")  # sub-indices 0, 1, 2


class WorkloadError(InvalidArgument):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class WorkloadSpec:
    blocks: int = 100
    updates_min: int = 20
    updates_max: int = 200
    stems: int = 2200
    small_leaf_fraction: float = 0.957  # share of stems holding 1..3 values
    tail_exponent: float = 1.6
    key_skew: float = 1.1  # Zipf exponent for picking stems to update
    account_fraction: float = 0.5
    delete_fraction: float = 0.02
    seed: int = 1

    def validate(self) -> None:
        if self.blocks < 0 or self.stems < 0:
            raise InvalidArgument("blocks and stems must be non-negative")
        if not 0 <= self.updates_min <= self.updates_max:
            raise InvalidArgument("need 0 <= updates_min <= updates_max")
        for name in ("small_leaf_fraction", "account_fraction", "delete_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1]")

    def header(self) -> list[str]:
        body = " ".join(f"{k}={v}" for k, v in asdict(self).items())
        return [MAGIC, f"# {body}"]


@dataclass(frozen=True)
class Op:
    """One workload operation; ``value`` is bytes, an int (account fields) or None (delete)."""

    kind: str  # "raw" or one of b n z c s
    key: bytes  # full key (raw) or 20-byte address
    index: int = 0  # chunk or storage slot
    value: Union[bytes, int, None] = None

    @property
    def weight(self) -> float:
        return OP_WEIGHTS["delete"] if self.value is None else OP_WEIGHTS[self.kind]


@dataclass
class Block:
    height: int
    ops: list[Op]


# -- text format ------------------------------------------------------------------------------

def format_op(op: Op) -> str:
    if op.kind == "raw":
        return f"{op.key.hex()}={'-' if op.value is None else op.value.hex()}"
    addr = op.key.hex()
    if op.kind in HEADER_FIELDS:
        return f"{op.kind}:{addr}={op.value}"
    value = "-" if op.value is None else op.value.hex()
    return f"{op.kind}:{addr}:{op.index}={value}"


def _hex(text: str, size: int, line: int, what: str) -> bytes:
    try:
        data = bytes.fromhex(text)
    except ValueError:
        raise WorkloadError(line, f"bad hex in {what}: {text!r}") from None
    if len(data) != size:
        raise WorkloadError(line, f"{what} must be {size} bytes, got {len(data)}")
    return data


def parse_op(token: str, line: int) -> Op:
    left, sep, right = token.partition("=")
    if not sep:
        raise WorkloadError(line, f"op without '=': {token!r}")
    parts = left.split(":")
    if len(parts) == 1:
        key = _hex(parts[0], 32, line, "key")
        return Op("raw", key, 0, None if right == "-" else _hex(right, 32, line, "value"))
    kind = parts[0]
    if kind in HEADER_FIELDS and len(parts) == 2:
        try:
            value = int(right)
        except ValueError:
            raise WorkloadError(line, f"bad integer {right!r}") from None
        if value < 0:
            raise WorkloadError(line, "account fields are non-negative")
        return Op(kind, _hex(parts[1], 20, line, "address"), 0, value)
    if kind in ("c", "s") and len(parts) == 3:
        try:
            index = int(parts[2])
        except ValueError:
            raise WorkloadError(line, f"bad index {parts[2]!r}") from None
        if right == "-":
            if kind == "c":
                raise WorkloadError(line, "code chunks cannot be deleted")
            value = None
        else:
            value = _hex(right, 32, line, "value")
        return Op(kind, _hex(parts[1], 20, line, "address"), index, value)
    raise WorkloadError(line, f"unknown op {token!r}")


def write_workload(blocks: Iterable[Block], out: TextIO, spec: Optional[WorkloadSpec] = None) -> int:
    header = spec.header() if spec is not None else [MAGIC]
    for h in header:
        out.write(h + "\n")
    n = 0
    for block in blocks:
        out.write(" ".join([str(block.height)] + [format_op(op) for op in block.ops]) + "\n")
        n += 1
    return n


def parse_workload(lines: Iterable[str]) -> Iterator[Block]:
    """Parse a workload stream lazily.  Heights must run 1, 2, 3, ..."""
    expected = 1
    for lineno, raw in enumerate(lines, 1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        tokens = text.split()
        try:
            height = int(tokens[0])
        except ValueError:
            raise WorkloadError(lineno, f"bad height {tokens[0]!r}") from None
        if height != expected:
            raise WorkloadError(lineno, f"expected height {expected}, got {height}")
        expected += 1
        yield Block(height, [parse_op(t, lineno) for t in tokens[1:]])


def read_workload(path: str) -> list[Block]:
    with open(path) as f:
        return list(parse_workload(f))


def to_mutations(ops: Iterable[Op], embedding: Embedding) -> list[tuple[bytes, Optional[bytes]]]:
    out = []
    for op in ops:
        if op.kind == "raw":
            out.append((op.key, op.value))
        elif op.kind == "b":
            out.append(embedding.set_balance(op.key, op.value))
        elif op.kind == "n":
            out.append(embedding.set_nonce(op.key, op.value))
        elif op.kind == "z":
            out.append(embedding.set_code_size(op.key, op.value))
        elif op.kind == "c":
            out.append(embedding.set_code_chunk(op.key, op.index, op.value))
        else:
            out.append(embedding.set_storage_slot(op.key, op.index, op.value))
    return out


# -- generation --------------------------------------------------------------------------------

@dataclass
class _Stem:
    kind: str  # "raw", "header" or "storage"
    ident: bytes  # stem for raw, address otherwise
    suffixes: list[int]
    present: set


def _occupancy(rng: random.Random, spec: WorkloadSpec, tail: list[float]) -> int:
    if rng.random() < spec.small_leaf_fraction:
        return rng.choices((1, 2, 3), weights=(0.55, 0.30, 0.15))[0]
    return rng.choices(range(4, 257), cum_weights=tail)[0]


def _make_stem(rng: random.Random, spec: WorkloadSpec, tail: list[float]) -> _Stem:
    occ = _occupancy(rng, spec, tail)
    if rng.random() < spec.account_fraction:
        addr = rng.randbytes(20)
        if occ <= 3:
            return _Stem("header", addr, list(range(occ)), set())
        return _Stem("storage", addr, sorted(rng.sample(range(256), occ)), set())
    return _Stem("raw", rng.randbytes(31), sorted(rng.sample(range(256), occ)), set())


def _write(rng: random.Random, stem: _Stem, suffix: int) -> Op:
    stem.present.add(suffix)
    if stem.kind == "raw":
        return Op("raw", stem.ident + bytes([suffix]), 0, rng.randbytes(32))
    if stem.kind == "header":
        return Op(HEADER_FIELDS[suffix], stem.ident, 0, rng.randrange(1 << 64))
    return Op("s", stem.ident, suffix, rng.randbytes(32))


def _delete(stem: _Stem, suffix: int) -> Op:
    stem.present.discard(suffix)
    if stem.kind == "raw":
        return Op("raw", stem.ident + bytes([suffix]), 0, None)
    return Op("s", stem.ident, suffix, None)


def generate(spec: WorkloadSpec) -> Iterator[Block]:
    """Deterministic block stream for ``spec``."""
    spec.validate()
    rng = random.Random(spec.seed)
    weights = [j ** -spec.tail_exponent for j in range(4, 257)]
    tail, acc = [], 0.0
    for w in weights:
        acc += w
        tail.append(acc)
    live: list[_Stem] = []
    cum: list[float] = []
    created = 0
    for height in range(1, spec.blocks + 1):
        ops: list[Op] = []
        target = (spec.stems * height) // spec.blocks
        while created < target:
            stem = _make_stem(rng, spec, tail)
            ops.extend(_write(rng, stem, s) for s in stem.suffixes)
            live.append(stem)
            cum.append((cum[-1] if cum else 0.0) + (len(live)) ** -spec.key_skew)
            created += 1
        if live:
            # hot stems are the oldest ones
            for _ in range(rng.randint(spec.updates_min, spec.updates_max)):
                stem = rng.choices(live, cum_weights=cum)[0]
                if stem.kind != "header" and stem.present and rng.random() < spec.delete_fraction:
                    ops.append(_delete(stem, rng.choice(sorted(stem.present))))
                else:
                    ops.append(_write(rng, stem, rng.choice(stem.suffixes)))
        yield Block(height, ops)


def spec_from_args(values: dict) -> WorkloadSpec:
    known = {f.name for f in fields(WorkloadSpec)}
    bad = set(values) - known
    if bad:
        raise InvalidArgument(f"unknown workload fields: {sorted(bad)}")
    return WorkloadSpec(**values)
