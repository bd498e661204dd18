"""Prime-order group backends for Pedersen vector commitments.

Two interchangeable backends share one contract:

* :class:`ModularGroup` -- the additive group of integers modulo a 253-bit
  prime.  Scalar multiplication is modular multiplication and generators are
  pseudorandom residues.  Every algebraic law needed by the trie holds, but
  discrete logs are trivial: this backend is *insecure* and exists for speed
  and debuggability.
* :class:`RistrettoGroup` -- the ristretto255 prime-order group built on
  edwards25519 (RFC 9496).  Same group order, canonical 32-byte encoding,
  hash-to-group via the Elligator map.

Both groups have order ``ORDER = 2**252 + 27742317777372353535851937790883648493``
so the scalar type is identical across backends.
"""

from __future__ import annotations

import hashlib
from typing import Any

from ..errors import DecodeError

ORDER = 2**252 + 27742317777372353535851937790883648493

Element = Any


def _hash64(data: bytes) -> bytes:
    return hashlib.sha512(data).digest()


class GroupBackend:
    """Operations every backend provides.  Elements are opaque values."""

    name = "abstract"
    order = ORDER

    def identity(self) -> Element:
        raise NotImplementedError

    def add(self, a: Element, b: Element) -> Element:
        raise NotImplementedError

    def neg(self, a: Element) -> Element:
        raise NotImplementedError

    def double(self, a: Element) -> Element:
        return self.add(a, a)

    def sub(self, a: Element, b: Element) -> Element:
        return self.add(a, self.neg(b))

    def mul_pow2(self, a: Element, k: int) -> Element:
        for _ in range(k):
            a = self.double(a)
        return a

    def eq(self, a: Element, b: Element) -> bool:
        raise NotImplementedError

    def is_identity(self, a: Element) -> bool:
        return self.eq(a, self.identity())

    def mul(self, a: Element, s: int) -> Element:
        """Reference scalar multiplication (left-to-right double-and-add)."""
        s %= self.order
        acc = self.identity()
        for bit in bin(s)[2:]:
            acc = self.double(acc)
            if bit == "1":
                acc = self.add(acc, a)
        return acc

    def serialize(self, a: Element) -> bytes:
        raise NotImplementedError

    def deserialize(self, data: bytes) -> Element:
        raise NotImplementedError

    def hash_to_element(self, data: bytes) -> Element:
        raise NotImplementedError


class ModularGroup(GroupBackend):
    """(Z_p, +) with p = ORDER.  Elements are ints in [0, p)."""

    name = "test"

    def identity(self) -> int:
        return 0

    def add(self, a: int, b: int) -> int:
        return (a + b) % ORDER

    def neg(self, a: int) -> int:
        return (-a) % ORDER

    def sub(self, a: int, b: int) -> int:
        return (a - b) % ORDER

    def double(self, a: int) -> int:
        return (a << 1) % ORDER

    def mul_pow2(self, a: int, k: int) -> int:
        return (a << k) % ORDER

    def eq(self, a: int, b: int) -> bool:
        return a == b

    def is_identity(self, a: int) -> bool:
        return a == 0

    def mul(self, a: int, s: int) -> int:
        return a * s % ORDER

    def serialize(self, a: int) -> bytes:
        return a.to_bytes(32, "little")

    def deserialize(self, data: bytes) -> int:
        if len(data) != 32:
            raise DecodeError(f"expected 32 bytes, got {len(data)}")
        value = int.from_bytes(data, "little")
        if value >= ORDER:
            raise DecodeError("encoding is not a reduced residue")
        return value

    def hash_to_element(self, data: bytes) -> int:
        counter = 0
        while True:
            value = int.from_bytes(_hash64(data + counter.to_bytes(4, "little")), "little") % ORDER
            if value:
                return value
            counter += 1


# --- ristretto255 -----------------------------------------------------------

_P = 2**255 - 19
_D = (-121665 * pow(121666, _P - 2, _P)) % _P
_D2 = 2 * _D % _P
_SQRT_M1 = 19681161376707505956807079304988542015446066515923890162744021073123829784752
_SQRT_AD_MINUS_ONE = 25063068953384623474111414158702152701244531502492656460079210482610430750235
_INVSQRT_A_MINUS_D = 54469307008909316920995813868745141605393597292927456921205312896311721017578
_ONE_MINUS_D_SQ = 1159843021668779879193775521855586647937357759715417654439879720876111806838
_D_MINUS_ONE_SQ = 40440834346308536858101042469323190826248399146238708352240133220865137265952


def _is_negative(x: int) -> bool:
    return bool(x & 1)


def _abs(x: int) -> int:
    return (-x) % _P if x & 1 else x


def _sqrt_ratio_m1(u: int, v: int) -> tuple[bool, int]:
    v3 = v * v % _P * v % _P
    v7 = v3 * v3 % _P * v % _P
    r = u * v3 % _P * pow(u * v7 % _P, (_P - 5) // 8, _P) % _P
    check = v * r % _P * r % _P
    u %= _P
    correct = check == u
    flipped = check == (-u) % _P
    flipped_i = check == (-u * _SQRT_M1) % _P
    if flipped or flipped_i:
        r = r * _SQRT_M1 % _P
    return correct or flipped, _abs(r)


class RistrettoGroup(GroupBackend):
    """ristretto255 over extended twisted-Edwards coordinates (X, Y, Z, T)."""

    name = "ristretto255"

    def identity(self) -> tuple[int, int, int, int]:
        return (0, 1, 1, 0)

    def add(self, p1, p2):
        x1, y1, z1, t1 = p1
        x2, y2, z2, t2 = p2
        a = (y1 - x1) * (y2 - x2) % _P
        b = (y1 + x1) * (y2 + x2) % _P
        c = t1 * _D2 % _P * t2 % _P
        d = z1 * 2 * z2 % _P
        e, f, g, h = b - a, d - c, d + c, b + a
        return (e * f % _P, g * h % _P, f * g % _P, e * h % _P)

    def double(self, p1):
        x1, y1, z1, _ = p1
        a = x1 * x1 % _P
        b = y1 * y1 % _P
        c = 2 * z1 * z1 % _P
        h = a + b
        e = h - (x1 + y1) * (x1 + y1)
        g = a - b
        f = c + g
        return (e * f % _P, g * h % _P, f * g % _P, e * h % _P)

    def neg(self, p1):
        x, y, z, t = p1
        return ((-x) % _P, y, z, (-t) % _P)

    def eq(self, p1, p2) -> bool:
        x1, y1, _, _ = p1
        x2, y2, _, _ = p2
        return (x1 * y2 - y1 * x2) % _P == 0 or (y1 * y2 - x1 * x2) % _P == 0

    def serialize(self, p1) -> bytes:
        x0, y0, z0, t0 = p1
        u1 = (z0 + y0) * (z0 - y0) % _P
        u2 = x0 * y0 % _P
        _, invsqrt = _sqrt_ratio_m1(1, u1 * u2 % _P * u2 % _P)
        den1 = invsqrt * u1 % _P
        den2 = invsqrt * u2 % _P
        z_inv = den1 * den2 % _P * t0 % _P
        if _is_negative(t0 * z_inv % _P):
            x, y = y0 * _SQRT_M1 % _P, x0 * _SQRT_M1 % _P
            den_inv = den1 * _INVSQRT_A_MINUS_D % _P
        else:
            x, y, den_inv = x0, y0, den2
        if _is_negative(x * z_inv % _P):
            y = (-y) % _P
        s = _abs(den_inv * (z0 - y) % _P)
        return s.to_bytes(32, "little")

    def deserialize(self, data: bytes):
        if len(data) != 32:
            raise DecodeError(f"expected 32 bytes, got {len(data)}")
        s = int.from_bytes(data, "little")
        if s >= _P or _is_negative(s):
            raise DecodeError("non-canonical ristretto255 encoding")
        ss = s * s % _P
        u1 = (1 - ss) % _P
        u2 = (1 + ss) % _P
        u2_sqr = u2 * u2 % _P
        v = (-(_D * u1 % _P * u1) - u2_sqr) % _P
        was_square, invsqrt = _sqrt_ratio_m1(1, v * u2_sqr % _P)
        den_x = invsqrt * u2 % _P
        den_y = invsqrt * den_x % _P * v % _P
        x = _abs(2 * s * den_x % _P)
        y = u1 * den_y % _P
        t = x * y % _P
        if not was_square or _is_negative(t) or y == 0:
            raise DecodeError("invalid ristretto255 encoding")
        return (x, y, 1, t)

    def _elligator(self, t: int):
        r = _SQRT_M1 * t % _P * t % _P
        u = (r + 1) * _ONE_MINUS_D_SQ % _P
        v = (-1 - r * _D) * (r + _D) % _P
        was_square, s = _sqrt_ratio_m1(u, v)
        if was_square:
            c = _P - 1
        else:
            s = (-_abs(s * t % _P)) % _P
            c = r
        n = (c * (r - 1) % _P * _D_MINUS_ONE_SQ - v) % _P
        w0 = 2 * s * v % _P
        w1 = n * _SQRT_AD_MINUS_ONE % _P
        w2 = (1 - s * s) % _P
        w3 = (1 + s * s) % _P
        return (w0 * w3 % _P, w2 * w1 % _P, w1 * w3 % _P, w0 * w2 % _P)

    def from_uniform_bytes(self, data: bytes):
        """Map 64 uniform bytes to a group element (RFC 9496 one-way map)."""
        mask = (1 << 255) - 1
        t1 = (int.from_bytes(data[:32], "little") & mask) % _P
        t2 = (int.from_bytes(data[32:64], "little") & mask) % _P
        return self.add(self._elligator(t1), self._elligator(t2))

    def hash_to_element(self, data: bytes):
        counter = 0
        while True:
            point = self.from_uniform_bytes(_hash64(data + counter.to_bytes(4, "little")))
            if not self.is_identity(point):
                return point
            counter += 1

    def base_point(self):
        y = 4 * pow(5, _P - 2, _P) % _P
        _, x = _sqrt_ratio_m1((y * y - 1) % _P, (_D * y * y + 1) % _P)
        return (x, y, 1, x * y % _P)


_BACKENDS = {"test": ModularGroup, "ristretto255": RistrettoGroup}


def get_backend(name: str) -> GroupBackend:
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown group backend {name!r}; choose from {sorted(_BACKENDS)}") from None
