"""Vector-commitment backends and the Verkle commitment rules."""

from .groups import ORDER, GroupBackend, ModularGroup, RistrettoGroup, get_backend
from .msm import MsmConfig, msm, naive_msm, recode
from .pedersen import (
    WIDTH,
    GeneratorBasis,
    Pedersen,
    ValueHalves,
    derive_generators,
    encode_value,
    get_pedersen,
    stem_scalar,
)

__all__ = [
    "ORDER",
    "WIDTH",
    "GroupBackend",
    "ModularGroup",
    "RistrettoGroup",
    "get_backend",
    "MsmConfig",
    "msm",
    "naive_msm",
    "recode",
    "GeneratorBasis",
    "Pedersen",
    "ValueHalves",
    "derive_generators",
    "encode_value",
    "get_pedersen",
    "stem_scalar",
]
