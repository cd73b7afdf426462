"""Counter-based random number streams.

Every stochastic quantity in the simulator is a pure function of an
:class:`RngKey` (seed, stream kind, particle index, step index).  Streams are
realized with numpy's Philox bit generator: the 128-bit Philox key is derived
from (seed, kind, step) and the particle index selects a fixed block of the
counter space.  Because the mapping never involves global state, full, batch
and reduced-variance runs driven by the same seed consume identical noise per
(particle, step) regardless of batch structure, evaluation order or thread
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "StreamKind",
    "RngKey",
    "normals",
    "normal_block",
    "generator",
]

_MASK64 = (1 << 64) - 1

# Philox counter advances in blocks of 4 64-bit words; one uniform double
# consumes one word.  Each particle owns a contiguous run of counter blocks
# per step, so scalar draws and whole-ensemble blocks agree bit for bit.
_WORDS_PER_BLOCK = 4


class StreamKind(IntEnum):
    """Independent sub-streams hanging off one simulation seed."""

    INIT = 0
    WIENER = 1
    BATCH_SHUFFLE = 2


@dataclass(frozen=True)
class RngKey:
    """Address of one random draw: (seed, kind, particle, step)."""

    seed: int
    kind: StreamKind
    particle: int = 0
    step: int = 0

    def __post_init__(self):
        if self.particle < 0 or self.step < 0:
            raise ValueError("particle and step indices must be nonnegative")


def _mix64(z: int) -> int:
    """SplitMix64 finalizer; bijective on 64-bit ints."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _philox_key(seed: int, kind: StreamKind, step: int) -> np.ndarray:
    w0 = _mix64((seed & _MASK64) ^ _mix64(int(kind) + 1))
    w1 = _mix64(w0 ^ _mix64(step))
    return np.array([w0, w1], dtype=np.uint64)


def _blocks_per_particle(dim: int) -> int:
    # Box-Muller consumes 2*ceil(dim/2) uniforms, rounded up to whole blocks.
    return max(1, math.ceil(2 * math.ceil(dim / 2) / _WORDS_PER_BLOCK))


def _box_muller(u: np.ndarray, dim: int) -> np.ndarray:
    """Map uniform[0,1) pairs to standard normals; fixed consumption."""
    npairs = math.ceil(dim / 2)
    u1 = u[..., 0:npairs]
    u2 = u[..., npairs : 2 * npairs]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    # interleaving is unnecessary; any fixed layout works, take the first dim
    return z[..., :dim]


def generator(seed: int, kind: StreamKind, step: int = 0) -> np.random.Generator:
    """Fresh Generator for whole-array draws keyed by (seed, kind, step).

    Used for initial sampling and per-step batch shuffles, where a single
    vectorized draw covers the whole ensemble.
    """
    return np.random.Generator(np.random.Philox(key=_philox_key(seed, kind, step)))


def normals(key: RngKey, dim: int) -> np.ndarray:
    """``dim`` i.i.d. standard normals addressed by ``key``.

    Bitwise equal to row ``key.particle`` of :func:`normal_block` for the
    same (seed, kind, step).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    stride = _blocks_per_particle(dim)
    bg = np.random.Philox(key=_philox_key(key.seed, key.kind, key.step))
    bg.advance(key.particle * stride)
    u = np.random.Generator(bg).random(2 * math.ceil(dim / 2))
    return _box_muller(u, dim)


def normal_block(seed: int, kind: StreamKind, step: int, n: int, dim: int) -> np.ndarray:
    """(n, dim) standard normals; row i equals ``normals(RngKey(seed, kind, i, step), dim)``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    stride = _blocks_per_particle(dim)
    words = stride * _WORDS_PER_BLOCK
    bg = np.random.Philox(key=_philox_key(seed, kind, step))
    u = np.random.Generator(bg).random(n * words).reshape(n, words)
    return _box_muller(u, dim)
