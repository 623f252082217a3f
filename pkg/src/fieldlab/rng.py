"""Deterministic counter-based random streams.

Draw ``i`` of a stream is a pure function of the stream key and the counter:
``value(key, i) = mix64(key + (i + 1) * GOLDEN_GAMMA)`` where ``mix64`` is the
SplitMix64 finalizer.  Because no draw depends on any other, vectorized code
can recompute arbitrary slices of a stream and stay bit-identical to the
sequential engine, on any platform.

Substreams are derived by folding tags (ints, strings, or int arrays) into a
key with the same mixer; sessions, rounds, world draws, and policy noise each
get independent keys.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

_U64_GAMMA = np.uint64(GOLDEN_GAMMA)
_U64_MUL1 = np.uint64(_MUL1)
_U64_MUL2 = np.uint64(_MUL2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

# 53-bit mantissa: (u64 >> 11) * 2**-53 is uniform on [0, 1)
_DOUBLE_SCALE = 1.0 / float(1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` on uint64 arrays (wrapping arithmetic)."""
    z = z.astype(np.uint64, copy=True)
    z ^= z >> _S30
    z *= _U64_MUL1
    z ^= z >> _S27
    z *= _U64_MUL2
    z ^= z >> _S31
    return z


def _fold_int(k: int, tag: int) -> int:
    return mix64(k ^ ((tag + GOLDEN_GAMMA) & MASK64))


def derive_key(key: int, *tags: int | str) -> int:
    """Derive a child key by folding tags into ``key``.

    Strings fold bytewise so tag namespaces ("world", "policy", ...) cannot
    collide with small integer tags.
    """
    k = mix64(key)
    for tag in tags:
        if isinstance(tag, str):
            for b in tag.encode("utf-8"):
                k = _fold_int(k, b)
        else:
            k = _fold_int(k, int(tag))
    return k


def derive_key_array(key: int | np.ndarray, *tags: int | str | np.ndarray) -> np.ndarray:
    """Vectorized :func:`derive_key`; array tags derive one key per element."""
    if isinstance(key, np.ndarray):
        k = mix64_array(key)
    else:
        k = mix64_array(np.asarray([key & MASK64], dtype=np.uint64))
    for tag in tags:
        if isinstance(tag, str):
            for b in tag.encode("utf-8"):
                k = mix64_array(k ^ np.uint64((b + GOLDEN_GAMMA) & MASK64))
        elif isinstance(tag, np.ndarray):
            t = (tag.astype(np.uint64) + _U64_GAMMA) & np.uint64(MASK64)
            k = mix64_array(k ^ t)
        else:
            k = mix64_array(k ^ np.uint64((int(tag) + GOLDEN_GAMMA) & MASK64))
    return k


def value_at(key: int, counter: int) -> int:
    """Draw ``counter`` (0-based) of stream ``key`` as a u64."""
    return mix64((key + ((counter + 1) * GOLDEN_GAMMA)) & MASK64)


def uniform_at(key: int, counter: int) -> float:
    return (value_at(key, counter) >> 11) * _DOUBLE_SCALE


def u64_block(key: int, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start+count`` of stream ``key``, vectorized."""
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    return mix64_array(np.uint64(key & MASK64) + counters * _U64_GAMMA)


def uniform_block(key: int, start: int, count: int) -> np.ndarray:
    return (u64_block(key, start, count) >> _S11).astype(np.float64) * _DOUBLE_SCALE


def uniform_matrix(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start+count`` for every key; shape (len(keys), count)."""
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = keys.astype(np.uint64)[:, None] + counters[None, :] * _U64_GAMMA
    return (mix64_array(z) >> _S11).astype(np.float64) * _DOUBLE_SCALE


class Stream:
    """Sequential view of a keyed counter stream."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    def __repr__(self) -> str:
        return f"Stream(key=0x{self.key:016x}, counter={self.counter})"

    def split(self, *tags: int | str) -> "Stream":
        """Independent child stream; consumes no draws from this one."""
        return Stream(derive_key(self.key, *tags))

    def next_u64(self) -> int:
        v = value_at(self.key, self.counter)
        self.counter += 1
        return v

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def uniforms(self, count: int) -> np.ndarray:
        block = uniform_block(self.key, self.counter, count)
        self.counter += count
        return block

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n); bias below n * 2**-53."""
        return min(int(self.uniform() * n), n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, consuming len(items) - 1 draws."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
