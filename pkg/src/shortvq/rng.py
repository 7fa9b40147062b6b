"""Deterministic counter-based random number generation.

Every stochastic step in the pipeline (crop placement, mock responses,
resampling, weight init, shuffling) draws from a SplitMix64 stream keyed
by a content tuple such as ``(seed, video_id, frame_index)``.  Streams are
independent of iteration order and of each other, so re-running any stage,
in any order and with any worker count, reproduces identical results.
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_key(*parts) -> int:
    """Map a tuple of ints/floats/strings/None to a stable 64-bit key.

    Uses blake2b over a canonical byte encoding; stable across processes
    and platforms (unlike the salted builtin ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if part is None:
            token = b"%"
        elif isinstance(part, bool):
            token = b"b1" if part else b"b0"
        elif isinstance(part, int):
            token = b"i" + str(part).encode()
        elif isinstance(part, float):
            token = b"f" + repr(part).encode()
        elif isinstance(part, str):
            token = b"s" + part.encode("utf-8")
        else:
            raise TypeError(f"unsupported key part type: {type(part).__name__}")
        h.update(token)
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def _mix(x: int) -> int:
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class CounterRng:
    """SplitMix64: the n-th output is a pure function of (key, n)."""

    def __init__(self, *key_parts):
        if len(key_parts) == 1 and isinstance(key_parts[0], int):
            self._key = key_parts[0] & _MASK
        else:
            self._key = derive_key(*key_parts)
        self._counter = 0

    def next_u64(self) -> int:
        self._counter += 1
        return _mix((self._key + self._counter * _GOLDEN) & _MASK)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Multiply-shift mapping of one 64-bit draw."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return (self.next_u64() * n) >> 64

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def gauss(self) -> float:
        """Standard normal via Box-Muller (two uniform draws per call)."""
        import math

        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), via partial Fisher-Yates."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n} without replacement")
        arr = list(range(n))
        for i in range(k):
            j = i + self.randint(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k]
