"""Keyed 64-bit mixing function and derived random streams.

Two related facilities live here:

* ``mix64`` / ``prf64`` — a stateless pseudo-random function built from the
  SplitMix64 finalizer.  ``prf64`` is the repo-wide keyed PRF: it absorbs a
  sequence of 64-bit tokens, one full finalizer round per token, and is the
  sole primitive behind the sketch hash family and stream derivation.  The
  constants are fixed so results reproduce bit-exactly across platforms:

      x ^= x >> 30;  x *= 0xBF58476D1CE4E5B9
      x ^= x >> 27;  x *= 0x94D049BB133111EB
      x ^= x >> 31

* ``derive_stream`` — returns a ``numpy.random.Generator`` backed by Philox
  (a counter-based generator) keyed by ``prf64`` over ``(master_seed,
  *tokens)``.  Every stochastic operation in the toolkit draws from such a
  stream; nothing uses global RNG state, so per-user work is reproducible
  and independent of scheduling.

String tokens are absorbed as their UTF-8 bytes in 8-byte little-endian
chunks, so purpose tags like ``"user"`` or ``"external"`` key disjoint
streams.
"""

from __future__ import annotations

from typing import Union

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15

Token = Union[int, str]


def mix64_scalar(x: int) -> int:
    """SplitMix64 finalizer on a single 64-bit value (plain integer arithmetic)."""
    x &= _MASK
    x ^= x >> 30
    x = (x * _MUL1) & _MASK
    x ^= x >> 27
    x = (x * _MUL2) & _MASK
    x ^= x >> 31
    return x


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        x = x.astype(np.uint64, copy=True)
        x ^= x >> np.uint64(30)
        x *= np.uint64(_MUL1)
        x ^= x >> np.uint64(27)
        x *= np.uint64(_MUL2)
        x ^= x >> np.uint64(31)
    return x


def _token_words(token: Token) -> list[int]:
    if isinstance(token, str):
        raw = token.encode("utf-8")
        pad = (-len(raw)) % 8
        raw += b"\x00" * pad
        return [int.from_bytes(raw[i : i + 8], "little") for i in range(0, len(raw), 8)] or [0]
    return [int(token) & _MASK]


def prf64(seed: int, *tokens: Token) -> int:
    """Keyed PRF over a token sequence, returning a 64-bit integer."""
    state = mix64_scalar(int(seed))
    for token in tokens:
        for word in _token_words(token):
            state = mix64_scalar(state ^ ((word * _GOLDEN) & _MASK))
    return state


def derive_key(master_seed: int, tokens: tuple[Token, ...]) -> tuple[int, int]:
    """128-bit Philox key: two independent PRF evaluations of the token path."""
    return prf64(master_seed, "key-lo", *tokens), prf64(master_seed, "key-hi", *tokens)


def derive_stream(master_seed: int, *tokens: Token) -> np.random.Generator:
    """Philox generator keyed by (master_seed, *tokens); disjoint per token path."""
    lo, hi = derive_key(master_seed, tokens)
    return np.random.Generator(np.random.Philox(key=lo + (hi << 64)))
