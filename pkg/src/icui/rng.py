"""Deterministic random-stream derivation.

Every stochastic step in the toolkit draws from a Generator derived from the
single run seed plus a path of string/int tokens.  Token hashing uses sha256,
not Python's salted hash, so streams are stable across processes and machines.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stable_seed(master: int, *tokens: int | str) -> int:
    """Derive a 64-bit child seed from a master seed and a token path."""
    h = hashlib.sha256()
    h.update(int(master & _MASK64).to_bytes(8, "big"))
    for tok in tokens:
        if isinstance(tok, str):
            h.update(b"s" + tok.encode("utf-8") + b"\x00")
        else:
            h.update(b"i" + int(tok & _MASK64).to_bytes(8, "big"))
    return int.from_bytes(h.digest()[:8], "big")


def make_rng(master: int, *tokens: int | str) -> np.random.Generator:
    """Generator seeded by `stable_seed(master, *tokens)`."""
    return np.random.Generator(np.random.PCG64(stable_seed(master, *tokens)))
