"""Fixed-width bitsets stored as little-endian uint64 words (bit v -> word v // 64)."""

import numpy as np


def n_words(n):
    return max(1, (int(n) + 63) // 64)


def pack(mask, n=None):
    """Pack a boolean vector (or a stack of them, last axis) into uint64 words."""
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[-1] if n is None else n
    w = n_words(n)
    padded = np.zeros(mask.shape[:-1] + (w * 64,), dtype=bool)
    padded[..., :n] = mask
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def unpack(words, n):
    words = np.ascontiguousarray(np.asarray(words, dtype="<u8"))
    bits = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")
    return bits[..., :n].astype(bool)


def popcount(words):
    return int(np.bitwise_count(np.asarray(words, dtype=np.uint64)).sum())
