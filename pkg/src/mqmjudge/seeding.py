"""Deterministic randomness derivation.

Every randomized stage derives its own stream from the global seed plus a
tuple of string labels (stage name, system ids, ...). Streams are produced
by BLAKE2b in counter mode, so results are identical across platforms,
execution orders, and thread counts. Resample k of a labeled stream is the
k-th fixed-size slice of that stream, which makes per-resample work
independently reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

_DIGEST_SIZE = 64  # bytes per counter block


def _encode_labels(seed: int, labels: tuple) -> bytes:
    # Length-prefix each label so distinct tuples can never collide.
    parts = [b"seed:%d" % seed]
    for lab in labels:
        raw = str(lab).encode("utf-8")
        parts.append(b"%d:" % len(raw) + raw)
    return b"|".join(parts)


def stream_key(seed: int, *labels) -> bytes:
    """32-byte key identifying the random stream for (seed, labels)."""
    return hashlib.blake2b(_encode_labels(seed, labels), digest_size=32).digest()


def derive_seed(seed: int, *labels) -> int:
    """A 63-bit integer sub-seed for stdlib/numpy RNG consumers."""
    key = stream_key(seed, *labels)
    return int.from_bytes(key[:8], "big") >> 1


def hash_bits(key: bytes, n_bits: int) -> np.ndarray:
    """First ``n_bits`` bits of the keyed counter stream, as uint8 0/1."""
    if n_bits <= 0:
        return np.zeros(0, dtype=np.uint8)
    n_blocks = -(-n_bits // (8 * _DIGEST_SIZE))
    buf = b"".join(
        hashlib.blake2b(key + block.to_bytes(8, "big"), digest_size=_DIGEST_SIZE).digest()
        for block in range(n_blocks)
    )
    return np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[:n_bits]


def bit_matrix(key: bytes, n_rows: int, n_cols: int) -> np.ndarray:
    """(n_rows, n_cols) uint8 0/1 matrix; row k is resample k of the stream."""
    return hash_bits(key, n_rows * n_cols).reshape(n_rows, n_cols)


def sign_flips(key: bytes, n_rows: int, n_cols: int) -> np.ndarray:
    """(n_rows, n_cols) float64 matrix of +/-1 sign flips."""
    bits = bit_matrix(key, n_rows, n_cols)
    return 1.0 - 2.0 * bits.astype(np.float64)
