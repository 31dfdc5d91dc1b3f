"""Counter-based random number streams for reproducible parallel Monte Carlo.

Implements the Philox-4x32-10 keyed bijection vectorized over numpy arrays,
so that every (seed, path index, step, rejection round) maps to its own fixed
128-bit block of randomness.  Draws are therefore independent of batching,
parallel schedule, and thread count by construction.
"""
from __future__ import annotations

import hashlib

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_TWO53 = float(1 << 53)


def derive_seed(root: int, label: str) -> int:
    """Stable 32-bit stage seed derived from a root seed and a text label."""
    digest = hashlib.sha256(f"{int(root)}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def philox4x32(c0, c1, c2, c3, k0, k1, rounds: int = 10):
    """Philox-4x32 block function; all inputs broadcastable uint32 arrays.

    Returns four uint32 arrays of the broadcast shape.
    """
    c0, c1, c2, c3, k0, k1 = np.broadcast_arrays(
        *(np.asarray(x, dtype=np.uint32) for x in (c0, c1, c2, c3, k0, k1))
    )
    k0 = k0.copy()
    k1 = k1.copy()
    # key schedule wraps mod 2^32 by design
    with np.errstate(over="ignore"):
        for _ in range(rounds):
            p0 = _M0 * c0.astype(np.uint64)
            p1 = _M1 * c2.astype(np.uint64)
            hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            c0 = hi1 ^ c1 ^ k0
            c1 = lo1
            c2 = hi0 ^ c3 ^ k1
            c3 = lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def _block_uniforms(seed, stream_ids, c0, c1, c2):
    """Two open-(0,1) uniforms per stream from one Philox block.

    Each uniform packs two 32-bit words into the top 53 bits of a double.
    """
    w0, w1, w2, w3 = philox4x32(c0, c1, c2, 0, np.uint32(seed), stream_ids)
    hi = (w0.astype(np.uint64) << np.uint64(32)) | w1.astype(np.uint64)
    lo = (w2.astype(np.uint64) << np.uint64(32)) | w3.astype(np.uint64)
    u1 = ((hi >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO53
    u2 = ((lo >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO53
    return u1, u2


def counter_normals(seed: int, stream_ids, step: int, round_idx: int, q: int):
    """Standard-normal draw of shape (len(stream_ids), q) for a fixed counter.

    The draw for stream i depends only on (seed, stream_ids[i], step,
    round_idx), never on which other streams are in the batch.
    """
    stream_ids = np.asarray(stream_ids, dtype=np.uint32)
    n_blocks = (q + 1) // 2
    cols = []
    for blk in range(n_blocks):
        u1, u2 = _block_uniforms(
            seed, stream_ids, np.uint32(step), np.uint32(round_idx), np.uint32(blk)
        )
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        cols.append(r * np.cos(ang))
        cols.append(r * np.sin(ang))
    return np.stack(cols[:q], axis=-1)


def counter_uniforms(seed: int, stream_ids, step: int, round_idx: int, q: int):
    """Open-(0,1) uniform draw of shape (len(stream_ids), q), same keying."""
    stream_ids = np.asarray(stream_ids, dtype=np.uint32)
    n_blocks = (q + 1) // 2
    cols = []
    for blk in range(n_blocks):
        u1, u2 = _block_uniforms(
            seed, stream_ids, np.uint32(step), np.uint32(round_idx), np.uint32(blk)
        )
        cols.append(u1)
        cols.append(u2)
    return np.stack(cols[:q], axis=-1)
