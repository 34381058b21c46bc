"""Counter-based random streams for the particle engine.

Every particle owns a stateless stream addressed by a 64-bit key and a
per-particle draw counter, so a particle's trajectory is a pure function
of (master seed, replicate index, lineage) and of the barrier grid it is
advanced on. Results are therefore independent of scheduling, of batch
composition, and of which *other* particles exist -- pruning more or
fewer neighbours leaves a surviving lineage bit-identical, which is what
the pruning-bias checks rely on.

The stream is SplitMix64: draw i of stream k is the SplitMix64 finaliser
applied to k + i*GOLDEN. Child keys are derived by hashing the parent
key with the parent's draw counter at the branch event and the child
slot, which makes lineage keys reproducible and collision-free for all
practical population sizes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0x8BB84B93962EACC9)

_U53 = 2.0 ** -53


_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser, vectorised over uint64 arrays."""
    x = np.array(x, dtype=np.uint64, copy=True, ndmin=1)
    t = np.right_shift(x, _S30)
    np.bitwise_xor(x, t, out=x)
    np.multiply(x, _MIX1, out=x)
    np.right_shift(x, _S27, out=t)
    np.bitwise_xor(x, t, out=x)
    np.multiply(x, _MIX2, out=x)
    np.right_shift(x, _S31, out=t)
    np.bitwise_xor(x, t, out=x)
    return x


def replicate_key(seed: int, index: int) -> np.uint64:
    """Root lineage key of one replicate."""
    # route through arrays so uint64 wraparound stays silent
    s = np.asarray(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    i = np.asarray(np.uint64(index))
    return mix64(mix64(s + GOLDEN) + i * GOLDEN)[0]


def child_keys(parent_keys: np.ndarray, parent_ctrs: np.ndarray,
               slots: np.ndarray) -> np.ndarray:
    """Keys of the children spawned at one branch event.

    ``parent_ctrs`` is the parent's draw counter at the event (unique per
    event within a lineage) and ``slots`` numbers the children 0..k-2.
    """
    parent_keys = np.asarray(parent_keys, dtype=np.uint64)
    ev = mix64(np.asarray(parent_ctrs, dtype=np.uint64) * GOLDEN
               + np.asarray(slots, dtype=np.uint64) * _SALT + np.uint64(1))
    return mix64(parent_keys ^ ev)


def uniforms(keys: np.ndarray, ctrs: np.ndarray) -> np.ndarray:
    """One uniform in (0, 1) from each (key, counter) pair."""
    z = np.multiply(np.asarray(ctrs, dtype=np.uint64), GOLDEN)
    np.add(z, np.asarray(keys, dtype=np.uint64), out=z)
    z = mix64(z)
    np.right_shift(z, np.uint64(11), out=z)
    u = z.astype(np.float64)
    np.add(u, 0.5, out=u)
    np.multiply(u, _U53, out=u)
    return u


def gaussians(keys: np.ndarray, ctrs: np.ndarray) -> np.ndarray:
    """One standard Gaussian per stream via the inverse CDF."""
    return ndtri(uniforms(keys, ctrs))


def exponentials(keys: np.ndarray, ctrs: np.ndarray) -> np.ndarray:
    """One unit-rate exponential per stream."""
    return -np.log(uniforms(keys, ctrs))
