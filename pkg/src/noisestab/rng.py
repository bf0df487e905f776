"""Counter-based normal and uniform variates.

Keys are uint64; pass ``np.uint64`` values when calling from Python.
Every draw is a pure function of ``(seed, trajectory_index, counter)``: the
pair (seed, index) is hashed to a stream key, and the counter is mixed into
the key with the SplitMix64 finalizer. There is no generator state, so any
trajectory can be (re)generated independently of how work is partitioned.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


@njit(cache=True, inline="always")
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def stream_key(seed, index):
    return mix64(np.uint64(seed) ^ mix64(np.uint64(index) * _GOLDEN + _ONE))


@njit(cache=True, inline="always")
def uniform_at(key, counter):
    """Uniform on (0, 1]; never returns 0 so logarithms are safe."""
    z = mix64(np.uint64(key) + np.uint64(counter) * _GOLDEN)
    return (np.float64(z >> _S11) + 1.0) * _INV53


@njit(cache=True, inline="always")
def normal_at(key, counter):
    """Normal number ``counter`` of a stream: even counters take the cosine
    branch of Box-Muller pair counter // 2, odd ones the sine branch."""
    c = np.uint64(counter)
    pair = c >> _ONE
    u1 = uniform_at(key, pair * _TWO)
    u2 = uniform_at(key, pair * _TWO + _ONE)
    rad = np.sqrt(-2.0 * np.log(u1))
    if c & _ONE:
        return rad * np.sin(_TWO_PI * u2)
    return rad * np.cos(_TWO_PI * u2)


@njit(cache=True, inline="always")
def normal_pair(key, pair):
    """Both Box-Muller outputs for counters 2*pair and 2*pair + 1."""
    c = np.uint64(pair) * _TWO
    rad = np.sqrt(-2.0 * np.log(uniform_at(key, c)))
    ang = _TWO_PI * uniform_at(key, c + _ONE)
    return rad * np.cos(ang), rad * np.sin(ang)


@njit(cache=True, inline="always")
def side_key(key):
    """Independent stream derived from a trajectory key (bridge-test uniforms)."""
    return mix64(np.uint64(key) ^ _M2)


@njit(cache=True)
def normals(seed, indices, counter):
    """One standard normal per trajectory index at a fixed counter."""
    out = np.empty(indices.shape[0])
    for i in range(indices.shape[0]):
        out[i] = normal_at(stream_key(seed, indices[i]), counter)
    return out


@njit(cache=True)
def normal_block(seed, index, start, count):
    """``count`` consecutive counters of one trajectory's stream."""
    key = stream_key(seed, index)
    out = np.empty(count)
    for i in range(count):
        out[i] = normal_at(key, np.uint64(start) + np.uint64(i))
    return out


@njit(cache=True)
def normal_matrix(seed, start, rows, cols):
    """Rows are trajectories ``start .. start+rows-1``; columns are counters."""
    out = np.empty((rows, cols))
    for i in range(rows):
        key = stream_key(seed, np.uint64(start) + np.uint64(i))
        for j in range(cols):
            out[i, j] = normal_at(key, j)
    return out
