"""Per-replicate random streams.

Each replicate owns a xoshiro256** state (consumed by the compiled event
engines) and a numpy ``Generator`` (consumed by Python-side samplers such as
initial conditions).  Both are derived from ``SeedSequence(master,
spawn_key=(replicate,))`` so that results never depend on how replicates are
scheduled across workers.
"""

from __future__ import annotations

import numba
import numpy as np

_TWO_M53 = 1.0 / 9007199254740992.0


@numba.njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(inline="always", cache=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(inline="always", cache=True)
def uniform_open(s):
    """Uniform on the open interval (0, 1)."""
    return (np.float64(next_u64(s) >> np.uint64(11)) + 0.5) * _TWO_M53


@numba.njit(inline="always", cache=True)
def exponential(s, rate):
    return -np.log(uniform_open(s)) / rate


@numba.njit(inline="always", cache=True)
def randint(s, n):
    """Uniform integer in [0, n)."""
    k = int(uniform_open(s) * n)
    return k if k < n else n - 1


@numba.njit(cache=True)
def normal(s):
    u1 = uniform_open(s)
    u2 = uniform_open(s)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def seed_sequence(master: int, replicate: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(replicate),))


class Stream:
    """Random stream for one replicate.

    ``state`` is the engine's xoshiro256** state; ``np`` is a numpy Generator
    seeded from an independent child of the same seed sequence.
    """

    def __init__(self, master: int = 0, replicate: int = 0):
        self.master = int(master)
        self.replicate = int(replicate)
        engine_seq, python_seq = seed_sequence(master, replicate).spawn(2)
        self.state = engine_seq.generate_state(4, dtype=np.uint64)
        if not self.state.any():
            self.state[0] = np.uint64(0x9E3779B97F4A7C15)
        self.np = np.random.default_rng(python_seq)

    def uniform(self) -> float:
        return uniform_open(self.state)

    def exponential(self, rate: float) -> float:
        return exponential(self.state, rate)

    def copy(self) -> "Stream":
        other = Stream.__new__(Stream)
        other.master, other.replicate = self.master, self.replicate
        other.state = self.state.copy()
        other.np = np.random.default_rng()
        other.np.bit_generator.state = self.np.bit_generator.state
        return other
