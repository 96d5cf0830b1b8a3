"""Deterministic random-number streams for parallel Monte Carlo batches.

Every trial gets its own independent stream derived from (master seed,
trial index), so batches can be merged in any order and re-run with any
level of parallelism without changing a single draw.

The forgetful avalanche engine additionally needs uniforms that are a pure
function of (trial key, vertex, step): with that keying, a trimmed replay
of a run sees exactly the same values for the vertices it still tracks as
the untrimmed run did, which is what makes trimming a sound optimization.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# (value >> 11) has 53 significant bits; +1 shifts the draw into (0, 1] so a
# realized fitness y + (1-y)*u is strictly above the bound y.
_INV53 = 2.0**-53


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int, mod 2**64."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def vertex_hash(encoded: str) -> int:
    """Stable 64-bit hash of a vertex's canonical serialization."""
    digest = hashlib.blake2b(encoded.encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class StepKeyedSampler:
    """Uniform draws in (0, 1] keyed by (trial key, vertex hash, step index).

    The value for a given (vertex, step) pair does not depend on which other
    vertices are sampled alongside it, nor on iteration order.  The scalar
    and vector paths are bit-identical: (h >> 11) + 1 is an exact float64
    and the 2^-53 scale is an exact power of two.
    """

    def __init__(self, key: int):
        self.key = int(key) & _MASK64

    def uniform_seq(self, vertex_hashes: list, step: int) -> list:
        step_key = mix64(self.key + (step + 1) * 0x9E3779B97F4A7C15)
        out = [0.0] * len(vertex_hashes)
        for i, vh in enumerate(vertex_hashes):
            z = (vh ^ step_key) & _MASK64
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
            out[i] = (((z ^ (z >> 31)) >> 11) + 1) * _INV53
        return out

    def uniforms(self, vertex_hashes: np.ndarray, step: int) -> np.ndarray:
        if len(vertex_hashes) <= 32:
            return np.asarray(self.uniform_seq(vertex_hashes.tolist(), step))
        step_key = mix64(self.key + (step + 1) * 0x9E3779B97F4A7C15)
        h = _mix64_array(vertex_hashes ^ np.uint64(step_key))
        return ((h >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53

    def uniform(self, vhash: int, step: int) -> float:
        step_key = mix64(self.key + (step + 1) * 0x9E3779B97F4A7C15)
        h = mix64(vhash ^ step_key)
        return ((h >> 11) + 1) * _INV53


def stream_seed(master_seed: int, *key: int) -> int:
    """64-bit stream seed for a (master seed, index...) combination."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


class TrialStreams:
    """The independent random sources a single trial may consume.

    engine_key feeds the keyed sampler of the forgetful engine, `classic`
    the scalar-draw classic engine, and `gen` everything else (finalization
    draws, percolation, branching).  All three derive from disjoint children
    of one SeedSequence, so a trial can mix processes without draw reuse.
    """

    __slots__ = ("engine_key", "_classic_seed", "_gen_entropy", "_gen", "_classic")

    def __init__(self, master_seed: int, *key: int):
        ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
        w = ss.generate_state(4, np.uint64)
        self.engine_key = int(w[0])
        self._classic_seed = int(w[1])
        self._gen_entropy = (int(w[2]) << 64) | int(w[3])
        self._gen = None
        self._classic = None

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.Generator(np.random.PCG64(self._gen_entropy))
        return self._gen

    @property
    def classic(self):
        import random

        if self._classic is None:
            self._classic = random.Random(self._classic_seed)
        return self._classic

    @property
    def classic_seed(self) -> int:
        return self._classic_seed

    def sampler(self) -> StepKeyedSampler:
        return StepKeyedSampler(self.engine_key)
