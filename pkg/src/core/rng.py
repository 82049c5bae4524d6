"""Counter-based random substreams keyed by (seed, experiment, replica).

Every replica owns its own Philox generators, so results do not depend on
which worker ran the replica or in what order replicas finished.
"""

from __future__ import annotations

from dataclasses import dataclass
import zlib

import numpy as np


def experiment_key(experiment: str) -> int:
    """Stable 32-bit key for an experiment name (independent of PYTHONHASHSEED)."""
    return zlib.crc32(experiment.encode("utf-8")) & 0xFFFFFFFF


def make_generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the substream ``(seed, *key)``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ReplicaStreams:
    """The three independent streams of one replica.

    ``env`` drives environment sampling, ``walk`` the walk's candidate draws and
    ``aux`` anything else (coins, bootstrap resamples). Each property access
    builds a fresh generator at the start of its stream; hold on to it.
    """
    seed: int
    experiment: str
    replica: int

    def _stream(self, slot: int) -> np.random.Generator:
        return make_generator(self.seed, experiment_key(self.experiment), self.replica, slot)

    @property
    def env(self) -> np.random.Generator:
        return self._stream(0)

    @property
    def walk(self) -> np.random.Generator:
        return self._stream(1)

    @property
    def aux(self) -> np.random.Generator:
        return self._stream(2)


__all__ = ["experiment_key", "make_generator", "ReplicaStreams"]
