# models/channel.py
from dataclasses import dataclass

import numpy as np

# stream ids of the six white vectors; each (slot, user) pair owns one
STREAM_H1, STREAM_H2, STREAM_H3, STREAM_G1, STREAM_G2, STREAM_G3 = range(6)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    trial_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.trial_index < 0:
            raise ValueError("trial_index must be non-negative")


@dataclass(frozen=True, eq=False)
class ChannelTriple:
    """Channels of both users over the three slots.

    Each field is either an M-vector (one trial) or an (n, M) array holding
    n trials, one per row.
    """

    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray

    @property
    def trials(self) -> int:
        return 1 if self.h1.ndim == 1 else self.h1.shape[0]
