"""Seeded random streams backed by xoshiro256**."""

import numpy as np
from randomgen import Xoshiro256

# Stream identifiers keep weight init, training and data synthesis
# independent even when they share a user-facing seed.
STREAM_INIT = 0
STREAM_TRAIN = 1
STREAM_SPLIT = 2
STREAM_SYNTH = 3


def make_rng(seed: int, stream: int = STREAM_INIT) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(Xoshiro256(ss))
