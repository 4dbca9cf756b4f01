"""
Portable random streams.

All randomness goes through numpy's Philox counter-based generator seeded by a
``SeedSequence`` whose spawn key names the stream, e.g. ``(DOMAIN, user, session,
modality)``. Streams are independent of each other, so adding users or
modalities never perturbs the values drawn for existing ones.
"""

import numpy as np

# Stream domains
SIGNATURE = 0
IMPOSTOR_SIGNATURE = 1
DEVICE = 2
SESSION = 3
NOISE = 4
TOUCH = 5
TRAINING = 10
INIT = 11
PAIRING = 12


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for the stream named by ``key`` under ``seed``."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))
