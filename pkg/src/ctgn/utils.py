"""Deterministic RNG plumbing: one root seed, split per subsystem."""

import numpy as np

_SUBSYSTEMS = {
    "init": 0,
    "negatives": 1,
    "masking": 2,
    "synth": 3,
    "eval": 4,
    "dropout": 5,
    "classifier": 6,
}


def subsystem_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one subsystem, reproducible from the root seed."""
    key = _SUBSYSTEMS[name]
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
