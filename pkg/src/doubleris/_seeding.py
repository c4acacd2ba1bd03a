"""Per-trial random streams derived from a master seed."""

import numpy as np


def trial_seed_sequence(seed, index):
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


def trial_rng(seed, index):
    """Generator for trial ``index``; independent of how trials are scheduled."""
    return np.random.default_rng(trial_seed_sequence(seed, index))


def trial_streams(seed, index, n):
    """``n`` independent generators for one trial (channel, init phases, ...)."""
    return [np.random.default_rng(s) for s in trial_seed_sequence(seed, index).spawn(n)]
