"""Derived seeds for each phase of an experiment.

A master seed fans out through ``numpy.random.SeedSequence`` spawn keys::

    (SPLIT,)                          data split
    (INIT,)                           factor initialization
    (PRETRAIN, epoch)                 per-epoch shuffle
    (REFINE, pass, kind, group)       one swarm, kind 0 = row, 1 = column
    (SYNTH,)                          synthetic data generation

Because every key is independent, disabling or resizing one phase never
shifts the random stream seen by another.
"""
import numpy as np

SPLIT = 0
INIT = 1
PRETRAIN = 2
REFINE = 3
SYNTH = 4

KIND_CODES = {"row": 0, "col": 1}


def derive_seed(master, *key):
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def group_seed(master, pass_index, kind, index):
    return derive_seed(master, REFINE, pass_index, KIND_CODES[kind], index)
