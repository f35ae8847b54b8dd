"""Deterministic seed derivation.

Every random choice in the package draws from a stream derived from one root
seed.  A stream is named by string labels (hashed with crc32, which is stable
across processes, unlike the builtin hash) plus optional integer indices:

    root
      "data"                  synthetic generation
      "split"                 train/eval row split
      "anonymizer", "task"    net initialization
      "ensemble", i, r        training hacker i after r restarts
      "suite", name           one evaluation attacker
      "utility"               fresh task net used for scoring
      "batches"               minibatch shuffling
"""

import zlib

import numpy as np


def derive_seed(root, *labels):
    """Map (root seed, labels...) to a uint32 seed, deterministically."""
    parts = [int(root) & 0xFFFFFFFF]
    for lab in labels:
        if isinstance(lab, str):
            parts.append(zlib.crc32(lab.encode("utf-8")))
        else:
            parts.append(int(lab) & 0xFFFFFFFF)
    seq = np.random.SeedSequence(parts)
    return int(seq.generate_state(1, np.uint32)[0])


def derive_rng(root, *labels):
    """A numpy Generator seeded from the derived stream."""
    return np.random.default_rng(derive_seed(root, *labels))
