"""Counter-based random streams addressed by a seed path.

Every random draw in a training run is taken from a stream identified by
``(run_seed, generator_iteration, discriminator_iteration, purpose)``.
Streams are built on numpy's Philox generator, so any coordinate can be
regenerated on its own without replaying earlier draws.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Purpose tags keep independent streams apart at the same iteration.
LOSS_NOISE = 0
DELTA_NOISE = 1
REAL_BATCH = 2
PRIOR_BATCH = 3
GEN_PRIOR = 4
SCORING = 5
INIT = 6
DATA = 7
GUMBEL = 8


class SeedPath(NamedTuple):
    run_seed: int
    generator_iter: int = 0
    discriminator_iter: int = 0
    purpose: int = 0

    def with_purpose(self, purpose: int) -> "SeedPath":
        return self._replace(purpose=purpose)


def stream(path: SeedPath | tuple) -> np.random.Generator:
    """Return a fresh generator for ``path``; equal paths give equal streams."""
    path = SeedPath(*path)
    if any(int(c) < 0 for c in path):
        raise ValueError(f"seed path components must be non-negative: {path}")
    seq = np.random.SeedSequence(
        entropy=int(path.run_seed),
        spawn_key=(int(path.generator_iter), int(path.discriminator_iter), int(path.purpose)),
    )
    return np.random.Generator(np.random.Philox(seq))
