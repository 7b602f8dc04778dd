"""Deterministic RNG derivation.

Every command owns one root seed; each stage draws from an independent
stream derived as SeedSequence([root, crc32(stage), index]). The scheme is
order-free: adding a stage never shifts another stage's stream, which keeps
artifacts bit-reproducible across code revisions and `--threads` settings.
"""

from __future__ import annotations

import zlib

import numpy as np


def stage_seed(root_seed: int, stage: str, index: int = 0) -> np.random.SeedSequence:
    code = zlib.crc32(stage.encode("utf-8"))
    return np.random.SeedSequence([int(root_seed), code, int(index)])


def stage_rng(root_seed: int, stage: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stage_seed(root_seed, stage, index)))
