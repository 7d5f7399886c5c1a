"""Stream seeds derived from one experiment-wide integer.

``derive_seed(root, name)`` is the first 8 bytes (little endian) of
``sha256(f"{root}:{name}")``. Stream names used by the pipeline are
``split``, ``synth.ages``, ``synth.clients``, ``synth.edges``,
``synth.labels`` and ``shuffle``.
"""

import hashlib

import numpy as np


def derive_seed(root: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(root)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, name))
