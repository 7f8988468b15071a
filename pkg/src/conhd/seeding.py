"""One global seed, split into independent per-component streams.

``derive_seed(seed, name)`` hashes the pair, so adding a new component never
shifts the stream of an existing one.
"""

import hashlib

import numpy as np
import torch


def derive_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, name))


def seed_torch(seed: int, name: str) -> None:
    torch.manual_seed(derive_seed(seed, name))
