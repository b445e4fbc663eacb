"""Deterministic seed derivation for nested stochastic steps.

Mixed tuples (run seed, security index, stage label) hash to a stable
64-bit integer so fold assignments never depend on thread scheduling
or call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(repr(seed).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
