"""Benjamini-Hochberg and Benjamini-Hochberg-Yekutieli q-values.

q-values are the step-up-adjusted p-values: rejecting every test with
q <= alpha reproduces the classical step-up rejection set at level
alpha.  The BHY variant multiplies by the harmonic number c(m) to stay
valid under arbitrary dependence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPValue


@dataclass(frozen=True)
class QValues:
    p_values: np.ndarray
    q_values: np.ndarray
    method: str

    def reject_fraction(self, alpha: float) -> float:
        return float(np.mean(self.q_values <= alpha))


def adjust(p, method: str = "BH") -> QValues:
    """Adjust a vector of p-values for the false discovery rate.

    BH:  q_(i) = min_{j >= i} ( m * p_(j) / j ), clipped to 1.
    BHY: identical with m replaced by m * sum_{k<=m} 1/k.
    """
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0:
        return QValues(p, p.copy(), method)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidPValue("p-values must lie in [0, 1]")
    if method not in ("BH", "BHY"):
        raise ValueError(f"unknown method {method!r}")
    m = p.size
    mult = float(m)
    if method == "BHY":
        mult *= np.sum(1.0 / np.arange(1, m + 1))
    order = np.argsort(p, kind="stable")
    ranked = p[order] * mult / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q_sorted = np.minimum(q_sorted, 1.0)
    q = np.empty(m)
    q[order] = q_sorted
    return QValues(p, q, method)
