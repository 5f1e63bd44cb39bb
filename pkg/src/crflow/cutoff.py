"""Quintic C^2 cutoff used for the regularization collar and bump profiles."""

from __future__ import annotations

import numpy as np

# Certified pointwise bound for |eta'| + |eta''| of cutoff_eta.  The true
# dense-sampled maximum of the quintic smoothstep is ~6.689; 7 is the
# constant quoted to callers.
ETA_C1 = 7.0


def smoothstep_quintic(y):
    """S(y) = 6y^5 - 15y^4 + 10y^3 clamped to [0, 1]; C^2 at both ends."""
    y = np.clip(y, 0.0, 1.0)
    return y * y * y * (y * (6.0 * y - 15.0) + 10.0)


def cutoff_eta(sval):
    """C^2 plateau cutoff: 1 for s <= 1, 0 for s >= 2, quintic in between.

    Accepts scalars or arrays.  The first two derivatives are bounded by
    ETA_C1 pointwise.
    """
    sval = np.asarray(sval, dtype=float)
    out = 1.0 - smoothstep_quintic(sval - 1.0)
    if out.ndim == 0:
        return float(out)
    return out
