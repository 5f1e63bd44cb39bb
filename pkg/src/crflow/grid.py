"""Uniform 1-D grid in the compactified radial coordinate rho_hat = arctanh(r)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RadialGrid:
    """Uniform nodes 0 = rho_hat_0 < ... < rho_hat_{N-1} = rho_hat_max.

    rho_hat is arctanh of the coordinate radius, i.e. hyperbolic distance up
    to a fixed factor, so a uniform grid here resolves the complete geometry
    uniformly.  Node arrays and derived coordinate quantities are cached on
    the instance and must be treated as read-only.
    """

    n_nodes: int
    rho_hat_max: float
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_nodes < 16:
            raise ValueError(f"n_nodes must be >= 16, got {self.n_nodes}")
        if not self.rho_hat_max > 0:
            raise ValueError(f"rho_hat_max must be > 0, got {self.rho_hat_max}")
        nodes = np.linspace(0.0, float(self.rho_hat_max), self.n_nodes)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def spacing(self) -> float:
        return float(self.rho_hat_max) / (self.n_nodes - 1)

    @property
    def r(self) -> np.ndarray:
        """Coordinate radius r = tanh(rho_hat) at the nodes."""
        return np.tanh(self.nodes)

    def half_nodes(self) -> np.ndarray:
        """Midpoints rho_hat_{i+1/2}, used by flux-form stencils."""
        return self.nodes[:-1] + 0.5 * self.spacing

    def window_mask(self, lo: float, hi: float) -> np.ndarray:
        """Boolean mask of nodes with lo <= rho_hat <= hi."""
        return (self.nodes >= lo) & (self.nodes <= hi)
