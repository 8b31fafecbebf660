"""
Quadrature on the Euclidean unit sphere S^{n-1}.

n = 2 uses the trapezoid rule on the angle, which is spectrally accurate for
smooth periodic integrands. For n >= 3 the sphere is written as
u = (t, sqrt(1 - t^2) v) with v on S^{n-2}; the t-integral carries the weight
(1 - t^2)^{(n-3)/2} and is done by Gauss-Gegenbauer (Gauss-Legendre when
n = 3) and the v-integral recursively.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma, roots_gegenbauer, roots_legendre

from .errors import DomainError


def sphere_area(n: int) -> float:
    """Vol(S^{n-1}) = 2 pi^{n/2} / Gamma(n/2)."""
    return float(2.0 * np.pi ** (n / 2) / gamma(n / 2))


@dataclass(frozen=True)
class SphereQuadrature:
    nodes: np.ndarray
    weights: np.ndarray
    dim: int
    resolution: int

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        """Sum w_k values_k with pairwise (numpy) summation."""
        return float(np.sum(self.weights * np.asarray(values, dtype=float)))

    def halved(self) -> "SphereQuadrature":
        """The same rule at half resolution; used for error estimates."""
        return sphere_quadrature(self.dim, max(self.resolution // 2, 4))


def _circle(resolution: int):
    theta = 2.0 * np.pi * np.arange(resolution) / resolution
    nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return nodes, np.full(resolution, 2.0 * np.pi / resolution)


@lru_cache(maxsize=32)
def _rule(dim: int, resolution: int):
    if dim == 2:
        return _circle(resolution)
    m = max(resolution // 2, 2)
    if dim == 3:
        t, wt = roots_legendre(m)
    else:
        t, wt = roots_gegenbauer(m, (dim - 2) / 2)
    sub_nodes, sub_weights = _rule(dim - 1, resolution)
    radius = np.sqrt(1.0 - t ** 2)
    nodes = np.concatenate(
        [np.column_stack([np.full(len(sub_weights), ti), ri * sub_nodes]) for ti, ri in zip(t, radius)]
    )
    weights = np.concatenate([wi * sub_weights for wi in wt])
    return nodes, weights


def sphere_quadrature(n: int, resolution: int = 64) -> SphereQuadrature:
    """
    Nodes and weights on S^{n-1}.

    `resolution` is the number of angular nodes on each great circle; for
    n >= 3 each polar direction gets resolution // 2 Gauss nodes.
    """
    if n < 2:
        raise DomainError(f"sphere quadrature needs n >= 2, got {n}")
    if resolution < 4:
        raise DomainError("resolution must be at least 4")
    nodes, weights = _rule(n, resolution)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(nodes=nodes, weights=weights, dim=n, resolution=resolution)
