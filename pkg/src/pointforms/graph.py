"""Dense pairwise distances and k-nearest-neighbor queries.

Distances are computed densely (O(m^2 D)); clouds here are desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPointsError

# above this many scalars the direct (m, m, D) difference tensor is replaced
# by the quadratic-expansion form to bound memory
_DIFF_TENSOR_BUDGET = 3 * 10**7


@dataclass(frozen=True)
class NeighborGraph:
    """k nearest neighbors per point, self excluded, ties to lower index."""

    indices: np.ndarray  # (m, k) int
    sq_dists: np.ndarray  # (m, k) float64, nondecreasing along rows
    k: int


def pairwise_sq_dist(points: np.ndarray) -> np.ndarray:
    """Symmetric (m, m) matrix of squared Euclidean distances, zero diagonal."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"points must be (m, D), got shape {pts.shape}")
    m, D = pts.shape
    if m * m * D <= _DIFF_TENSOR_BUDGET:
        diff = pts[:, None, :] - pts[None, :, :]
        sq = np.einsum("ijd,ijd->ij", diff, diff)
    else:
        norms = np.einsum("id,id->i", pts, pts)
        sq = norms[:, None] + norms[None, :] - 2.0 * (pts @ pts.T)
        sq = 0.5 * (sq + sq.T)
        np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    return sq


def knn(points: np.ndarray, k: int) -> NeighborGraph:
    """k nearest neighbors per point by squared distance.

    Equidistant candidates are ordered by point index, so results do not
    depend on any prior shuffling of equal distances.
    """
    pts = np.asarray(points, dtype=np.float64)
    m = pts.shape[0]
    if not 1 <= k <= m - 1:
        raise InsufficientPointsError(f"k must satisfy 1 <= k <= m-1, got k={k}, m={m}")
    sq = pairwise_sq_dist(pts)
    np.fill_diagonal(sq, np.inf)
    # stable sort on distance keeps equal distances in index order
    order = np.argsort(sq, axis=1, kind="stable")[:, :k]
    rows = np.arange(m)[:, None]
    return NeighborGraph(indices=order, sq_dists=sq[rows, order], k=k)
