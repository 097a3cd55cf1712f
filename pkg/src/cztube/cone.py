"""Polytopic inner approximation of the compact quadratic cone.

The compact quadratic cone is {(z, t) : ||z||_2 <= t, 0 <= t <= t_max}.
Its inner approximation is the convex hull of the origin and k points
spread on the radius-t_max sphere of the top face, which is exact along
any direction touching a vertex and conservative (inner) everywhere
else -- the safe direction for control-set construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .czset import ConstrainedZonotope


@dataclass(frozen=True)
class CompactQuadraticCone:
    """{(z, t) in R^dim : ||z||_2 <= t, 0 <= t <= t_max}."""

    dim: int
    t_max: float

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("cone dimension must be >= 2")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")

    def support(self, eta) -> float:
        """Closed-form support: max over t in [0, t_max] of t(||eta_z|| + eta_t)."""
        eta = np.asarray(eta, dtype=float).ravel()
        if eta.size != self.dim:
            raise ValueError("direction dimension mismatch")
        return self.t_max * max(0.0, float(np.linalg.norm(eta[:-1]) + eta[-1]))


def spread_points(ball_dim: int, k: int) -> np.ndarray:
    """k quasi-uniform unit vectors in dimension ball_dim (rows).

    Dimensions 1 and 2 use the closed-form layouts; dimension 3 uses a
    deterministic Fibonacci lattice.  Higher dimensions are not needed
    by the shipped models.
    """
    if ball_dim < 1 or k < 1:
        raise ValueError("ball_dim and k must be positive")
    if ball_dim == 1:
        pts = np.array([[1.0], [-1.0]])[:k]
    elif ball_dim == 2:
        ang = 2.0 * np.pi * np.arange(k) / k
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
    elif ball_dim == 3:
        golden = (1.0 + np.sqrt(5.0)) / 2.0
        j = np.arange(k, dtype=float)
        # pole-inclusive latitudes: the axis vertex matters downstream
        # (vertical-thrust points are hull members only if a lattice
        # point sits exactly on the pole)
        zc = 1.0 - 2.0 * j / (k - 1) if k > 1 else np.zeros(1) + 1.0
        rho = np.sqrt(np.maximum(0.0, 1.0 - zc * zc))
        phi = 2.0 * np.pi * j / golden
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), zc])
    else:
        raise ValueError("point spreading implemented for dimensions 1-3 only")
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    return pts / norms


def cqc_inner_approx(cone: CompactQuadraticCone, k: int):
    """Vertices and CZ of the hull of the lifted sphere points and origin.

    Every non-origin vertex lies on the rim ||z||_2 = t = t_max, so the
    hull is contained in the cone exactly.
    """
    if k < cone.dim:
        raise ValueError("need at least dim points for a full-dimensional hull")
    ring = cone.t_max * spread_points(cone.dim - 1, k)
    top = np.column_stack([ring, np.full(len(ring), cone.t_max)])
    vertices = np.vstack([top, np.zeros(cone.dim)])
    return vertices, ConstrainedZonotope.from_vertices(vertices)
