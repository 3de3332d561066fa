"""Quadratic (6-node) triangle shape functions and quadrature rules.

Reference triangle: xi = (xi1, xi2) with vertices (0,0), (1,0), (0,1).
Node order matches Mesh: corners 0-2, midside node i+3 between corners
i and (i+1) % 3.
"""

from __future__ import annotations

import numpy as np

# Reference coordinates of the 6 nodes.
REF_NODES = np.array(
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
)

# Degree-2 rule (3 points), exact for the stiffness integrand on straight
# elements; weights sum to the reference-triangle area 1/2.
GAUSS_3 = (
    np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
    np.array([1 / 6, 1 / 6, 1 / 6]),
)

# Degree-4 rule (6 points) for the consistent mass matrix.
_A1, _A2 = 0.445948490915965, 0.091576213509771
_W1, _W2 = 0.223381589678011 / 2, 0.109951743655322 / 2
GAUSS_6 = (
    np.array(
        [
            [_A1, _A1],
            [1 - 2 * _A1, _A1],
            [_A1, 1 - 2 * _A1],
            [_A2, _A2],
            [1 - 2 * _A2, _A2],
            [_A2, 1 - 2 * _A2],
        ]
    ),
    np.array([_W1, _W1, _W1, _W2, _W2, _W2]),
)


def shape_functions(xi):
    """Shape function values, shape (..., 6) for xi of shape (..., 2)."""
    xi = np.asarray(xi, dtype=float)
    l1 = 1.0 - xi[..., 0] - xi[..., 1]
    l2 = xi[..., 0]
    l3 = xi[..., 1]
    return np.stack(
        [
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            l3 * (2 * l3 - 1),
            4 * l1 * l2,
            4 * l2 * l3,
            4 * l3 * l1,
        ],
        axis=-1,
    )


def shape_gradients(xi):
    """Gradients dN/dxi, shape (..., 6, 2)."""
    xi = np.asarray(xi, dtype=float)
    l1 = 1.0 - xi[..., 0] - xi[..., 1]
    l2 = xi[..., 0]
    l3 = xi[..., 1]
    z = np.zeros_like(l1)
    d1 = 4 * l1 - 1
    d2 = 4 * l2 - 1
    d3 = 4 * l3 - 1
    g = np.stack(
        [
            np.stack([-d1, -d1], axis=-1),
            np.stack([d2, z], axis=-1),
            np.stack([z, d3], axis=-1),
            np.stack([4 * (l1 - l2), -4 * l2], axis=-1),
            np.stack([4 * l3, 4 * l2], axis=-1),
            np.stack([-4 * l3, 4 * (l1 - l3)], axis=-1),
        ],
        axis=-2,
    )
    return g


def map_points(coords, xi):
    """Isoparametric map: physical coordinates of xi in each element.

    coords: (m, 6, 2) element node coordinates; xi: (2,) or (m, 2).
    """
    N = shape_functions(xi)
    if N.ndim == 1:
        return np.einsum("j,mjc->mc", N, coords)
    return np.einsum("mj,mjc->mc", N, coords)


def jacobians(coords, xi):
    """Jacobians dx/dxi, shape (m, 2, 2)."""
    G = shape_gradients(xi)
    if G.ndim == 2:
        return np.einsum("mjc,jd->mcd", coords, G)
    return np.einsum("mjc,mjd->mcd", coords, G)
