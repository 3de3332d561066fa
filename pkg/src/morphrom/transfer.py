"""Evaluate nodal fields of one mesh at arbitrary points via shape functions.

A displacement field discretized on a mesh is a continuous function; this
module locates query points in the mesh (natural-coordinate inversion of the
quadratic isoparametric map) and evaluates the field there, which is what
re-represents a reduced basis on a morphed reference mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import tri6
from .mesh import Mesh

_XI_TOL = 1e-8          # natural-coordinate containment tolerance
_NEWTON_TOL = 1e-12     # physical-space residual [m]
_NEWTON_MAXIT = 25


class LocateError(RuntimeError):
    """Point not contained in any element (beyond tolerance)."""

    def __init__(self, message, element=None, distance=None, xi=None):
        super().__init__(message)
        self.element = element
        self.distance = distance
        self.xi = xi


@dataclass
class NaturalCoords:
    """Element index plus reference-triangle coordinates of a located point."""

    element: int
    xi: np.ndarray

    def inside(self, tol=_XI_TOL):
        x, z = self.xi
        return x >= -tol and z >= -tol and x + z <= 1 + tol


class ElementLocator:
    """Uniform-grid spatial index over element bounding boxes."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        coords = mesh.nodes[mesh.elements]
        self.lo = coords.min(axis=(0, 1))
        hi = coords.max(axis=(0, 1))
        span = np.maximum(hi - self.lo, 1e-12)
        n_cells = max(1, int(np.sqrt(mesh.n_elements)))
        self.shape = (n_cells, n_cells)
        self.cell = span / n_cells
        emin = coords.min(axis=1)
        emax = coords.max(axis=1)
        self.grid = {}
        i0 = self._cell_index(emin)
        i1 = self._cell_index(emax)
        for e in range(mesh.n_elements):
            for ix in range(i0[e, 0], i1[e, 0] + 1):
                for iz in range(i0[e, 1], i1[e, 1] + 1):
                    self.grid.setdefault((ix, iz), []).append(e)

    def _cell_index(self, pts):
        idx = np.floor((np.atleast_2d(pts) - self.lo) / self.cell).astype(int)
        return np.clip(idx, 0, np.array(self.shape) - 1)

    def candidates(self, point):
        ix, iz = self._cell_index(point)[0]
        seen = []
        for dx in (0, -1, 1):
            for dz in (0, -1, 1):
                seen.extend(self.grid.get((ix + dx, iz + dz), ()))
        return np.unique(seen)


def _corner_barycentric(mesh, elems, point):
    """xi from the corner triangles of `elems` (affine initialization)."""
    p = mesh.nodes[mesh.elements[elems, :3]]
    v0 = p[:, 1] - p[:, 0]
    v1 = p[:, 2] - p[:, 0]
    rhs = point - p[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    det = np.where(det == 0, np.nan, det)
    xi = (rhs[:, 0] * v1[:, 1] - rhs[:, 1] * v1[:, 0]) / det
    eta = (v0[:, 0] * rhs[:, 1] - v0[:, 1] * rhs[:, 0]) / det
    return np.column_stack([xi, eta])


def _newton(coords, point, xi0):
    """Invert the quadratic map for one element; returns (xi, residual, ok)."""
    xi = xi0.copy()
    for _ in range(_NEWTON_MAXIT):
        N = tri6.shape_functions(xi)
        x = N @ coords
        r = point - x
        if np.dot(r, r) <= _NEWTON_TOL ** 2:
            return xi, np.sqrt(np.dot(r, r)), True
        G = tri6.shape_gradients(xi)
        J = coords.T @ G
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if det == 0 or not np.isfinite(det):
            return xi, np.sqrt(np.dot(r, r)), False
        dxi = np.array(
            [J[1, 1] * r[0] - J[0, 1] * r[1], -J[1, 0] * r[0] + J[0, 0] * r[1]]
        ) / det
        if not np.all(np.isfinite(dxi)) or np.max(np.abs(dxi)) > 10.0:
            return xi, np.sqrt(np.dot(r, r)), False
        xi = xi + dxi
    N = tri6.shape_functions(xi)
    r = point - N @ coords
    res = np.sqrt(np.dot(r, r))
    return xi, res, res <= _NEWTON_TOL


def _clamp_xi(xi):
    """Project onto the closed reference triangle."""
    x = max(float(xi[0]), 0.0)
    z = max(float(xi[1]), 0.0)
    s = x + z
    if s > 1.0:
        x, z = x / s, z / s
    return np.array([x, z])


def locate_point(mesh: Mesh, point, locator: ElementLocator | None = None) -> NaturalCoords:
    """Find the element containing `point` and its natural coordinates.

    Closed-form corner-triangle barycentrics initialize a Newton iteration on
    the quadratic map.  Raises LocateError (carrying the nearest element, its
    clamped coordinates and the distance) when the point lies outside all
    candidate elements.
    """
    point = np.asarray(point, dtype=float)
    if locator is None:
        locator = ElementLocator(mesh)
    cand = locator.candidates(point)
    if cand.size == 0:
        cand = np.arange(mesh.n_elements)
    bary = _corner_barycentric(mesh, cand, point)
    slack = np.maximum.reduce(
        [-bary[:, 0], -bary[:, 1], bary.sum(axis=1) - 1.0, np.zeros(len(cand))]
    )
    slack = np.where(np.isfinite(slack), slack, np.inf)
    order = np.argsort(slack)

    best = None
    for j in order:
        if not np.isfinite(slack[j]) or slack[j] > 0.5:
            break
        e = int(cand[j])
        coords = mesh.nodes[mesh.elements[e]]
        xi, res, ok = _newton(coords, point, _clamp_xi(bary[j]))
        nc = NaturalCoords(e, xi)
        if ok and nc.inside():
            return nc
        xi_c = _clamp_xi(xi)
        dist = np.linalg.norm(tri6.shape_functions(xi_c) @ coords - point)
        if best is None or dist < best[1]:
            best = (e, dist, xi_c)
    if best is None:
        # Fall back to the nearest candidate corner triangle.
        e = int(cand[order[0]]) if len(cand) else 0
        coords = mesh.nodes[mesh.elements[e]]
        xi_c = _clamp_xi(bary[order[0]] if len(cand) else np.array([1 / 3, 1 / 3]))
        dist = np.linalg.norm(tri6.shape_functions(xi_c) @ coords - point)
        best = (e, dist, xi_c)
    raise LocateError(
        f"point {point.tolist()} outside mesh (nearest element {best[0]}, "
        f"distance {best[1]:.3e} m)",
        element=best[0],
        distance=best[1],
        xi=best[2],
    )


def build_transfer_matrix(
    sampled: Mesh, points, clamp_distance: float = 1e-4
) -> sp.csr_matrix:
    """Sparse operator evaluating nodal DOF fields of `sampled` at `points`.

    Shape (2*len(points), 2*n_sampled_nodes), interleaved (x, z) DOFs.  Points
    marginally outside the mesh (within clamp_distance, e.g. from curved-
    boundary morphing inexactness) are evaluated at clamped coordinates of
    the nearest element; points farther out abort with the offending list.
    """
    points = np.asarray(points, dtype=float)
    locator = ElementLocator(sampled)
    rows, cols, vals = [], [], []
    failures = []
    clamped = 0
    for i, pt in enumerate(points):
        try:
            nc = locate_point(sampled, pt, locator)
        except LocateError as e:
            if e.distance is not None and e.distance <= clamp_distance:
                nc = NaturalCoords(e.element, e.xi)
                clamped += 1
            else:
                failures.append((i, e.distance))
                continue
        N = tri6.shape_functions(nc.xi)
        enodes = sampled.elements[nc.element]
        for comp in (0, 1):
            rows.extend([2 * i + comp] * 6)
            cols.extend(2 * enodes + comp)
            vals.extend(N)
    if failures:
        ids = [f[0] for f in failures[:10]]
        raise LocateError(
            f"{len(failures)} point(s) could not be located in the sampled mesh "
            f"(first indices {ids})"
        )
    P = sp.csr_matrix(
        (vals, (rows, cols)), shape=(2 * len(points), 2 * sampled.n_nodes)
    )
    P.clamped_points = clamped
    return P


def interpolate_basis(V_full: np.ndarray, sampled: Mesh, points) -> np.ndarray:
    """Evaluate each column of a full nodal basis at `points`.

    V_full has 2*n_sampled_nodes rows; the result has 2*len(points) rows and
    is generally not orthonormal (callers re-orthonormalize as needed).
    """
    P = build_transfer_matrix(sampled, points)
    return P @ V_full
