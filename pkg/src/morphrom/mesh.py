"""Triangular mesh data model, generators, quality metrics and JSON I/O.

Meshes use 6-node triangles: corner nodes 0-2 in counterclockwise order,
midside nodes 3-5 with node i+3 on the edge between corners i and (i+1) % 3.
Named node groups tag the characteristic features of the geometry (outer
edges, hole boundary) that exist for every parameter configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

BEAM = "beam"
CIRCULAR_HOLE = "circular_hole"
ELLIPTIC_HOLE = "elliptic_hole"

BEAM_HEIGHT = 0.1
PLATE_SIDE = 1.0
HOLE_CENTER = np.array([0.5, 0.5])

PARAM_BOUNDS = {
    BEAM: [(0.8, 1.2)],
    CIRCULAR_HOLE: [(0.2, 0.6)],
    ELLIPTIC_HOLE: [(0.2, 0.4), (0.2, 0.4)],
}


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class MeshGenerationError(RuntimeError):
    """Raised when the unstructured generator fails to converge."""


@dataclass(frozen=True)
class GeometryParams:
    """A point in the geometric parameter domain of one of the test cases."""

    case: str
    p: tuple

    def __post_init__(self):
        if self.case not in PARAM_BOUNDS:
            raise ValueError(f"unknown geometry case {self.case!r}")
        bounds = PARAM_BOUNDS[self.case]
        p = tuple(float(v) for v in self.p)
        if len(p) != len(bounds):
            raise ValueError(
                f"case {self.case!r} takes {len(bounds)} parameter(s), got {len(p)}"
            )
        for v, (lo, hi) in zip(p, bounds):
            if not (lo - 1e-12 <= v <= hi + 1e-12):
                raise ValueError(f"parameter {v} outside [{lo}, {hi}] for {self.case!r}")
        object.__setattr__(self, "p", p)

    @property
    def hole_axes(self):
        """Half axes (a, b) of the hole, for the hole cases."""
        if self.case == CIRCULAR_HOLE:
            return self.p[0] / 2.0, self.p[0] / 2.0
        if self.case == ELLIPTIC_HOLE:
            return self.p[0] / 2.0, self.p[1] / 2.0
        raise ValueError("beam geometry has no hole")


@dataclass
class Mesh:
    """Immutable 6-node triangle mesh with named characteristic node groups."""

    nodes: np.ndarray            # (n, 2) coordinates in meters
    elements: np.ndarray         # (m, 6) node indices
    groups: dict                 # name -> ordered list of node indices
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.nodes.setflags(write=False)
        self.elements.setflags(write=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_dofs(self):
        """Total displacement DOFs (2 per node, before any constraints)."""
        return 2 * self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def corner_areas(self):
        """Signed areas of the corner triangles (positive = counterclockwise)."""
        p = self.nodes[self.elements[:, :3]]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def mesh_id(self):
        """Stable content hash tying reduced bases to their discretization."""
        h = hashlib.sha1()
        h.update(self.nodes.tobytes())
        h.update(self.elements.tobytes())
        return h.hexdigest()[:16]

    def with_nodes(self, nodes):
        """Copy of this mesh with replaced node coordinates (same topology)."""
        return Mesh(np.array(nodes, dtype=float), self.elements.copy(),
                    {k: list(v) for k, v in self.groups.items()}, dict(self.meta))


@dataclass
class ElementQuality:
    """Per-element circumradius, inradius, their ratio, and signed area."""

    circumradius: np.ndarray
    inradius: np.ndarray
    ratio: np.ndarray
    area: np.ndarray
    degenerate: np.ndarray


def element_quality(mesh_or_nodes, elements=None):
    """Triangle quality from corner edge lengths.

    Accepts a Mesh, or a node array plus (m, >=3) connectivity.  Degenerate
    (zero-area) triangles are flagged rather than raising.
    """
    if elements is None:
        nodes, elements = mesh_or_nodes.nodes, mesh_or_nodes.elements
    else:
        nodes = np.asarray(mesh_or_nodes, dtype=float)
    tri = np.asarray(elements)[:, :3]
    p = nodes[tri]
    lij = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    ljk = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    lik = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    area = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    prod = (lij + ljk + lik) * (lij + ljk - lik) * (lij - ljk + lik) * (-lij + ljk + lik)
    degenerate = prod <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(degenerate, np.inf, lij * ljk * lik / np.sqrt(np.maximum(prod, 0.0)))
        a = 0.5 * (lij + ljk + lik)
        rin_sq = a * (a - lij) * (a - ljk) * (a - lik)
        rin = np.where(degenerate, 0.0, np.sqrt(np.maximum(rin_sq, 0.0)) / a)
        ratio = np.where(degenerate, np.inf, R / np.where(rin > 0, rin, 1.0))
    return ElementQuality(R, rin, ratio, area, degenerate)


# ---------------------------------------------------------------------------
# Quadratic enrichment


def _edge_key(i, j):
    return (i, j) if i < j else (j, i)


def add_midside_nodes(nodes, triangles):
    """Insert a midside node on every unique edge of a 3-node triangulation.

    Returns (nodes, elements6, edge_to_mid) where elements6 follows the
    corner/midside ordering convention of Mesh.
    """
    nodes = list(map(tuple, np.asarray(nodes, dtype=float)))
    edge_to_mid = {}
    elements6 = []
    for tri in triangles:
        i0, i1, i2 = (int(v) for v in tri[:3])
        mids = []
        for a, b in ((i0, i1), (i1, i2), (i2, i0)):
            key = _edge_key(a, b)
            m = edge_to_mid.get(key)
            if m is None:
                xm = 0.5 * (np.array(nodes[a]) + np.array(nodes[b]))
                m = len(nodes)
                nodes.append((xm[0], xm[1]))
                edge_to_mid[key] = m
            mids.append(m)
        elements6.append([i0, i1, i2, mids[0], mids[1], mids[2]])
    return np.array(nodes), np.array(elements6, dtype=np.int64), edge_to_mid


# ---------------------------------------------------------------------------
# Structured beam generator


def generate_structured_beam(params: GeometryParams, h: float) -> Mesh:
    """Regular right-triangle mesh of an l x 0.1 m rectangle, quadratically enriched.

    Groups: Gc1 left edge, Gc2 bottom, Gc3 top, Gc4 right edge (corner and
    midside nodes, ordered along the edge).
    """
    if params.case != BEAM:
        raise ValueError("generate_structured_beam requires the beam case")
    if h <= 0:
        raise ValueError("element size h must be positive")
    length = params.p[0]
    if length <= 0:
        raise ValueError("degenerate beam length")
    nx = max(1, round(length / h))
    nz = max(1, round(BEAM_HEIGHT / h))
    xs = np.linspace(0.0, length, nx + 1)
    zs = np.linspace(0.0, BEAM_HEIGHT, nz + 1)
    corners = np.array([(x, z) for x in xs for z in zs])

    def nid(i, j):
        return i * (nz + 1) + j

    triangles = []
    for i in range(nx):
        for j in range(nz):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    nodes, elements, _ = add_midside_nodes(corners, triangles)

    tol = 1e-12
    groups = {
        "Gc1": _nodes_on_line(nodes, axis=0, value=0.0, sort_axis=1, tol=tol),
        "Gc2": _nodes_on_line(nodes, axis=1, value=0.0, sort_axis=0, tol=tol),
        "Gc3": _nodes_on_line(nodes, axis=1, value=BEAM_HEIGHT, sort_axis=0, tol=tol),
        "Gc4": _nodes_on_line(nodes, axis=0, value=length, sort_axis=1, tol=tol),
    }
    meta = {"case": params.case, "p": list(params.p), "h": h}
    return Mesh(nodes, elements, groups, meta)


def _nodes_on_line(nodes, axis, value, sort_axis, tol):
    idx = np.flatnonzero(np.abs(nodes[:, axis] - value) <= tol)
    return [int(i) for i in idx[np.argsort(nodes[idx, sort_axis])]]


# ---------------------------------------------------------------------------
# Unstructured generator (signed-distance force relaxation)


def _hole_implicit(params, x, z):
    """Positive outside the hole boundary curve, negative inside."""
    a, b = params.hole_axes
    xc, zc = HOLE_CENTER
    return np.sqrt(((x - xc) / a) ** 2 + ((z - zc) / b) ** 2) - 1.0


def _hole_pseudo_distance(params, pts):
    """First-order signed distance to the hole boundary (implicit / |grad|)."""
    a, b = params.hole_axes
    xc, zc = HOLE_CENTER
    x, z = pts[:, 0], pts[:, 1]
    u = (x - xc) / a
    v = (z - zc) / b
    rho = np.sqrt(u ** 2 + v ** 2)
    f = rho - 1.0
    grad = np.sqrt((u / a) ** 2 + (v / b) ** 2) / np.maximum(rho, 1e-12)
    return f / np.maximum(grad, 1e-12)


def _signed_distance(params, pts):
    """Signed distance to the plate-minus-hole domain (negative inside)."""
    x, z = pts[:, 0], pts[:, 1]
    d_rect = -np.minimum(
        np.minimum(x, PLATE_SIDE - x), np.minimum(z, PLATE_SIDE - z)
    )
    return np.maximum(d_rect, -_hole_pseudo_distance(params, pts))


def _size_function(params, pts):
    """Relative element size: fine at the hole boundary, coarser away from it."""
    x, z = pts[:, 0], pts[:, 1]
    xc, zc = HOLE_CENTER
    if params.case == CIRCULAR_HOLE:
        d = params.p[0]
        rel = 0.05 + 0.3 * (np.sqrt((x - xc) ** 2 + (z - zc) ** 2) - d / 2.0)
    else:
        dx, dz = params.p
        rel = 0.5 * np.sqrt(
            ((x - xc) / (0.5 * dx)) ** 2 + ((z - zc) / (0.5 * dz)) ** 2
        )
    return np.maximum(rel, 1e-3)


def _project_to_hole(params, pts):
    """Exact closest-point projection onto the hole circle/ellipse."""
    a, b = params.hole_axes
    c = HOLE_CENTER
    q = pts - c
    if abs(a - b) < 1e-15:
        rad = np.linalg.norm(q, axis=1, keepdims=True)
        return c + a * q / np.maximum(rad, 1e-300)
    # Newton on the stationarity condition for the closest ellipse point,
    # parametrized by angle t.
    t = np.arctan2(q[:, 1] * a, q[:, 0] * b)
    for _ in range(60):
        ct, st = np.cos(t), np.sin(t)
        ex, ez = a * ct, b * st
        # derivative of 0.5*|e(t) - q|^2
        g = (ex - q[:, 0]) * (-a * st) + (ez - q[:, 1]) * (b * ct)
        gp = (
            (ex - q[:, 0]) * (-a * ct)
            + (ez - q[:, 1]) * (-b * st)
            + a * a * st * st
            + b * b * ct * ct
        )
        step = g / np.maximum(np.abs(gp), 1e-300) * np.sign(gp)
        t = t - np.clip(step, -0.5, 0.5)
        if np.max(np.abs(step)) < 1e-15:
            break
    return c + np.column_stack([a * np.cos(t), b * np.sin(t)])


_DPTOL = 0.001
_TTOL = 0.1
_FSCALE = 1.2
_DELTAT = 0.2
# Initial-spacing factor calibrated so the circular case reproduces the
# published full-order model sizes at h0 = 0.02.
_DENSITY = 0.98


def generate_unstructured_hole(params: GeometryParams, h0: float, seed: int) -> Mesh:
    """Triangulate the unit plate minus a circular/elliptic hole.

    Force-equilibrium relaxation on a signed-distance geometry with the
    case-specific relative size function; deterministic for a fixed seed.
    Midside nodes are added afterwards, with hole-boundary midsides projected
    onto the exact circle/ellipse.  Groups: Gc1 bottom, Gc2 right, Gc3 top,
    Gc4 left, Gc5 hole boundary ordered by polar angle.
    """
    if params.case not in (CIRCULAR_HOLE, ELLIPTIC_HOLE):
        raise ValueError("generate_unstructured_hole requires a hole case")
    if h0 <= 0:
        raise ValueError("element size h0 must be positive")
    a, b = params.hole_axes
    if not (a < 0.5 * PLATE_SIDE and b < 0.5 * PLATE_SIDE):
        raise ValueError("hole must lie strictly inside the plate")

    rng = np.random.default_rng(seed)
    spacing = h0 / _DENSITY
    geps = 0.001 * h0
    deps = np.sqrt(np.finfo(float).eps) * h0

    # Hexagonal seed grid, thinned with probability (min fh / fh)^2.
    xs = np.arange(0.0, PLATE_SIDE + spacing, spacing)
    zs = np.arange(0.0, PLATE_SIDE + spacing * np.sqrt(3) / 2, spacing * np.sqrt(3) / 2)
    X, Z = np.meshgrid(xs, zs)
    X[1::2] += spacing / 2.0
    pts = np.column_stack([X.ravel(), Z.ravel()])
    pts = pts[_signed_distance(params, pts) < geps]
    fh0 = _size_function(params, pts)
    keep = rng.random(len(pts)) < (fh0.min() / fh0) ** 2
    pts = pts[keep]

    fixed = np.array(
        [[0.0, 0.0], [PLATE_SIDE, 0.0], [PLATE_SIDE, PLATE_SIDE], [0.0, PLATE_SIDE]]
    )
    # Drop seeds that collide with the fixed corners.
    dist_to_fixed = np.min(
        np.linalg.norm(pts[:, None, :] - fixed[None, :, :], axis=2), axis=1
    )
    pts = np.vstack([fixed, pts[dist_to_fixed > spacing / 2]])
    n_fixed = len(fixed)

    max_iter = 600
    pold = np.full_like(pts, np.inf)
    tris = None
    last_move = np.inf
    for it in range(max_iter):
        if np.max(np.linalg.norm(pts - pold, axis=1)) > _TTOL * spacing:
            pold = pts.copy()
            tris = Delaunay(pts).simplices
            cent = pts[tris].mean(axis=1)
            tris = tris[_signed_distance(params, cent) < -geps]
            bars = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
            bars = np.unique(np.sort(bars, axis=1), axis=0)

        vec = pts[bars[:, 0]] - pts[bars[:, 1]]
        L = np.linalg.norm(vec, axis=1)
        mid = 0.5 * (pts[bars[:, 0]] + pts[bars[:, 1]])
        hbars = _size_function(params, mid)
        L0 = hbars * _FSCALE * np.sqrt(np.sum(L ** 2) / np.sum(hbars ** 2))
        F = np.maximum(L0 - L, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            Fvec = (F / np.maximum(L, 1e-300))[:, None] * vec
        move = np.zeros_like(pts)
        np.add.at(move, bars[:, 0], Fvec)
        np.add.at(move, bars[:, 1], -Fvec)
        move[:n_fixed] = 0.0
        pts = pts + _DELTAT * move

        # Pull escaped points back onto the boundary via numerical gradients.
        d = _signed_distance(params, pts)
        out = d > 0
        if np.any(out):
            po = pts[out]
            dgx = (_signed_distance(params, po + [deps, 0]) - d[out]) / deps
            dgz = (_signed_distance(params, po + [0, deps]) - d[out]) / deps
            g2 = dgx ** 2 + dgz ** 2
            pts[out] -= np.column_stack([d[out] * dgx, d[out] * dgz]) / np.maximum(
                g2, 1e-300
            )[:, None]

        interior = d < -geps
        interior[:n_fixed] = False
        if np.any(interior):
            last_move = np.max(
                np.linalg.norm(_DELTAT * move[interior], axis=1)
            ) / spacing
            if last_move < _DPTOL * 10:
                break

    # Final conforming triangulation.
    tris = Delaunay(pts).simplices
    cent = pts[tris].mean(axis=1)
    tris = tris[_signed_distance(params, cent) < -geps]

    # Drop unused points and enforce counterclockwise corners.
    used = np.unique(tris)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    pts = pts[used]
    tris = remap[tris]
    q = element_quality(pts, tris)
    flip = q.area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    q = element_quality(pts, tris)
    if np.any(q.degenerate) or q.area.min() <= 0:
        raise MeshGenerationError(
            f"degenerate triangulation after {it + 1} iterations "
            f"(movement {last_move:.2e}, min area {q.area.min():.3e})"
        )

    pts, tris = _snap_boundary(params, pts, tris)
    nodes, elements, edge_to_mid = add_midside_nodes(pts, tris)
    nodes, groups = _hole_groups(params, nodes, tris, edge_to_mid)
    meta = {"case": params.case, "p": list(params.p), "h": h0, "seed": int(seed)}
    mesh = Mesh(nodes, elements, groups, meta)
    areas = mesh.corner_areas()
    if areas.min() <= 0:
        raise MeshGenerationError(
            f"inverted element after boundary snapping (min area {areas.min():.3e})"
        )
    return mesh


def _boundary_edges(tris):
    edges = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    keys = np.sort(edges, axis=1)
    _, idx, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    return keys[idx[counts == 1]]


def _snap_boundary(params, pts, tris):
    """Snap boundary nodes onto the exact outer edges / hole curve."""
    pts = pts.copy()
    bnodes = np.unique(_boundary_edges(tris))
    snap = 0.05 * _min_edge_length(pts, tris)
    for i in bnodes:
        x, z = pts[i]
        on_outer = False
        for axis, value in ((0, 0.0), (0, PLATE_SIDE), (1, 0.0), (1, PLATE_SIDE)):
            if abs(pts[i, axis] - value) < snap:
                pts[i, axis] = value
                on_outer = True
        if not on_outer:
            pts[i] = _project_to_hole(params, pts[i][None, :])[0]
    return pts, tris


def _min_edge_length(pts, tris):
    e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    return np.linalg.norm(pts[e[:, 0]] - pts[e[:, 1]], axis=1).min()


def _hole_groups(params, nodes, tris, edge_to_mid):
    """Outer-edge and hole-boundary groups, including midside nodes."""
    nodes = nodes.copy()
    bedges = _boundary_edges(tris)
    tol = 1e-9

    def on_line(i, axis, value):
        return abs(nodes[i, axis] - value) <= tol

    hole_nodes = set()
    outer = {"Gc1": set(), "Gc2": set(), "Gc3": set(), "Gc4": set()}
    lines = {
        "Gc1": (1, 0.0),
        "Gc2": (0, PLATE_SIDE),
        "Gc3": (1, PLATE_SIDE),
        "Gc4": (0, 0.0),
    }
    for a, b in bedges:
        mid = edge_to_mid[_edge_key(int(a), int(b))]
        edge_outer = False
        for name, (axis, value) in lines.items():
            if on_line(a, axis, value) and on_line(b, axis, value):
                outer[name].update((int(a), int(b), mid))
                edge_outer = True
        if not edge_outer:
            hole_nodes.update((int(a), int(b), mid))
            nodes[mid] = _project_to_hole(params, nodes[mid][None, :])[0]

    groups = {}
    for name, (axis, value) in lines.items():
        idx = np.array(sorted(outer[name]), dtype=np.int64)
        sort_axis = 1 - axis
        groups[name] = [int(i) for i in idx[np.argsort(nodes[idx, sort_axis])]]
    hole_idx = np.array(sorted(hole_nodes), dtype=np.int64)
    phi = np.mod(
        np.arctan2(nodes[hole_idx, 1] - HOLE_CENTER[1], nodes[hole_idx, 0] - HOLE_CENTER[0]),
        2 * np.pi,
    )
    groups["Gc5"] = [int(i) for i in hole_idx[np.argsort(phi)]]
    return nodes, groups


# ---------------------------------------------------------------------------
# JSON I/O


def write_mesh(mesh: Mesh, path):
    """Serialize a mesh to JSON (lossless node coordinates)."""
    doc = {
        "nodes": [[float(x), float(z)] for x, z in mesh.nodes],
        "elements": [[int(i) for i in el] for el in mesh.elements],
        "groups": {k: [int(i) for i in v] for k, v in mesh.groups.items()},
    }
    if mesh.meta:
        doc["meta"] = mesh.meta
    with open(path, "w") as f:
        json.dump(doc, f)


def read_mesh(path) -> Mesh:
    """Parse a mesh JSON document, validating structure field by field."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MeshFormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    for key in ("nodes", "elements", "groups"):
        if key not in doc:
            raise MeshFormatError(f'{path}: missing required key "{key}"')
    nodes = doc["nodes"]
    for i, nd in enumerate(nodes):
        if len(nd) != 2:
            raise MeshFormatError(f"{path}: node {i} must have 2 coordinates")
    elements = doc["elements"]
    for i, el in enumerate(elements):
        if len(el) != 6:
            raise MeshFormatError(f"{path}: element {i} must list 6 node indices")
        if any(not (0 <= int(v) < len(nodes)) for v in el):
            raise MeshFormatError(f"{path}: element {i} references an invalid node")
    groups = doc["groups"]
    for name, idx in groups.items():
        if any(not (0 <= int(v) < len(nodes)) for v in idx):
            raise MeshFormatError(f'{path}: group "{name}" references an invalid node')
    return Mesh(
        np.array(nodes, dtype=float),
        np.array(elements, dtype=np.int64),
        {k: [int(i) for i in v] for k, v in groups.items()},
        doc.get("meta", {}),
    )
