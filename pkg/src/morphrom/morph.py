"""Mesh morphing onto a target geometry with overlapping characteristic features.

Two methods:

* spring analogy with elastic hardening: element edges become lineal springs
  (stiffness 1/l), nodes carry torsional springs scaled by the hardening
  coefficient 4*R/r - 1; prescribed displacements are imposed incrementally
  and the spring system is reassembled on each deformed configuration.
* polyharmonic radial basis functions: per displacement component, kernel
  weights plus a linear polynomial are fitted to the prescribed values of the
  characteristic nodes and evaluated at the remaining nodes.

Quadratic triangles are split into four corner-node sub-triangles for the
spring assembly and for inversion checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import (
    CIRCULAR_HOLE,
    ELLIPTIC_HOLE,
    BEAM,
    HOLE_CENTER,
    GeometryParams,
    Mesh,
    element_quality,
)

# Local node triplets splitting a 6-node triangle into 4 linear sub-triangles.
SUB_TRIANGLES = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


class MorphError(RuntimeError):
    """Raised when a morph is infeasible or produces inverted elements."""


@dataclass
class MorphSpec:
    """Per-component prescribed displacements of the characteristic nodes."""

    prescribed_x: dict          # node index -> target x-displacement
    prescribed_z: dict

    @classmethod
    def from_rules(cls, mesh: Mesh, rules) -> "MorphSpec":
        """Build a spec from JSON-style rules.

        Each rule holds a "group" name plus either "set" ({"x": v, "z": v},
        constant component displacements) or "scale_about"
        ({"center": [x, z], "sx": ..., "sz": ...}, mapping node positions to
        center + s * (position - center) per component).
        """
        px, pz = {}, {}
        for rule in rules:
            name = rule["group"]
            if name not in mesh.groups:
                raise MorphError(f"unknown group {name!r} in morph rule")
            idx = mesh.groups[name]
            if "set" in rule:
                for comp, target in rule["set"].items():
                    dest = px if comp == "x" else pz
                    for i in idx:
                        _put(dest, i, float(target))
            elif "scale_about" in rule:
                sa = rule["scale_about"]
                cx, cz = sa["center"]
                for i in idx:
                    if "sx" in sa:
                        _put(px, i, (sa["sx"] - 1.0) * (mesh.nodes[i, 0] - cx))
                    if "sz" in sa:
                        _put(pz, i, (sa["sz"] - 1.0) * (mesh.nodes[i, 1] - cz))
            else:
                raise MorphError(f"rule for group {name!r} has no action")
        return cls(px, pz)

    def target_displacements(self, mesh: Mesh):
        """(prescribed DOF indices, values) over the interleaved DOF vector."""
        dofs, vals = [], []
        for i, v in sorted(self.prescribed_x.items()):
            dofs.append(2 * i)
            vals.append(v)
        for i, v in sorted(self.prescribed_z.items()):
            dofs.append(2 * i + 1)
            vals.append(v)
        return np.array(dofs, dtype=np.int64), np.array(vals)


def _put(dest, i, value):
    old = dest.get(i)
    if old is not None and abs(old - value) > 1e-12:
        raise MorphError(f"conflicting prescribed displacements at node {i}")
    dest[i] = value


def build_morph_spec(mesh: Mesh, source: GeometryParams, target: GeometryParams) -> MorphSpec:
    """Prescribed displacements carrying `mesh` (at `source`) onto `target`.

    Beam: left edge pinned, top/bottom held vertically, right edge shifted by
    the length difference.  Holes: outer edges held on their lines, hole
    boundary scaled about the center so it lands exactly on the target
    circle/ellipse.
    """
    if source.case != target.case:
        raise MorphError("source and target geometry cases differ")
    if source.case == BEAM:
        dl = target.p[0] - source.p[0]
        rules = [
            {"group": "Gc1", "set": {"x": 0.0, "z": 0.0}},
            {"group": "Gc2", "set": {"z": 0.0}},
            {"group": "Gc3", "set": {"z": 0.0}},
            {"group": "Gc4", "set": {"x": dl}},
        ]
    else:
        ax_s, az_s = source.hole_axes
        ax_t, az_t = target.hole_axes
        rules = [
            {"group": "Gc1", "set": {"z": 0.0}},
            {"group": "Gc3", "set": {"z": 0.0}},
            {"group": "Gc2", "set": {"x": 0.0}},
            {"group": "Gc4", "set": {"x": 0.0}},
            {
                "group": "Gc5",
                "scale_about": {
                    "center": list(HOLE_CENTER),
                    "sx": ax_t / ax_s,
                    "sz": az_t / az_s,
                },
            },
        ]
    return MorphSpec.from_rules(mesh, rules)


@dataclass
class MorphField:
    """Displacement field morphing a mesh, with a quality report."""

    displacement: np.ndarray     # (n, 2)
    morphed_nodes: np.ndarray    # (n, 2)
    method: str
    quality: dict = field(default_factory=dict)

    def morphed_mesh(self, mesh: Mesh) -> Mesh:
        return mesh.with_nodes(self.morphed_nodes)


def _sub_triangle_nodes(mesh: Mesh):
    """(4m, 3) corner-node connectivity of the sub-element split."""
    return mesh.elements[:, SUB_TRIANGLES].reshape(-1, 3)


def _quality_report(mesh: Mesh, nodes, char_residual):
    subs = _sub_triangle_nodes(mesh)
    qs = element_quality(nodes, subs)
    qc = element_quality(nodes, mesh.elements)
    return {
        "min_corner_area": float(qc.area.min()),
        "min_sub_area": float(qs.area.min()),
        "max_radius_ratio": float(qc.ratio[np.isfinite(qc.ratio)].max()),
        "char_residual": float(char_residual),
    }


def _check_inversion(mesh, nodes, method, stage):
    subs = _sub_triangle_nodes(mesh)
    areas = element_quality(nodes, subs).area
    if areas.min() <= 0.0:
        worst = int(np.argmin(areas)) // 4
        raise MorphError(
            f"{method} morph inverted element {worst} {stage} "
            f"(min sub-triangle area {areas.min():.3e})"
        )


# ---------------------------------------------------------------------------
# Spring analogy with elastic hardening


def _spring_matrix(nodes, edges, subs):
    """Global spring stiffness: lineal springs per unique edge, torsional
    springs per sub-triangle corner scaled by the elastic hardening factor."""
    n = len(nodes)
    vec = nodes[edges[:, 1]] - nodes[edges[:, 0]]
    l = np.linalg.norm(vec, axis=1)
    if np.any(l <= 0):
        raise MorphError("coincident nodes on a spring edge")
    c = vec[:, 0] / l
    s = vec[:, 1] / l
    k = 1.0 / l
    # 4x4 lineal block for DOFs (xi, zi, xj, zj).
    cc, ss, cs = k * c * c, k * s * s, k * c * s
    Kl = np.empty((len(edges), 4, 4))
    Kl[:, 0, 0] = cc
    Kl[:, 0, 1] = cs
    Kl[:, 1, 0] = cs
    Kl[:, 1, 1] = ss
    Kl[:, :2, 2:] = -Kl[:, :2, :2]
    Kl[:, 2:, :2] = -Kl[:, :2, :2]
    Kl[:, 2:, 2:] = Kl[:, :2, :2]
    edofs = np.repeat(2 * edges, 2, axis=1)
    edofs[:, 1::2] += 1
    rows_l = np.repeat(edofs, 4, axis=1).ravel()
    cols_l = np.tile(edofs, (1, 4)).ravel()

    p = nodes[subs]                         # (t, 3, 2)
    x, y = p[..., 0], p[..., 1]
    d_ij = p[:, [1, 2, 0]] - p               # vertex i -> next vertex
    d_ik = p[:, [2, 0, 1]] - p               # vertex i -> previous vertex
    l_ij2 = np.einsum("tic,tic->ti", d_ij, d_ij)
    l_ik2 = np.einsum("tic,tic->ti", d_ik, d_ik)
    A = 0.5 * (
        (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
        - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    )
    if np.any(A <= 0):
        raise MorphError("non-positive sub-triangle area during spring assembly")
    Cdiag = l_ij2 * l_ik2 / (4.0 * A[:, None] ** 2)

    a_ij = d_ij[..., 0] / l_ij2              # (x_j - x_i) / l_ij^2, per vertex i
    b_ij = d_ij[..., 1] / l_ij2
    a_ik = d_ik[..., 0] / l_ik2
    b_ik = d_ik[..., 1] / l_ik2
    # Rows map the 6 translational DOFs (xi, zi, xj, zj, xk, zk) to the three
    # vertex rotations; built per vertex then placed into vertex-local columns.
    R = np.zeros((len(subs), 3, 6))
    for v in range(3):
        j = (v + 1) % 3
        kx = (v + 2) % 3
        R[:, v, 2 * v] = b_ik[:, v] - b_ij[:, v]
        R[:, v, 2 * v + 1] = a_ij[:, v] - a_ik[:, v]
        R[:, v, 2 * j] = b_ij[:, v]
        R[:, v, 2 * j + 1] = -a_ij[:, v]
        R[:, v, 2 * kx] = -b_ik[:, v]
        R[:, v, 2 * kx + 1] = a_ik[:, v]

    q = element_quality(nodes, subs)
    c_eh = 4.0 * q.ratio - 1.0
    Kt = np.einsum("tai,ta,taj->tij", R, Cdiag, R) * c_eh[:, None, None]

    sdofs = np.repeat(2 * subs, 2, axis=1)
    sdofs[:, 1::2] += 1
    rows_t = np.repeat(sdofs, 6, axis=1).ravel()
    cols_t = np.tile(sdofs, (1, 6)).ravel()

    rows = np.concatenate([rows_l, rows_t])
    cols = np.concatenate([cols_l, cols_t])
    data = np.concatenate([Kl.ravel(), Kt.ravel()])
    return sp.coo_matrix((data, (rows, cols)), shape=(2 * n, 2 * n)).tocsc()


def morph_saeh(mesh: Mesh, spec: MorphSpec, steps: int = 10) -> MorphField:
    """Spring-analogy morph, prescribed displacement imposed in equal steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dofs, totals = spec.target_displacements(mesh)
    subs = _sub_triangle_nodes(mesh)
    edges = np.unique(
        np.sort(
            np.vstack([subs[:, [0, 1]], subs[:, [1, 2]], subs[:, [2, 0]]]), axis=1
        ),
        axis=0,
    )
    ndof = mesh.n_dofs
    free = np.setdiff1d(np.arange(ndof), dofs)
    nodes = mesh.nodes.copy()
    for step in range(steps):
        K = _spring_matrix(nodes, edges, subs)
        u = np.zeros(ndof)
        u[dofs] = totals / steps
        try:
            u[free] = spla.splu(K[free][:, free]).solve(-K[free][:, dofs] @ u[dofs])
        except RuntimeError as e:
            raise MorphError(f"singular spring system at increment {step + 1}: {e}")
        nodes = nodes + u.reshape(-1, 2)
        _check_inversion(mesh, nodes, "spring-analogy", f"at increment {step + 1}")
    disp = nodes - mesh.nodes
    residual = np.max(np.abs(disp.reshape(-1)[dofs] - totals)) if len(dofs) else 0.0
    return MorphField(disp, nodes, "saeh", _quality_report(mesh, nodes, residual))


# ---------------------------------------------------------------------------
# Polyharmonic radial basis function morphing


def polyharmonic(r, m):
    """Polyharmonic kernel r^m (odd m) or r^m ln r (even m, 0 at r=0)."""
    r = np.asarray(r, dtype=float)
    if m % 2 == 1:
        return r ** m
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, r ** m * np.log(np.where(r > 0, r, 1.0)), 0.0)


def _fit_component(centers, values, m):
    N = len(centers)
    dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    A = polyharmonic(dist, m)
    B = np.column_stack([np.ones(N), centers])
    sys = np.zeros((N + 3, N + 3))
    sys[:N, :N] = A
    sys[:N, N:] = B
    sys[N:, :N] = B.T
    rhs = np.concatenate([values, np.zeros(3)])
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError:
        rank = np.linalg.matrix_rank(B)
        raise MorphError(
            f"singular interpolation system: polynomial block rank {rank}/3 "
            "(characteristic nodes collinear?)"
        )
    return sol[:N], sol[N:]


def _eval_component(centers, gamma, w, points, m):
    dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    return polyharmonic(dist, m) @ gamma + w[0] + points @ w[1:]


def morph_rbf(mesh: Mesh, spec: MorphSpec, m: int = 1) -> MorphField:
    """Radial basis function morph with a linear polynomial tail.

    Weights are fitted per displacement component on that component's
    prescribed nodes; the fitted interpolant is evaluated at all other nodes.
    """
    if m < 1:
        raise ValueError("kernel order m must be >= 1")
    disp = np.zeros_like(mesh.nodes)
    fits = {}
    for comp, prescribed in ((0, spec.prescribed_x), (1, spec.prescribed_z)):
        if len(prescribed) < 3:
            raise MorphError("need at least 3 prescribed nodes per component")
        idx = np.array(sorted(prescribed), dtype=np.int64)
        values = np.array([prescribed[int(i)] for i in idx])
        centers = mesh.nodes[idx]
        gamma, w = _fit_component(centers, values, m)
        others = np.setdiff1d(np.arange(mesh.n_nodes), idx)
        disp[idx, comp] = values
        disp[others, comp] = _eval_component(centers, gamma, w, mesh.nodes[others], m)
        fits[comp] = (idx, gamma, w)
    nodes = mesh.nodes + disp
    _check_inversion(mesh, nodes, "rbf", "")
    dofs, totals = spec.target_displacements(mesh)
    residual = np.max(np.abs(disp.reshape(-1)[dofs] - totals)) if len(dofs) else 0.0
    fld = MorphField(disp, nodes, "rbf", _quality_report(mesh, nodes, residual))
    fld.quality["kernel_order"] = m
    fld.quality["system_sizes"] = {
        comp: len(fits[comp][0]) + 3 for comp in fits
    }
    return fld


def rbf_interpolant(mesh: Mesh, spec: MorphSpec, m: int = 1):
    """Fitted per-component interpolants, for evaluation at arbitrary points.

    Returns a callable points -> (len(points), 2) displacements.
    """
    comps = []
    for prescribed in (spec.prescribed_x, spec.prescribed_z):
        idx = np.array(sorted(prescribed), dtype=np.int64)
        values = np.array([prescribed[int(i)] for i in idx])
        centers = mesh.nodes[idx]
        gamma, w = _fit_component(centers, values, m)
        comps.append((centers, gamma, w))

    def evaluate(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(points), 2))
        for comp, (centers, gamma, w) in enumerate(comps):
            out[:, comp] = _eval_component(centers, gamma, w, points, m)
        return out

    return evaluate
