"""Plane-stress finite-element assembly and direct frequency-response solves.

Systems are second order in the Laplace variable s with Rayleigh damping,
single force input and single displacement output:

    (s^2 M + s C + K) q = f u(s),    y = g q,    C = alpha M + beta K.

Dirichlet constraints are imposed by eliminating the fixed DOFs, so reduced
bases built downstream contain free-field displacements only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tri6
from .mesh import Mesh


class AssemblyError(RuntimeError):
    """Raised for singular element Jacobians or unusable boundary data."""


class SolveError(RuntimeError):
    """Raised when a frequency-domain factorization fails."""


@dataclass(frozen=True)
class Material:
    """Isotropic plane-stress material with Rayleigh damping coefficients."""

    E: float          # Young's modulus [N/m^2]
    nu: float         # Poisson ratio
    rho: float        # density [kg/m^3]
    t: float          # thickness [m]
    alpha: float = 0.0   # mass-proportional damping [1/s]
    beta: float = 0.0    # stiffness-proportional damping [s]

    def __post_init__(self):
        if self.E <= 0 or self.rho <= 0 or self.t <= 0:
            raise ValueError("E, rho and t must be positive")
        if not 0 <= self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("damping coefficients must be nonnegative")

    def elasticity(self):
        c = self.E / (1 - self.nu ** 2)
        return c * np.array(
            [[1, self.nu, 0], [self.nu, 1, 0], [0, 0, (1 - self.nu) / 2]]
        )


# Steel plate used by all three test cases.
STEEL = Material(E=2.1e11, nu=0.3, rho=7860.0, t=0.01, alpha=8.0, beta=8e-6)


@dataclass
class FomSystem:
    """Assembled full-order system restricted to the free DOFs."""

    M: sp.csr_matrix
    C: sp.csr_matrix
    K: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    free_dofs: np.ndarray        # indices into the full 2*n_nodes DOF vector
    constrained_dofs: np.ndarray
    mesh: Mesh
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.M.shape[0]


def element_dofs(elements):
    """(m, 12) global DOF indices, interleaved (x, z) per node."""
    e = np.repeat(2 * elements, 2, axis=1)
    e[:, 1::2] += 1
    return e


def assemble_operators(mesh: Mesh, mat: Material):
    """Full (unconstrained) mass and stiffness matrices.

    Stiffness uses the 3-point rule, the consistent mass the 6-point rule;
    both are exact on straight-edged elements, curved boundary elements are
    integrated approximately.
    """
    coords = mesh.nodes[mesh.elements]          # (m, 6, 2)
    m = coords.shape[0]
    D = mat.elasticity()

    Ke = np.zeros((m, 12, 12))
    for xi, w in zip(*tri6.GAUSS_3):
        G = tri6.shape_gradients(xi)            # (6, 2)
        J = np.einsum("mjc,jd->mcd", coords, G)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(detJ <= 0):
            bad = int(np.argmin(detJ))
            raise AssemblyError(f"singular element Jacobian in element {bad}")
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1]
        invJ[:, 0, 1] = -J[:, 0, 1]
        invJ[:, 1, 0] = -J[:, 1, 0]
        invJ[:, 1, 1] = J[:, 0, 0]
        invJ /= detJ[:, None, None]
        dN = np.einsum("jd,mdc->mjc", G, invJ)  # (m, 6, 2) physical gradients
        B = np.zeros((m, 3, 12))
        B[:, 0, 0::2] = dN[:, :, 0]
        B[:, 1, 1::2] = dN[:, :, 1]
        B[:, 2, 0::2] = dN[:, :, 1]
        B[:, 2, 1::2] = dN[:, :, 0]
        Ke += np.einsum("mki,kl,mlj,m->mij", B, D, B, w * detJ * mat.t)

    Me = np.zeros((m, 12, 12))
    for xi, w in zip(*tri6.GAUSS_6):
        N = tri6.shape_functions(xi)            # (6,)
        J = np.einsum("mjc,jd->mcd", coords, tri6.shape_gradients(xi))
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Nmat = np.zeros((2, 12))
        Nmat[0, 0::2] = N
        Nmat[1, 1::2] = N
        NN = Nmat.T @ Nmat
        Me += (w * mat.rho * mat.t * detJ)[:, None, None] * NN[None, :, :]

    # Exact structural symmetry of the assembled matrices.
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    Me = 0.5 * (Me + Me.transpose(0, 2, 1))

    edofs = element_dofs(mesh.elements)
    rows = np.repeat(edofs, 12, axis=1).ravel()
    cols = np.tile(edofs, (1, 12)).ravel()
    ndof = mesh.n_dofs
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    # Summation order during duplicate folding is not symmetric, so enforce
    # exact symmetry (the averaged values are bitwise identical pairwise).
    K = 0.5 * (K + K.T).tocsr()
    M = 0.5 * (M + M.T).tocsr()
    return M, K


def nearest_node(mesh: Mesh, point):
    return int(np.argmin(np.linalg.norm(mesh.nodes - np.asarray(point), axis=1)))


def _dof(node, direction):
    comp = {"x": 0, "z": 1}[direction]
    return 2 * node + comp


def assemble(
    mesh: Mesh,
    mat: Material,
    bc_group: str,
    input_spec: dict,
    output_spec: dict,
) -> FomSystem:
    """Assemble a constrained system with a point force input and displacement output.

    input_spec / output_spec: {"point": (x, z), "direction": "x"|"z"} plus an
    optional "magnitude" on the input.  Node selectors resolve to the nearest
    mesh node so that node positions may drift across regenerated meshes.
    """
    if bc_group not in mesh.groups or not mesh.groups[bc_group]:
        raise AssemblyError(f"empty or missing boundary group {bc_group!r}")
    M, K = assemble_operators(mesh, mat)

    fixed_nodes = np.asarray(mesh.groups[bc_group], dtype=np.int64)
    constrained = np.sort(np.concatenate([2 * fixed_nodes, 2 * fixed_nodes + 1]))
    free = np.setdiff1d(np.arange(mesh.n_dofs), constrained)

    f_full = np.zeros(mesh.n_dofs)
    in_dof = _dof(nearest_node(mesh, input_spec["point"]), input_spec["direction"])
    f_full[in_dof] = input_spec.get("magnitude", 1.0)
    g_full = np.zeros(mesh.n_dofs)
    out_dof = _dof(nearest_node(mesh, output_spec["point"]), output_spec["direction"])
    g_full[out_dof] = 1.0
    if in_dof in constrained or out_dof in constrained:
        raise AssemblyError("input or output DOF lies on the fixed boundary")

    Mff = M[free][:, free].tocsr()
    Kff = K[free][:, free].tocsr()
    Cff = (mat.alpha * Mff + mat.beta * Kff).tocsr()
    meta = {"input_dof": int(in_dof), "output_dof": int(out_dof)}
    return FomSystem(
        Mff, Cff, Kff, f_full[free], g_full[free], free, constrained, mesh, meta
    )


def embed_full(vectors, free_dofs, n_dofs):
    """Scatter free-DOF vectors into full nodal vectors (fixed DOFs zero)."""
    vectors = np.asarray(vectors)
    full = np.zeros((n_dofs,) + vectors.shape[1:], dtype=vectors.dtype)
    full[free_dofs] = vectors
    return full


def _shared_pattern(*mats):
    """Re-express matrices on their union sparsity pattern (identical indices)."""
    coos = [m.tocoo() for m in mats]
    rows = np.concatenate([c.row for c in coos])
    cols = np.concatenate([c.col for c in coos])
    shape = mats[0].shape
    out = []
    offset = 0
    total = rows.shape[0]
    for c in coos:
        data = np.zeros(total, dtype=c.data.dtype)
        data[offset : offset + c.nnz] = c.data
        offset += c.nnz
        a = sp.csc_matrix((data, (rows, cols)), shape=shape)
        a.sum_duplicates()
        a.sort_indices()
        out.append(a)
    return out


def solve_frf(fom: FomSystem, freqs) -> np.ndarray:
    """Direct harmonic response y(s_i) at s_i = 2*pi*f_i*1j, unit input.

    One sparse LU per frequency; this is the full-order reference for all
    error metrics.
    """
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0 or np.any(freqs <= 0):
        raise ValueError("frequencies must be positive and nonempty")
    Ms, Cs, Ks = _shared_pattern(fom.M, fom.C, fom.K)
    y = np.empty(len(freqs), dtype=complex)
    f = fom.f.astype(complex)
    for i, fr in enumerate(freqs):
        s = 2j * np.pi * fr
        data = (s * s) * Ms.data + s * Cs.data + Ks.data
        A = sp.csc_matrix((data, Ks.indices, Ks.indptr), shape=Ks.shape)
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                options={"SymmetricMode": True, "DiagPivotThresh": 0.001},
            )
        except RuntimeError as e:
            raise SolveError(
                f"factorization failed at frequency index {i} ({fr} Hz): {e}"
            )
        q = lu.solve(f)
        q += lu.solve(f - A @ q)  # one refinement step for the relaxed pivoting
        y[i] = fom.g @ q
    return y
