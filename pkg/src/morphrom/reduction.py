"""Modal truncation, projection to reduced operators, and reduced solves."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fem import FomSystem


class EigenSolveError(RuntimeError):
    """Raised when the sparse eigensolver fails to converge."""


@dataclass
class RomSample:
    """Reduced system for one parameter point.

    V has orthonormal columns (thin QR of the mass-normalized modes), so the
    reduced operators are congruence projections, not modal-diagonal forms.
    """

    p: tuple
    mesh_id: str
    V: np.ndarray            # (n_free, r), orthonormal columns
    Mr: np.ndarray
    Cr: np.ndarray
    Kr: np.ndarray
    fr: np.ndarray
    gr: np.ndarray
    eigfreqs: np.ndarray     # first r undamped frequencies [Hz]
    free_dofs: np.ndarray    # indices into the full DOF vector of the mesh
    n_dofs: int              # full DOF count of the mesh (2 per node)
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.V.shape[1]


def _fix_signs(V):
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def orthonormalize(W):
    """Thin QR with a deterministic sign convention (positive R diagonal)."""
    Q, R = np.linalg.qr(W)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def modal_truncation(fom: FomSystem, r: int, static_enrichment: bool = False) -> RomSample:
    """Reduce a full-order system onto its r lowest undamped eigenmodes.

    With static_enrichment, the basis holds the r-1 lowest modes plus the
    static response to the load vector; this removes the residual-flexibility
    error of plain truncation near the top of the frequency band while the
    reduced size stays r.  eigfreqs then lists the r-1 modal frequencies.
    """
    n = fom.n
    if not 1 <= r <= n:
        raise ValueError(f"reduced size r={r} outside [1, {n}]")
    k = r - 1 if static_enrichment else r
    if k > n - 2 or n < 60:
        # ARPACK needs k < n; small problems go dense directly.
        import scipy.linalg

        vals, vecs = scipy.linalg.eigh(fom.K.toarray(), fom.M.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        # Deterministic start vector keeps repeated runs bit-identical.
        v0 = np.linspace(1.0, 2.0, n)
        try:
            vals, vecs = spla.eigsh(fom.K, k=k, M=fom.M, sigma=0.0, which="LM", v0=v0)
        except spla.ArpackNoConvergence as e:
            res = _eigen_residuals(fom, e.eigenvalues, e.eigenvectors)
            raise EigenSolveError(
                f"eigensolver converged {len(e.eigenvalues)}/{k} pairs, "
                f"max residual {res.max() if res.size else np.nan:.3e}"
            )
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    # Mass normalization, then orthonormal columns for the projection basis.
    scale = np.sqrt(np.einsum("ij,ij->j", vecs, fom.M @ vecs))
    vecs = _fix_signs(vecs / scale)
    if static_enrichment:
        qs = spla.spsolve(fom.K.tocsc(), fom.f)
        vecs = np.column_stack([vecs, qs / np.linalg.norm(qs)])
    V = orthonormalize(vecs)

    Mr = _sym(V.T @ (fom.M @ V))
    Cr = _sym(V.T @ (fom.C @ V))
    Kr = _sym(V.T @ (fom.K @ V))
    eigfreqs = np.sqrt(np.maximum(vals, 0.0)) / (2 * np.pi)
    return RomSample(
        p=tuple(fom.mesh.meta.get("p", ())),
        mesh_id=fom.mesh.mesh_id(),
        V=V,
        Mr=Mr,
        Cr=Cr,
        Kr=Kr,
        fr=V.T @ fom.f,
        gr=fom.g @ V,
        eigfreqs=eigfreqs,
        free_dofs=fom.free_dofs,
        n_dofs=fom.mesh.n_dofs,
        meta={
            "case": fom.mesh.meta.get("case"),
            "static_enrichment": bool(static_enrichment),
        },
    )


def _sym(A):
    return 0.5 * (A + A.T)


def _eigen_residuals(fom, vals, vecs):
    if vecs is None or vecs.size == 0:
        return np.array([])
    R = fom.K @ vecs - (fom.M @ vecs) * vals
    return np.linalg.norm(R, axis=0) / np.linalg.norm(fom.K @ vecs, axis=0)


def solve_reduced_frf(rom, freqs) -> np.ndarray:
    """Dense reduced harmonic response: mirrors the full-order solve contract.

    Accepts a RomSample or any object with Mr, Cr, Kr, fr, gr.  A singular
    reduced system at a frequency yields NaN there (flagged via warning)
    instead of aborting the sweep.
    """
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0 or np.any(freqs <= 0):
        raise ValueError("frequencies must be positive and nonempty")
    Mr, Cr, Kr = rom.Mr, rom.Cr, rom.Kr
    fr = rom.fr.astype(complex)
    gr = rom.gr
    y = np.empty(len(freqs), dtype=complex)
    s = 2j * np.pi * freqs
    chunk = 512
    singular = []
    for lo in range(0, len(freqs), chunk):
        sl = s[lo : lo + chunk]
        A = (
            sl[:, None, None] ** 2 * Mr[None]
            + sl[:, None, None] * Cr[None]
            + Kr[None]
        )
        try:
            q = np.linalg.solve(A, np.broadcast_to(fr[:, None], (len(sl), len(fr), 1)))
            y[lo : lo + len(sl)] = q[:, :, 0] @ gr
        except np.linalg.LinAlgError:
            for j in range(len(sl)):
                try:
                    y[lo + j] = gr @ np.linalg.solve(A[j], fr)
                except np.linalg.LinAlgError:
                    y[lo + j] = np.nan
                    singular.append(lo + j)
    if singular:
        warnings.warn(
            f"singular reduced system at {len(singular)} frequencies "
            f"(first index {singular[0]})"
        )
    return y


def mean_relative_error(y, y_r) -> float:
    """Frequency-averaged relative deviation of y_r from the reference y.

    Frequencies with zero reference magnitude are excluded (warned, counted).
    """
    y = np.asarray(y)
    y_r = np.asarray(y_r)
    if y.shape != y_r.shape or y.size == 0:
        raise ValueError("inputs must be equal-length and nonempty")
    mag = np.abs(y)
    ok = mag > 0
    excluded = int(np.count_nonzero(~ok))
    if excluded:
        warnings.warn(f"excluded {excluded} zero-reference frequencies")
        if not np.any(ok):
            raise ValueError("all reference samples are zero")
    return float(np.mean(np.abs(y[ok] - y_r[ok]) / mag[ok]))


# ---------------------------------------------------------------------------
# Serialization (one .npz per sample; mesh travels separately as JSON)


def save_rom(rom: RomSample, path):
    np.savez_compressed(
        path,
        p=np.array(rom.p),
        mesh_id=np.array(rom.mesh_id),
        V=rom.V,
        Mr=rom.Mr,
        Cr=rom.Cr,
        Kr=rom.Kr,
        fr=rom.fr,
        gr=rom.gr,
        eigfreqs=rom.eigfreqs,
        free_dofs=rom.free_dofs,
        n_dofs=np.array(rom.n_dofs),
        meta=np.array(json.dumps(rom.meta)),
    )


def load_rom(path) -> RomSample:
    with np.load(path, allow_pickle=False) as z:
        return RomSample(
            p=tuple(float(v) for v in z["p"]),
            mesh_id=str(z["mesh_id"]),
            V=z["V"],
            Mr=z["Mr"],
            Cr=z["Cr"],
            Kr=z["Kr"],
            fr=z["fr"],
            gr=z["gr"],
            eigfreqs=z["eigfreqs"],
            free_dofs=z["free_dofs"],
            n_dofs=int(z["n_dofs"]),
            meta=json.loads(str(z["meta"])),
        )
