"""Parametric reduced models by operator interpolation across varying meshes.

Sampled reduced bases live on different meshes, so they are first re-expressed
on a common reference mesh: the reference mesh is morphed onto each sampled
geometry (characteristic features overlapping) and the sampled basis columns
are evaluated at the morphed node positions via shape functions.  Once all
bases share the reference discretization they can be compared (principal
angles), clustered into consistent parameter regions, transformed to a common
coordinate system and interpolated entrywise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import Delaunay

from . import fem, transfer
from .mesh import GeometryParams, Mesh
from .morph import MorphError, build_morph_spec, morph_rbf, morph_saeh
from .reduction import RomSample, orthonormalize


class AlignmentError(RuntimeError):
    """Morph/transfer failure while aligning a sample, annotated with its id."""


@dataclass
class SamplePoint:
    """One sampled parameter point: geometry, mesh and reduced system."""

    params: GeometryParams
    mesh: Mesh
    rom: RomSample


@dataclass
class AnglePair:
    """Principal angles between the subspaces of two samples."""

    i: int
    j: int
    angles: np.ndarray       # degrees, descending

    @property
    def max_angle(self):
        return float(self.angles[0])


@dataclass
class Hyperparams:
    """Adaptive sampling thresholds.

    Distances are measured in the parameter domain normalized to the unit
    cube.  d_lt is the minimum bisection spacing, d_ut the maximum spacing at
    which a consistent pair is accepted without refinement, d_n (neighborhood
    expansion) is kept for config compatibility and disabled at 0.
    """

    theta_lt: float = 10.0
    theta_ut: float = 85.0
    d_lt: float = 0.1
    d_ut: float = 0.2
    d_n: float = 0.0
    min_cluster: int = 4
    # Extra bisection rounds sharpening detected region borders below d_lt
    # (used by the one-dimensional studies; the 2D study samples its borders
    # no finer than d_lt).
    border_refine: int = 0


@dataclass
class ClusterSet:
    """Partition of samples into consistent clusters plus the neighbor graph."""

    clusters: list            # list of sample-index lists
    edges: dict               # (i, j) -> {"angle": .., "distance": .., "label": ..}
    hyper: Hyperparams
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def cluster_of(self, sample_id):
        for c, members in enumerate(self.clusters):
            if sample_id in members:
                return c
        raise KeyError(sample_id)


def subspace_angles(Vi: np.ndarray, Vj: np.ndarray) -> np.ndarray:
    """Principal angles (degrees, descending) between two orthonormal bases."""
    for name, V in (("first", Vi), ("second", Vj)):
        gram_dev = np.abs(V.T @ V - np.eye(V.shape[1])).max()
        if gram_dev > 1e-8:
            raise ValueError(
                f"{name} basis is not orthonormal (Gram deviation {gram_dev:.2e}); "
                "re-orthonormalize before comparing subspaces"
            )
    if Vi.shape[0] != Vj.shape[0]:
        raise ValueError("bases must share their row dimension (same mesh)")
    sigma = np.linalg.svd(Vi.T @ Vj, compute_uv=False)
    theta = np.degrees(np.arccos(np.clip(sigma, 0.0, 1.0)))
    return theta[::-1].copy()


def _morph_onto(reference: SamplePoint, target: SamplePoint, method: str):
    spec = build_morph_spec(reference.mesh, reference.params, target.params)
    if method == "saeh":
        return morph_saeh(reference.mesh, spec)
    if method == "rbf":
        return morph_rbf(reference.mesh, spec)
    raise ValueError(f"unknown morph method {method!r}")


def _clamp_distance(mesh: Mesh) -> float:
    areas = mesh.corner_areas()
    return max(1e-4, 0.5 * float(np.sqrt(np.median(areas))))


def transfer_basis(reference: SamplePoint, target: SamplePoint, method: str):
    """Represent target's basis on the reference mesh (morphed to overlap).

    Returns the raw transferred basis restricted to the reference free DOFs
    (not orthonormal).
    """
    fld = _morph_onto(reference, target, method)
    V_full = fem.embed_full(
        target.rom.V, target.rom.free_dofs, target.rom.n_dofs
    )
    P = transfer.build_transfer_matrix(
        target.mesh, fld.morphed_nodes, clamp_distance=_clamp_distance(target.mesh)
    )
    W_full = P @ V_full
    return W_full[reference.rom.free_dofs]


@dataclass
class AlignedBases:
    """Sampled bases re-expressed (orthonormal) on one reference mesh."""

    reference: int            # index into the aligned sample list
    bases: list               # orthonormal arrays, reference free-DOF rows


def align_bases_on_reference(
    samples, method: str = "rbf", reference: int | None = None
) -> AlignedBases:
    """Morph the reference mesh to each sample and transfer every basis.

    The reference defaults to the sample with the most mesh nodes; its own
    basis passes through unchanged, all others are re-orthonormalized after
    the shape-function transfer.
    """
    if reference is None:
        reference = int(np.argmax([s.mesh.n_nodes for s in samples]))
    ref = samples[reference]
    bases = []
    for k, s in enumerate(samples):
        if k == reference:
            bases.append(s.rom.V)
            continue
        try:
            W = transfer_basis(ref, s, method)
        except (MorphError, transfer.LocateError) as e:
            raise AlignmentError(f"aligning sample {k} (p={s.params.p}): {e}")
        bases.append(orthonormalize(W))
    return AlignedBases(reference, bases)


def pair_angles(a: SamplePoint, b: SamplePoint, method: str = "rbf") -> np.ndarray:
    """Principal angles between two samples, aligned pairwise.

    The denser mesh of the two serves as the pair-local reference.
    """
    if b.mesh.n_nodes > a.mesh.n_nodes:
        a, b = b, a
    if a.mesh.mesh_id() == b.mesh.mesh_id():
        return subspace_angles(a.rom.V, b.rom.V)
    W = orthonormalize(transfer_basis(a, b, method))
    return subspace_angles(a.rom.V, W)


# ---------------------------------------------------------------------------
# Adaptive sampling and clustering


def _normalize(p, bounds):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return (p - lo) / (hi - lo)


def _ndist(pa, pb, bounds):
    return float(np.linalg.norm(_normalize(pa, bounds) - _normalize(pb, bounds)))


def _neighbor_pairs(points, bounds):
    """Sorted adjacency in 1D, Delaunay edges in 2D."""
    pts = np.array([np.atleast_1d(p) for p in points])
    if pts.shape[1] == 1:
        order = np.argsort(pts[:, 0])
        return [
            tuple(sorted((int(order[k]), int(order[k + 1]))))
            for k in range(len(order) - 1)
        ]
    norm = np.array([_normalize(p, bounds) for p in points])
    if len(points) < 3:
        return [(0, 1)] if len(points) == 2 else []
    try:
        tri = Delaunay(norm)
    except Exception:
        order = np.argsort(norm[:, 0])
        return [
            tuple(sorted((int(order[k]), int(order[k + 1]))))
            for k in range(len(order) - 1)
        ]
    edges = set()
    for simplex in tri.simplices:
        for u in range(len(simplex)):
            for v in range(u + 1, len(simplex)):
                edges.add(tuple(sorted((int(simplex[u]), int(simplex[v])))))
    return sorted(edges)


def _classify(angle, dist, hyper):
    if angle <= hyper.theta_lt:
        return "refine" if dist > hyper.d_ut else "consistent"
    # Non-consistent pairs separate regions; border_refine lets them bisect
    # below d_lt to localize the border.
    floor = hyper.d_lt / (2 ** hyper.border_refine)
    if angle >= hyper.theta_ut:
        return "refine" if dist > floor else "boundary"
    return "refine" if dist > floor else "inconsistent"


def _union_find_clusters(n, consistent_edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in consistent_edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for k in range(n):
        groups.setdefault(find(k), []).append(k)
    return sorted(groups.values())


def adaptive_sample(
    factory,
    initial_points,
    bounds,
    hyper: Hyperparams,
    budget: int = 200,
    method: str = "rbf",
    progress=None,
):
    """Sample the parameter domain until neighboring bases are classified.

    factory(p) must return a SamplePoint.  Neighbor pairs whose maximum
    subspace angle is at or below theta_lt are consistent, pairs at or above
    theta_ut within d_lt are cluster boundaries, everything else is bisected
    while the (normalized) spacing allows.  Consistent-edge components form
    clusters; clusters below the minimum size are first grown by sampling
    inside their span and merged across the weakest boundary only as a last
    resort.  budget caps the number of added samples.
    """
    points = [tuple(np.atleast_1d(p)) for p in initial_points]
    if len(points) < 2:
        raise ValueError("need at least two initial points")
    samples = [factory(p) for p in points]
    angles = {}
    added = 0
    converged = True
    enrich_rounds = 0

    def key(pa, pb):
        return tuple(sorted((pa, pb)))

    def ensure_angle(i, j):
        k = key(points[i], points[j])
        if k not in angles:
            angles[k] = float(pair_angles(samples[i], samples[j], method)[0])
            if progress:
                progress(f"angle {points[i]} vs {points[j]}: {angles[k]:.1f} deg")
        return angles[k]

    def add_point(p):
        nonlocal added
        p = tuple(np.atleast_1d(p))
        if any(_ndist(p, q, bounds) < 1e-9 for q in points):
            return False
        points.append(p)
        samples.append(factory(p))
        added += 1
        if progress:
            progress(f"sample {len(points) - 1} at {p} ({added} added)")
        return True

    while True:
        pairs = _neighbor_pairs(points, bounds)
        labels = {}
        for i, j in pairs:
            a = ensure_angle(i, j)
            d = _ndist(points[i], points[j], bounds)
            labels[(i, j)] = (a, d, _classify(a, d, hyper))

        to_add = sorted(
            {
                tuple(0.5 * (np.atleast_1d(points[i]) + np.atleast_1d(points[j])))
                for (i, j), (a, d, lab) in labels.items()
                if lab == "refine"
            }
        )
        if to_add:
            budget_hit = False
            for p in to_add:
                if added >= budget:
                    converged = False
                    budget_hit = True
                    break
                add_point(p)
            if budget_hit:
                break
            continue

        # Stable neighbor classification: cluster and handle small clusters.
        consistent = [e for e, (a, d, lab) in labels.items() if lab == "consistent"]
        clusters = _union_find_clusters(len(points), consistent)
        small = [c for c in clusters if len(c) < hyper.min_cluster]
        if not small or enrich_rounds >= 40:
            break
        grown = False
        for c in small:
            cand = _enrichment_candidates(points, clusters, c, labels, bounds, hyper)
            for p in cand:
                if added >= budget:
                    converged = False
                    break
                if add_point(p):
                    grown = True
                    break
            if grown:
                break
        enrich_rounds += 1
        if not grown:
            break

    pairs = _neighbor_pairs(points, bounds)
    edges = {}
    for i, j in pairs:
        a = ensure_angle(i, j)
        d = _ndist(points[i], points[j], bounds)
        edges[(i, j)] = {"angle": a, "distance": d, "label": _classify(a, d, hyper)}
    consistent = [e for e, v in edges.items() if v["label"] == "consistent"]
    clusters = _union_find_clusters(len(points), consistent)
    clusters, merges = _merge_small(clusters, edges, hyper.min_cluster)
    cs = ClusterSet(
        clusters,
        edges,
        hyper,
        converged=converged,
        diagnostics={"added": added, "merges": merges},
    )
    _validate_clusters(cs)
    return samples, cs


def _enrichment_candidates(points, clusters, cluster, labels, bounds, hyper):
    """Midpoints that grow an undersized cluster: widest internal gap first,
    then midpoints toward the cluster's boundary edges.  Pair spacings are not
    driven below half the bisection floor, so enrichment cannot cascade."""
    floor = 0.5 * hyper.d_lt
    cand = []
    members = sorted(cluster, key=lambda i: tuple(np.atleast_1d(points[i])))
    if len(members) >= 2:
        gaps = []
        for a, b in zip(members[:-1], members[1:]):
            gaps.append(
                (
                    _ndist(points[a], points[b], bounds),
                    tuple(0.5 * (np.atleast_1d(points[a]) + np.atleast_1d(points[b]))),
                )
            )
        gaps.sort(reverse=True)
        cand.extend(p for d, p in gaps if d >= 2 * floor)
    for (i, j), (a, d, lab) in sorted(labels.items()):
        if lab in ("boundary", "inconsistent") and (i in cluster) != (j in cluster):
            if d >= 2 * floor:
                cand.append(
                    tuple(0.5 * (np.atleast_1d(points[i]) + np.atleast_1d(points[j])))
                )
    return cand


def _merge_small(clusters, edges, min_cluster):
    """Merge clusters below the minimum size across their weakest boundary."""
    clusters = [list(c) for c in clusters]
    merges = []
    changed = True
    while changed:
        changed = False
        clusters.sort(key=len)
        for ci, c in enumerate(clusters):
            if len(c) >= min_cluster or len(clusters) == 1:
                continue
            best = None
            for (i, j), v in edges.items():
                if (i in c) != (j in c):
                    other = next(
                        k for k, cc in enumerate(clusters) if (j if i in c else i) in cc
                    )
                    if best is None or v["angle"] < best[0]:
                        best = (v["angle"], other)
            if best is None:
                continue
            other = clusters[best[1]]
            merges.append({"merged": sorted(c), "into": sorted(other), "angle": best[0]})
            other.extend(c)
            other.sort()
            del clusters[ci]
            changed = True
            break
    return sorted(clusters), merges


def _validate_clusters(cs: ClusterSet):
    for c in cs.clusters:
        cset = set(c)
        for (i, j), v in cs.edges.items():
            if i in cset and j in cset and v["angle"] > cs.hyper.theta_ut:
                warnings.warn(
                    f"cluster edge ({i},{j}) exceeds the upper angle threshold "
                    f"({v['angle']:.1f} deg)"
                )
                cs.diagnostics.setdefault("threshold_violations", []).append((i, j))


# ---------------------------------------------------------------------------
# Common coordinate system and entrywise interpolation


@dataclass
class OperatorPredictor:
    """Entrywise map p -> reduced operators, spline (1D) or ridge (2D)."""

    mode: str                 # "spline1d" | "ridge2d" | "linear1d" | "constant"
    params: np.ndarray        # (K, dim) raw sample parameters
    values: np.ndarray        # (K, D) packed operator entries
    bounds: list
    r: int
    lam: float = 1e-5
    _impl: object = field(default=None, repr=False, compare=False)

    def _build(self):
        if self.mode == "spline1d":
            x = self.params[:, 0]
            order = np.argsort(x)
            self._impl = CubicSpline(x[order], self.values[order], axis=0)
        elif self.mode == "linear1d":
            order = np.argsort(self.params[:, 0])
            xs, ys = self.params[order, 0], self.values[order]
            self._impl = ("linear", xs, ys)
        elif self.mode == "constant":
            self._impl = ("constant", self.values[0])
        elif self.mode == "ridge2d":
            Phi = _ridge_features(_normalize_rows(self.params, self.bounds))
            A = Phi.T @ Phi + self.lam * np.eye(Phi.shape[1])
            self._impl = ("ridge", np.linalg.solve(A, Phi.T @ self.values))
        else:
            raise ValueError(f"unknown predictor mode {self.mode!r}")

    def predict_packed(self, p):
        if self._impl is None:
            self._build()
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if self.mode == "spline1d":
            return np.asarray(self._impl(p[0]))
        if self.mode == "linear1d":
            _, xs, ys = self._impl
            x = np.clip(p[0], xs[0], xs[-1])
            k = np.clip(np.searchsorted(xs, x) - 1, 0, len(xs) - 2)
            t = (x - xs[k]) / (xs[k + 1] - xs[k])
            return (1 - t) * ys[k] + t * ys[k + 1]
        if self.mode == "constant":
            return self._impl[1]
        beta = self._impl[1]
        phi = _ridge_features(_normalize_rows(p[None, :], self.bounds))
        return (phi @ beta)[0]

    def predict(self, p):
        return _unpack_ops(self.predict_packed(p), self.r)


def _normalize_rows(P, bounds):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return (np.asarray(P, dtype=float) - lo) / (hi - lo)


def _ridge_features(Pn):
    """Tensor monomials x^a z^b with a, b <= 3 (16 terms)."""
    x, z = Pn[:, 0], Pn[:, 1]
    cols = [x ** a * z ** b for a in range(4) for b in range(4)]
    return np.column_stack(cols)


def _pack_ops(ops):
    Mt, Ct, Kt, ft, gt = ops
    return np.concatenate([Mt.ravel(), Ct.ravel(), Kt.ravel(), ft, gt])


def _unpack_ops(vec, r):
    n = r * r
    Mt = vec[:n].reshape(r, r)
    Ct = vec[n : 2 * n].reshape(r, r)
    Kt = vec[2 * n : 3 * n].reshape(r, r)
    ft = vec[3 * n : 3 * n + r]
    gt = vec[3 * n + r :]
    sym = lambda A: 0.5 * (A + A.T)
    return sym(Mt), sym(Ct), sym(Kt), ft, gt


def fit_interpolant(params, ops_list, mode, bounds, lam=1e-5, degrade=False):
    """Entrywise predictor over transformed operators.

    spline1d needs >= 4 distinct parameter values; with degrade=True small
    sample sets fall back to linear/constant interpolation instead of failing.
    """
    P = np.array([np.atleast_1d(p) for p in params], dtype=float)
    Y = np.vstack([_pack_ops(o) for o in ops_list])
    r = ops_list[0][0].shape[0]
    if mode == "spline1d":
        x = P[:, 0]
        if len(np.unique(x)) != len(x):
            raise ValueError("duplicate parameter points for spline interpolation")
        if len(x) < 4:
            if not degrade:
                raise ValueError(
                    f"spline interpolation needs >= 4 samples, got {len(x)}"
                )
            mode = "linear1d" if len(x) >= 2 else "constant"
    elif mode == "ridge2d":
        if P.shape[1] != 2:
            raise ValueError("ridge2d requires a two-dimensional parameter space")
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    return OperatorPredictor(mode, P, Y, list(bounds), r, lam)


@dataclass
class ClusterModel:
    """Common coordinate system and transformed operators of one cluster."""

    sample_ids: list
    retained_ids: list
    params: list              # parameter tuples of retained samples
    reference_id: int
    R: np.ndarray             # common basis, reference free-DOF rows
    T: list                   # transformation matrix per retained sample
    transformed: list         # (Mt, Ct, Kt, ft, gt) per retained sample
    conditions: list
    predictor: OperatorPredictor
    rejected: list = field(default_factory=list)


@dataclass
class PromModel:
    """Clustered parametric reduced model."""

    clusters: list            # [ClusterModel]
    mode: str
    method: str
    bounds: list
    r: int
    case: str = ""
    meta: dict = field(default_factory=dict)


def _transform_cluster(qs, roms, params, ids, mode, bounds, lam, cond_max, degrade):
    """Common basis, transformations and fitted predictor from aligned bases."""
    r = roms[0].r
    library = np.hstack(qs)
    U, _, _ = np.linalg.svd(library, full_matrices=False)
    R = U[:, :r]
    # Deterministic column signs.
    idx = np.argmax(np.abs(R), axis=0)
    signs = np.sign(R[idx, np.arange(R.shape[1])])
    signs[signs == 0] = 1.0
    R = R * signs

    T, transformed, conds, retained, kept_params, rejected = [], [], [], [], [], []
    for q, rom, p, sid in zip(qs, roms, params, ids):
        H = R.T @ q
        cond = float(np.linalg.cond(H))
        if not np.isfinite(cond) or cond > cond_max:
            rejected.append({"id": sid, "cond": cond})
            continue
        Tk = np.linalg.inv(H)
        Mt = Tk.T @ rom.Mr @ Tk
        Ct = Tk.T @ rom.Cr @ Tk
        Kt = Tk.T @ rom.Kr @ Tk
        ft = Tk.T @ rom.fr
        gt = rom.gr @ Tk
        T.append(Tk)
        transformed.append((Mt, Ct, Kt, ft, gt))
        conds.append(cond)
        retained.append(sid)
        kept_params.append(tuple(np.atleast_1d(p)))
    if not retained:
        raise ValueError("all samples rejected by the conditioning guard")
    return R, T, transformed, conds, retained, kept_params, rejected


def build_prom(
    samples,
    cluster_ids,
    mode,
    bounds,
    method: str = "rbf",
    lam: float = 1e-5,
    cond_max: float = 1e8,
    degrade: bool = False,
) -> ClusterModel:
    """Align one cluster's bases, transform its operators and fit a predictor."""
    members = [samples[i] for i in cluster_ids]
    aligned = align_bases_on_reference(members, method=method)
    roms = [s.rom for s in members]
    params = [s.params.p for s in members]
    R, T, transformed, conds, retained, kept_params, rejected = _transform_cluster(
        aligned.bases, roms, params, list(cluster_ids), mode, bounds, lam, cond_max,
        degrade,
    )
    return ClusterModel(
        sample_ids=list(cluster_ids),
        retained_ids=retained,
        params=kept_params,
        reference_id=cluster_ids[aligned.reference],
        R=R,
        T=T,
        transformed=transformed,
        conditions=conds,
        predictor=fit_interpolant(
            kept_params, transformed, mode, bounds, lam=lam, degrade=degrade
        ),
        rejected=rejected,
    )


def build_prom_model(
    samples,
    cluster_set: ClusterSet,
    mode,
    bounds,
    method="rbf",
    lam=1e-5,
    degrade=False,
) -> PromModel:
    clusters = [
        build_prom(samples, c, mode, bounds, method=method, lam=lam, degrade=degrade)
        for c in cluster_set.clusters
    ]
    case = samples[0].params.case if samples else ""
    return PromModel(
        clusters, mode, method, list(bounds), samples[0].rom.r, case=case
    )


def zero_padding_baseline(
    samples, mode, bounds, lam=1e-5, cond_max=1e8, degrade=False
) -> PromModel:
    """Comparison baseline: bases padded with zero rows to a common size.

    DOF indices are aligned as-is and all samples form one cluster; this
    reproduces plain operator interpolation when the meshes are identical and
    is expected to fail for genuinely varying meshes.
    """
    if len(samples) < 2:
        raise ValueError("baseline needs at least two samples")
    nmax = max(s.rom.V.shape[0] for s in samples)
    padded = []
    for s in samples:
        V = s.rom.V
        if V.shape[0] < nmax:
            V = np.vstack([V, np.zeros((nmax - V.shape[0], V.shape[1]))])
        padded.append(V)
    roms = [s.rom for s in samples]
    params = [s.params.p for s in samples]
    ids = list(range(len(samples)))
    R, T, transformed, conds, retained, kept_params, rejected = _transform_cluster(
        padded, roms, params, ids, mode, bounds, lam, cond_max, degrade
    )
    cm = ClusterModel(
        sample_ids=ids,
        retained_ids=retained,
        params=kept_params,
        reference_id=int(np.argmax([s.rom.V.shape[0] for s in samples])),
        R=R,
        T=T,
        transformed=transformed,
        conditions=conds,
        predictor=fit_interpolant(
            kept_params, transformed, mode, bounds, lam=lam, degrade=degrade
        ),
        rejected=rejected,
    )
    case = samples[0].params.case if samples else ""
    return PromModel(
        [cm], mode, "zero-pad", list(bounds), samples[0].rom.r, case=case
    )


@dataclass
class PredictedRom:
    """Reduced operators evaluated at a queried parameter point."""

    p: tuple
    Mr: np.ndarray
    Cr: np.ndarray
    Kr: np.ndarray
    fr: np.ndarray
    gr: np.ndarray
    cluster: int = 0
    extrapolated: bool = False


def predict(prom: PromModel, p) -> PredictedRom:
    """Evaluate the predictor of the cluster nearest to p.

    Cluster membership follows the nearest retained sample; querying outside
    that cluster's parameter hull extrapolates with a warning.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    best = None
    for c, cm in enumerate(prom.clusters):
        for q in cm.params:
            d = _ndist(p, q, prom.bounds)
            if best is None or d < best[0]:
                best = (d, c)
    cidx = best[1]
    cm = prom.clusters[cidx]
    P = np.array(cm.params, dtype=float)
    lo, hi = P.min(axis=0), P.max(axis=0)
    extrapolated = bool(np.any(p < lo - 1e-12) or np.any(p > hi + 1e-12))
    if extrapolated:
        warnings.warn(
            f"parameter {p.tolist()} outside cluster {cidx} hull; extrapolating"
        )
    Mt, Ct, Kt, ft, gt = cm.predictor.predict(p)
    return PredictedRom(tuple(p), Mt, Ct, Kt, ft, gt, cidx, extrapolated)
