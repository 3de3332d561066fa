"""Experiment definitions and end-to-end pipelines.

An experiment fixes geometry case, reduced size, frequency grid, adaptive
sampling hyperparameters and test grid; running it performs the sampling per
morph method, builds the parametric reduced models (plus the zero-padding
baseline), sweeps a test grid comparing each model against the full-order
solve, and writes CSV/JSON results.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fem, reduction, transfer
from .mesh import (
    BEAM,
    BEAM_HEIGHT,
    CIRCULAR_HOLE,
    ELLIPTIC_HOLE,
    PARAM_BOUNDS,
    PLATE_SIDE,
    GeometryParams,
    generate_structured_beam,
    generate_unstructured_hole,
)
from .morph import build_morph_spec, morph_rbf, morph_saeh
from .prom import (
    Hyperparams,
    SamplePoint,
    build_prom_model,
    predict,
    zero_padding_baseline,
)
from . import prom as prom_mod

MORPH_METHODS = ("rbf", "saeh")
ALL_METHODS = MORPH_METHODS + ("zero-pad",)


@dataclass
class Experiment:
    """One parametric study at a chosen mesh density scale."""

    name: str
    case: str
    r: int
    initial_points: list
    hyper: Hyperparams
    mode: str                       # "spline1d" | "ridge2d"
    scale: float = 1.0              # 1.0 = published mesh density, <1 coarser
    h0: float = 0.02
    seed: int = 1
    freq_kind: str = "linspace"     # "linspace" | "step"
    freq_start: float = 1.0
    freq_stop: float = 5000.0
    freq_count: int = 5000
    freq_step: float = 1.0
    test_points: object = 101       # int (1D) or [n1, n2] (2D)
    budget: int = 100
    static_enrichment: bool = True
    ridge_lambda: float = 1e-5
    workers: int = 0                # 0 = auto
    highlight: list = field(default_factory=list)   # FRF comparison points

    def __post_init__(self):
        if not 0 < self.scale <= 1.0:
            raise ValueError("scale factor must lie in (0, 1]")
        if self.case not in PARAM_BOUNDS:
            raise ValueError(f"unknown case {self.case!r}")

    @property
    def bounds(self):
        return PARAM_BOUNDS[self.case]

    @property
    def mesh_size(self):
        return self.h0 / self.scale

    def frequencies(self):
        if self.freq_kind == "step":
            freqs = np.arange(
                self.freq_start, self.freq_stop + 0.5 * self.freq_step, self.freq_step
            )
        else:
            freqs = np.linspace(self.freq_start, self.freq_stop, self.freq_count)
        if len(freqs) == 0 or np.any(np.diff(freqs) <= 0) or freqs[0] <= 0:
            raise ValueError("frequency grid must be positive ascending")
        return freqs

    def test_grid(self):
        if len(self.bounds) == 1:
            n = int(self.test_points)
            (lo, hi), = self.bounds
            return [(float(p),) for p in np.linspace(lo, hi, n)]
        if np.isscalar(self.test_points):
            n1 = n2 = int(self.test_points)
        else:
            n1, n2 = (int(v) for v in self.test_points)
        (lo1, hi1), (lo2, hi2) = self.bounds
        return [
            (float(a), float(b))
            for a in np.linspace(lo1, hi1, n1)
            for b in np.linspace(lo2, hi2, n2)
        ]

    @classmethod
    def from_config(cls, doc: dict) -> "Experiment":
        doc = dict(doc)
        hyper = Hyperparams(**doc.pop("hyperparameters", {}))
        freq = doc.pop("frequencies", {})
        return cls(
            name=doc.pop("name"),
            case=doc.pop("case"),
            r=int(doc.pop("r")),
            initial_points=[tuple(p) for p in doc.pop("initial_points")],
            hyper=hyper,
            mode=doc.pop("interpolation"),
            freq_kind=freq.get("kind", "linspace"),
            freq_start=freq.get("start", 1.0),
            freq_stop=freq.get("stop", 5000.0),
            freq_count=freq.get("num", 5000),
            freq_step=freq.get("step", 1.0),
            **doc,
        )


def load_experiment(path) -> Experiment:
    with open(path) as f:
        doc = json.load(f)
    doc.pop("acceptance", None)
    return Experiment.from_config(doc)


def case_io(case: str, p):
    """Boundary group, force input and displacement output for a case."""
    p = tuple(np.atleast_1d(p))
    if case == BEAM:
        length = p[0]
        return (
            "Gc1",
            {"point": (length, BEAM_HEIGHT), "direction": "z", "magnitude": 1.0},
            {"point": (length, 0.0), "direction": "z"},
        )
    return (
        "Gc1",
        {"point": (0.0, PLATE_SIDE), "direction": "x", "magnitude": 1.0},
        {"point": (PLATE_SIDE, PLATE_SIDE), "direction": "x"},
    )


def build_mesh(case: str, p, h: float, seed: int):
    gp = GeometryParams(case, tuple(np.atleast_1d(p)))
    if case == BEAM:
        return gp, generate_structured_beam(gp, h)
    return gp, generate_unstructured_hole(gp, h, seed)


def build_fom(case: str, p, h: float, seed: int):
    gp, mesh = build_mesh(case, p, h, seed)
    bc, inp, out = case_io(case, p)
    return gp, mesh, fem.assemble(mesh, fem.STEEL, bc, inp, out)


def make_sample(exp: Experiment, p) -> SamplePoint:
    gp, mesh, fom = build_fom(exp.case, p, exp.mesh_size, exp.seed)
    rom = reduction.modal_truncation(
        fom, exp.r, static_enrichment=exp.static_enrichment
    )
    return SamplePoint(gp, mesh, rom)


# ---------------------------------------------------------------------------
# Parallel full-order sweep


def _fom_frf_task(args):
    idx, case, p, h, seed, freqs = args
    _, mesh, fom = build_fom(case, p, h, seed)
    y = fem.solve_frf(fom, np.asarray(freqs))
    return idx, y, mesh.n_dofs


def fom_sweep(exp: Experiment, points, freqs, workers=None, progress=None):
    """Full-order FRFs at the test points (process pool, order-stable)."""
    tasks = [
        (i, exp.case, tuple(p), exp.mesh_size, exp.seed, freqs)
        for i, p in enumerate(points)
    ]
    n_workers = workers or exp.workers
    if not n_workers:
        import os

        n_workers = min(4, os.cpu_count() or 1)
    out = [None] * len(points)
    dofs = [0] * len(points)
    if n_workers <= 1 or len(points) <= 2:
        for t in tasks:
            i, y, nd = _fom_frf_task(t)
            out[i], dofs[i] = y, nd
            if progress:
                progress(f"full-order solve {i + 1}/{len(points)}")
        return out, dofs
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        for i, y, nd in pool.map(_fom_frf_task, tasks, chunksize=1):
            out[i], dofs[i] = y, nd
            if progress:
                progress(f"full-order solve {i + 1}/{len(points)}")
    return out, dofs


# ---------------------------------------------------------------------------
# Experiment pipeline


@dataclass
class MethodResult:
    method: str
    model: object = None
    n_samples: int = 0
    n_clusters: int = 0
    sample_points: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    converged: bool = True
    mre: list = field(default_factory=list)
    error: str = ""
    degraded: bool = False
    sampling_time: float = 0.0
    build_time: float = 0.0


def run_experiment(
    exp: Experiment,
    methods=("rbf", "saeh", "zero-pad"),
    outdir=None,
    plots: bool = False,
    workers=None,
    progress=None,
):
    """Sampling, model building and the accuracy sweep for each method.

    Per-method failures are recorded and do not stop the other methods.
    Returns a result dict (also written as CSV + JSON when outdir is given).
    """
    methods = [m for m in methods]
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}")
    freqs = exp.frequencies()
    rng_note = f"{exp.name}@scale{exp.scale}"
    say = progress or (lambda msg: None)

    sample_cache = {}

    def factory(p):
        key = tuple(np.round(np.atleast_1d(p), 12))
        if key not in sample_cache:
            sample_cache[key] = make_sample(exp, p)
        return sample_cache[key]

    results = {m: MethodResult(m) for m in methods}
    first_morph_samples = None

    for m in methods:
        if m == "zero-pad":
            continue
        res = results[m]
        t0 = time.time()
        try:
            say(f"[{rng_note}] adaptive sampling with {m} morphing")
            samples, cs = prom_mod.adaptive_sample(
                factory,
                exp.initial_points,
                exp.bounds,
                exp.hyper,
                budget=exp.budget,
                method=m,
                progress=progress,
            )
            res.sampling_time = time.time() - t0
            res.n_samples = len(samples)
            res.n_clusters = len(cs.clusters)
            res.sample_points = [list(s.params.p) for s in samples]
            res.clusters = [list(c) for c in cs.clusters]
            res.converged = cs.converged
            t0 = time.time()
            res.model = build_prom_model(
                samples,
                cs,
                exp.mode,
                exp.bounds,
                method=m,
                lam=exp.ridge_lambda,
                degrade=True,
            )
            res.build_time = time.time() - t0
            res.degraded = any(
                cm.predictor.mode != exp.mode for cm in res.model.clusters
            )
            if first_morph_samples is None:
                first_morph_samples = samples
        except Exception as e:  # recorded, other methods continue
            res.error = f"{type(e).__name__}: {e}"
            say(f"[{rng_note}] method {m} failed: {res.error}")

    if "zero-pad" in methods:
        res = results["zero-pad"]
        t0 = time.time()
        try:
            if first_morph_samples is None:
                say(f"[{rng_note}] sampling (rbf angles) for the baseline")
                first_morph_samples, _ = prom_mod.adaptive_sample(
                    factory,
                    exp.initial_points,
                    exp.bounds,
                    exp.hyper,
                    budget=exp.budget,
                    method="rbf",
                    progress=progress,
                )
            res.model = zero_padding_baseline(
                first_morph_samples,
                exp.mode,
                exp.bounds,
                lam=exp.ridge_lambda,
                degrade=True,
            )
            res.n_samples = len(first_morph_samples)
            res.n_clusters = 1
            res.sample_points = [list(s.params.p) for s in first_morph_samples]
            res.build_time = time.time() - t0
        except Exception as e:
            res.error = f"{type(e).__name__}: {e}"
            say(f"[{rng_note}] zero-pad baseline failed: {res.error}")

    # Accuracy sweep against the full-order oracle.
    points = exp.test_grid()
    say(f"[{rng_note}] full-order sweep over {len(points)} test points")
    t0 = time.time()
    y_fom, dofs = fom_sweep(exp, points, freqs, workers=workers, progress=progress)
    sweep_time = time.time() - t0
    for m in methods:
        res = results[m]
        if res.error:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for i, p in enumerate(points):
                rom_p = predict(res.model, p)
                y_r = reduction.solve_reduced_frf(rom_p, freqs)
                res.mre.append(reduction.mean_relative_error(y_fom[i], y_r))

    bundle = {
        "experiment": exp.name,
        "case": exp.case,
        "scale": exp.scale,
        "seed": exp.seed,
        "r": exp.r,
        "mode": exp.mode,
        "test_points": [list(p) for p in points],
        "n_dofs": dofs,
        "timings": {"fom_sweep": sweep_time},
        "methods": {},
    }
    for m in methods:
        res = results[m]
        entry = {
            "n_samples": res.n_samples,
            "n_clusters": res.n_clusters,
            "sample_points": res.sample_points,
            "clusters": res.clusters,
            "converged": res.converged,
            "degraded": res.degraded,
            "error": res.error,
            "sampling_time": res.sampling_time,
            "build_time": res.build_time,
        }
        if res.mre:
            entry["mean_mre"] = float(np.mean(res.mre))
            entry["max_mre"] = float(np.max(res.mre))
        bundle["methods"][m] = entry

    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "results.csv", points, dofs, results, methods)
        with open(outdir / "summary.json", "w") as f:
            json.dump(bundle, f, indent=1)
        _save_models(outdir, results)
        if exp.highlight:
            _write_highlight_frfs(exp, results, freqs, outdir, say)
        if plots:
            from . import plots as plots_mod

            plots_mod.render_report(outdir)
    bundle["_results"] = results
    bundle["_y_fom"] = y_fom
    return bundle


def _write_csv(path, points, dofs, results, methods):
    import csv

    dim = len(points[0])
    cols = [f"p{k + 1}" for k in range(dim)] + ["method", "mre", "n_dofs"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for i, p in enumerate(points):
            for m in methods:
                res = results[m]
                mre = res.mre[i] if res.mre else float("nan")
                w.writerow([repr(float(v)) for v in p] + [m, repr(float(mre)), dofs[i]])


def _save_models(outdir, results):
    models = Path(outdir) / "models"
    models.mkdir(exist_ok=True)
    from .prom_io import save_prom_model

    for m, res in results.items():
        if res.model is not None:
            save_prom_model(res.model, models / f"{m.replace('-', '_')}.npz")


def _write_highlight_frfs(exp, results, freqs, outdir, say):
    import csv

    for p in exp.highlight:
        p = tuple(np.atleast_1d(p))
        tag = "_".join(f"{v:g}" for v in p)
        say(f"highlight FRF at {p}")
        _, _, fom = build_fom(exp.case, p, exp.mesh_size, exp.seed)
        y = fem.solve_frf(fom, freqs)
        cols = {"freq_hz": freqs, "fom_re": y.real, "fom_im": y.imag}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for m, res in results.items():
                if res.model is None:
                    continue
                yr = reduction.solve_reduced_frf(predict(res.model, p), freqs)
                key = m.replace("-", "_")
                cols[f"{key}_re"] = yr.real
                cols[f"{key}_im"] = yr.imag
        with open(Path(outdir) / f"frf_{tag}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols.keys())
            for row in zip(*cols.values()):
                w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# Wall-clock comparison of the offline stages


def timing_report(scale: float = 1.0, r: int = 50, seed: int = 1, steps: int = 10):
    """Time mesh morphing (both methods) and basis transfer on the 2D case.

    Reference geometry (0.4, 0.4) (the densest mesh) is morphed onto
    (0.38, 0.34); the transfer stage evaluates r basis vectors of the target
    sample on the morphed reference nodes.
    """
    h = 0.02 / scale
    ref_p, tgt_p = (0.4, 0.4), (0.38, 0.34)
    gp_ref, mesh_ref = build_mesh(ELLIPTIC_HOLE, ref_p, h, seed)
    gp_tgt, mesh_tgt, fom_tgt = build_fom(ELLIPTIC_HOLE, tgt_p, h, seed)
    rom_tgt = reduction.modal_truncation(fom_tgt, r, static_enrichment=True)

    spec = build_morph_spec(mesh_ref, gp_ref, gp_tgt)
    t0 = time.time()
    fld_rbf = morph_rbf(mesh_ref, spec)
    t_rbf = time.time() - t0
    t0 = time.time()
    morph_saeh(mesh_ref, spec, steps=steps)
    t_saeh = time.time() - t0

    V_full = fem.embed_full(rom_tgt.V, rom_tgt.free_dofs, rom_tgt.n_dofs)
    t0 = time.time()
    P = transfer.build_transfer_matrix(mesh_tgt, fld_rbf.morphed_nodes)
    _ = P @ V_full
    t_transfer = time.time() - t0

    n_char_x = len(spec.prescribed_x)
    n_char_z = len(spec.prescribed_z)
    return {
        "scale": scale,
        "r": r,
        "steps": steps,
        "reference_dofs": mesh_ref.n_dofs,
        "target_dofs": mesh_tgt.n_dofs,
        "rbf_morph_s": t_rbf,
        "saeh_morph_s": t_saeh,
        "basis_transfer_s": t_transfer,
        "characteristic_nodes": {"x": n_char_x, "z": n_char_z},
        "rbf_system_sizes": fld_rbf.quality["system_sizes"],
    }
