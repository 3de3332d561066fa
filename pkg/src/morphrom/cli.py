"""Command-line interface.

Subcommands cover mesh generation, morphing, sample reduction, subspace-angle
comparison, model building/prediction, full experiment runs (CSV + JSON +
optional figures) and the offline timing comparison.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _cmd_mesh_gen(args):
    from . import mesh as mesh_mod
    from .experiments import build_mesh

    params = tuple(float(v) for v in args.params)
    _, mesh = build_mesh(args.case, params, args.size, args.seed)
    mesh_mod.write_mesh(mesh, args.out)
    print(f"{args.out}: {mesh.n_nodes} nodes, {mesh.n_elements} elements, "
          f"{mesh.n_dofs} DOFs")


def _cmd_morph(args):
    from . import mesh as mesh_mod
    from .morph import MorphSpec, morph_rbf, morph_saeh

    mesh = mesh_mod.read_mesh(args.ref)
    with open(args.spec) as f:
        doc = json.load(f)
    spec = MorphSpec.from_rules(mesh, doc["rules"])
    if args.method == "saeh":
        fld = morph_saeh(mesh, spec, steps=args.steps)
    else:
        fld = morph_rbf(mesh, spec, m=args.kernel_order)
    mesh_mod.write_mesh(fld.morphed_mesh(mesh), args.out)
    report = Path(args.out).with_suffix(".quality.json")
    with open(report, "w") as f:
        json.dump(fld.quality, f, indent=1)
    print(f"{args.out}: morphed with {fld.method}; quality -> {report}")


def _cmd_sample(args):
    from .experiments import build_fom
    from .prom import SamplePoint
    from .prom_io import save_sample_archive
    from .reduction import modal_truncation

    params = tuple(float(v) for v in args.params)
    gp, mesh, fom = build_fom(args.case, params, args.size, args.seed)
    rom = modal_truncation(fom, args.r, static_enrichment=args.static_enrichment)
    save_sample_archive(SamplePoint(gp, mesh, rom), args.out)
    print(f"{args.out}: r={rom.r} basis on {mesh.n_dofs} DOFs "
          f"(first eigenfrequency {rom.eigfreqs[0]:.1f} Hz)")


def _cmd_angles(args):
    from .prom import pair_angles
    from .prom_io import load_sample_archive

    a = load_sample_archive(args.a)
    b = load_sample_archive(args.b)
    th = pair_angles(a, b, method=args.method)
    doc = {
        "a": {"case": a.params.case, "p": list(a.params.p)},
        "b": {"case": b.params.case, "p": list(b.params.p)},
        "method": args.method,
        "max_angle_deg": float(th[0]),
        "angles_deg": [float(v) for v in th],
    }
    if args.out:
        with open(args.out, "w") as f:
            json.dump(doc, f, indent=1)
    print(f"max principal angle: {th[0]:.3f} deg "
          f"(p={a.params.p} vs p={b.params.p}, {args.method})")


def _cmd_build_prom(args):
    from .mesh import PARAM_BOUNDS
    from .prom import ClusterSet, Hyperparams, build_prom_model, adaptive_sample
    from .prom_io import load_sample_archive, save_prom_model

    samples = [load_sample_archive(p) for p in args.samples]
    case = samples[0].params.case
    bounds = PARAM_BOUNDS[case]
    cs = ClusterSet([list(range(len(samples)))], {}, Hyperparams())
    model = build_prom_model(
        samples, cs, args.mode, bounds, method=args.method, lam=args.ridge_lambda,
        degrade=args.degrade,
    )
    save_prom_model(model, args.out)
    cm = model.clusters[0]
    print(f"{args.out}: {len(samples)} samples, cond(R^T V) "
          f"max {max(cm.conditions):.2e}")


def _cmd_predict(args):
    from .prom_io import load_prom_model
    from .prom import predict
    from .reduction import solve_reduced_frf

    model = load_prom_model(args.model)
    p = tuple(float(v) for v in args.p)
    rom = predict(model, p)
    print(f"cluster {rom.cluster}, extrapolated={rom.extrapolated}")
    if args.freqs:
        start, stop, num = (float(v) for v in args.freqs)
        freqs = np.linspace(start, stop, int(num))
        y = solve_reduced_frf(rom, freqs)
        if args.out:
            import csv

            with open(args.out, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["freq_hz", "re", "im", "abs"])
                for fr, v in zip(freqs, y):
                    w.writerow([repr(float(fr)), repr(v.real), repr(v.imag),
                                repr(abs(v))])
            print(f"FRF written to {args.out}")
        else:
            for fr, v in list(zip(freqs, y))[:10]:
                print(f"  {fr:9.2f} Hz: {abs(v):.4e}")


def _cmd_run(args):
    from .experiments import load_experiment, run_experiment

    exp = load_experiment(args.config)
    with open(args.config) as f:
        acceptance = json.load(f).get("acceptance", {})
    if args.scale is not None:
        exp.scale = args.scale
    if args.test_points is not None:
        exp.test_points = (
            args.test_points[0] if len(args.test_points) == 1 else args.test_points
        )
    if args.budget is not None:
        exp.budget = args.budget
    methods = args.methods.split(",")
    verbose = (lambda m: print(m, flush=True)) if args.verbose else None
    bundle = run_experiment(
        exp, methods=methods, outdir=args.out, plots=args.plots,
        workers=args.workers, progress=verbose,
    )
    for m, entry in bundle["methods"].items():
        if entry.get("error"):
            print(f"{m}: FAILED ({entry['error']})")
        else:
            print(
                f"{m}: {entry['n_samples']} samples, {entry['n_clusters']} clusters, "
                f"mean MRE {entry.get('mean_mre', float('nan')):.4f}, "
                f"max MRE {entry.get('max_mre', float('nan')):.4f}"
            )
    if args.check and acceptance:
        failures = _check_acceptance(bundle, acceptance)
        for msg in failures:
            print(f"CHECK FAILED: {msg}")
        if failures:
            sys.exit(1)
        print("all configured checks passed")


def _check_acceptance(bundle, acceptance):
    failures = []
    methods = bundle["methods"]
    for m, limit in acceptance.get("mean_mre", {}).items():
        entry = methods.get(m)
        if not entry or entry.get("error"):
            failures.append(f"method {m} missing or failed")
        elif entry["mean_mre"] > limit:
            failures.append(f"{m} mean MRE {entry['mean_mre']:.4f} > {limit}")
    for m, limit in acceptance.get("max_mre", {}).items():
        entry = methods.get(m)
        if not entry or entry.get("error"):
            failures.append(f"method {m} missing or failed")
        elif entry["max_mre"] > limit:
            failures.append(f"{m} max MRE {entry['max_mre']:.4f} > {limit}")
    ratio = acceptance.get("baseline_ratio")
    if ratio:
        morph = [
            methods[m]["mean_mre"]
            for m in ("rbf", "saeh")
            if m in methods and not methods[m].get("error")
        ]
        base = methods.get("zero-pad")
        if not morph or not base or base.get("error"):
            failures.append("baseline ratio not computable")
        elif base["mean_mre"] < ratio * min(morph):
            failures.append(
                f"baseline/morph ratio {base['mean_mre'] / min(morph):.1f} < {ratio}"
            )
    cl = acceptance.get("clusters")
    if cl:
        for m in ("rbf", "saeh"):
            if m in methods and not methods[m].get("error"):
                n = methods[m]["n_clusters"]
                if not cl[0] <= n <= cl[1]:
                    failures.append(f"{m} cluster count {n} outside {cl}")
    sm = acceptance.get("samples")
    if sm:
        for m in ("rbf", "saeh"):
            if m in methods and not methods[m].get("error"):
                n = methods[m]["n_samples"]
                if not sm[0] <= n <= sm[1]:
                    failures.append(f"{m} sample count {n} outside {sm}")
    return failures


def _cmd_report(args):
    from .plots import render_report

    written = render_report(args.dir)
    for w in written:
        print(w)


def _cmd_timing(args):
    from .experiments import timing_report

    doc = timing_report(scale=args.scale, r=args.r, seed=args.seed, steps=args.steps)
    out = Path(args.out) if args.out else None
    print(json.dumps(doc, indent=1))
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "timing.json", "w") as f:
            json.dump(doc, f, indent=1)
        if args.plots:
            from .plots import plot_timing

            plot_timing(out / "timing.json", out / "timing.png")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="morphrom",
        description="Parametric reduced models by matrix interpolation "
        "across varying meshes",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="generate a mesh for a geometry case")
    p.add_argument("--case", required=True,
                   choices=["beam", "circular_hole", "elliptic_hole"])
    p.add_argument("--params", required=True, nargs="+", type=float)
    p.add_argument("--size", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mesh_gen)

    p = sub.add_parser("morph", help="morph a mesh per a displacement spec")
    p.add_argument("--ref", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--method", choices=["saeh", "rbf"], default="rbf")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--kernel-order", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_morph)

    p = sub.add_parser("sample", help="reduce one parameter point to a sample archive")
    p.add_argument("--case", required=True,
                   choices=["beam", "circular_hole", "elliptic_hole"])
    p.add_argument("--params", required=True, nargs="+", type=float)
    p.add_argument("--size", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--static-enrichment", action="store_true", default=True)
    p.add_argument("--no-static-enrichment", dest="static_enrichment",
                   action="store_false")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("angles", help="subspace angles between two sample archives")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--method", choices=["saeh", "rbf"], default="rbf")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_angles)

    p = sub.add_parser("build-prom", help="build a model from sample archives")
    p.add_argument("--samples", required=True, nargs="+")
    p.add_argument("--mode", choices=["spline1d", "ridge2d"], required=True)
    p.add_argument("--method", choices=["saeh", "rbf"], default="rbf")
    p.add_argument("--ridge-lambda", type=float, default=1e-5)
    p.add_argument("--degrade", action="store_true",
                   help="allow lower-order interpolation for few samples")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_prom)

    p = sub.add_parser("predict", help="evaluate a model at a parameter point")
    p.add_argument("--model", required=True)
    p.add_argument("--p", required=True, nargs="+", type=float)
    p.add_argument("--freqs", nargs=3, metavar=("START", "STOP", "NUM"))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("run", help="run an experiment config end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", default="rbf,saeh,zero-pad")
    p.add_argument("--scale", type=float)
    p.add_argument("--test-points", type=int, nargs="+")
    p.add_argument("--budget", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--plots", action="store_true")
    p.add_argument("--check", action="store_true",
                   help="exit nonzero when configured thresholds are breached")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render figures for a result directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("timing", help="offline-stage wall-clock comparison")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--r", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--out")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=_cmd_timing)

    args = ap.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
