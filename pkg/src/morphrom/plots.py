"""Report figures rendered from experiment result files.

Reads the delimited output (results.csv, frf_*.csv) and summary.json of a run
directory and writes PNG figures next to them.  The CSV remains the primary
contract; figures are a convenience rendering of the same data.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

METHOD_STYLE = {
    "rbf": {"color": "#1f77b4", "label": "RBF morphing"},
    "saeh": {"color": "#2ca02c", "label": "spring-analogy morphing"},
    "zero-pad": {"color": "#d62728", "label": "zero-padding baseline"},
    "zero_pad": {"color": "#d62728", "label": "zero-padding baseline"},
    "fom": {"color": "black", "label": "full-order model"},
}

_DPI = 150


def _read_results(path):
    rows = []
    with open(path) as f:
        for row in csv.DictReader(f):
            rows.append(row)
    if not rows:
        return [], [], {}
    dim = 2 if "p2" in rows[0] else 1
    by_method = {}
    for row in rows:
        p = tuple(float(row[f"p{k + 1}"]) for k in range(dim))
        by_method.setdefault(row["method"], []).append((p, float(row["mre"])))
    return dim, by_method


def plot_mre_sweep(results_csv, summary, out_png):
    """Mean relative error over a 1D parameter sweep, one curve per method."""
    dim, by_method = _read_results(results_csv)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for m, rows in sorted(by_method.items()):
        rows = sorted(rows)
        x = [p[0] for p, _ in rows]
        e = [max(v, 1e-16) for _, v in rows]
        style = METHOD_STYLE.get(m, {})
        ax.semilogy(x, e, lw=1.4, color=style.get("color"), label=style.get("label", m))
    for m, entry in summary.get("methods", {}).items():
        pts = entry.get("sample_points") or []
        if pts and m == sorted(summary["methods"])[0]:
            ax.plot(
                [p[0] for p in pts],
                [ax.get_ylim()[0] * 1.3] * len(pts),
                "k|",
                ms=8,
                label="sample points",
            )
    ax.set_xlabel("parameter [m]")
    ax.set_ylabel("mean relative error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)


def plot_mre_heatmap(results_csv, summary, outdir):
    """One error heatmap per method for 2D parameter studies."""
    dim, by_method = _read_results(results_csv)
    outs = []
    for m, rows in sorted(by_method.items()):
        xs = sorted({p[0] for p, _ in rows})
        zs = sorted({p[1] for p, _ in rows})
        grid = np.full((len(zs), len(xs)), np.nan)
        for (x, z), e in rows:
            grid[zs.index(z), xs.index(x)] = e
        fig, ax = plt.subplots(figsize=(5.4, 4.4))
        im = ax.imshow(
            np.log10(np.maximum(grid, 1e-16)),
            origin="lower",
            extent=(min(xs), max(xs), min(zs), max(zs)),
            aspect="auto",
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label="log10 mean relative error")
        entry = summary.get("methods", {}).get(m, {})
        pts = entry.get("sample_points") or []
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "w.", ms=3)
        style = METHOD_STYLE.get(m, {})
        ax.set_title(style.get("label", m), fontsize=10)
        ax.set_xlabel("parameter 1 [m]")
        ax.set_ylabel("parameter 2 [m]")
        fig.tight_layout()
        out = Path(outdir) / f"mre_heatmap_{m.replace('-', '_')}.png"
        fig.savefig(out, dpi=_DPI)
        plt.close(fig)
        outs.append(out)
    return outs


def plot_samples_clusters(summary, out_png):
    """Sample locations colored by cluster, for the first morph method."""
    methods = summary.get("methods", {})
    name = next((m for m in ("rbf", "saeh") if m in methods and methods[m].get("clusters")), None)
    if name is None:
        return None
    entry = methods[name]
    pts = np.array(entry["sample_points"], dtype=float)
    clusters = entry["clusters"]
    fig, ax = plt.subplots(figsize=(7.0, 2.8 if pts.shape[1] == 1 else 4.6))
    cmap = plt.get_cmap("tab10")
    for c, members in enumerate(clusters):
        sel = pts[members]
        if pts.shape[1] == 1:
            ax.plot(sel[:, 0], np.full(len(sel), c), "o", ms=5, color=cmap(c % 10))
        else:
            ax.plot(sel[:, 0], sel[:, 1], "o", ms=5, color=cmap(c % 10))
    ax.set_xlabel("parameter 1 [m]")
    ax.set_ylabel("cluster" if pts.shape[1] == 1 else "parameter 2 [m]")
    ax.set_title(f"{len(pts)} samples, {len(clusters)} clusters ({name})", fontsize=10)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)
    return out_png


def plot_frf(frf_csv, out_png):
    """Magnitude FRF overlay of the full model and the predicted models."""
    with open(frf_csv) as f:
        rows = list(csv.DictReader(f))
    freqs = np.array([float(r["freq_hz"]) for r in rows])
    series = {}
    for key in rows[0]:
        if key.endswith("_re"):
            base = key[:-3]
            re = np.array([float(r[f"{base}_re"]) for r in rows])
            im = np.array([float(r[f"{base}_im"]) for r in rows])
            series[base] = np.abs(re + 1j * im)
    fig, ax = plt.subplots(figsize=(7.6, 4.2))
    for base, mag in series.items():
        style = METHOD_STYLE.get(base, {})
        lw = 1.8 if base == "fom" else 1.0
        ax.semilogy(
            freqs, np.maximum(mag, 1e-22), lw=lw,
            color=style.get("color"), label=style.get("label", base),
        )
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("|output displacement| [m]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)
    return out_png


def plot_timing(timing_json, out_png):
    """Bar chart of the offline-stage wall-clock times."""
    with open(timing_json) as f:
        doc = json.load(f)
    stages = [
        ("RBF morph", doc["rbf_morph_s"]),
        ("spring-analogy morph", doc["saeh_morph_s"]),
        ("basis transfer", doc["basis_transfer_s"]),
    ]
    fig, ax = plt.subplots(figsize=(5.4, 3.4))
    ax.bar([s for s, _ in stages], [t for _, t in stages], color="#1f77b4")
    ax.set_ylabel("wall-clock time [s]")
    ax.set_title(
        f"reference {doc['reference_dofs']} DOFs, r={doc['r']}, "
        f"{doc['steps']} increments",
        fontsize=9,
    )
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)
    return out_png


def render_report(outdir):
    """Render every figure supported by the files present in `outdir`."""
    outdir = Path(outdir)
    figdir = outdir / "figures"
    figdir.mkdir(exist_ok=True)
    written = []
    summary = {}
    if (outdir / "summary.json").exists():
        with open(outdir / "summary.json") as f:
            summary = json.load(f)
    results_csv = outdir / "results.csv"
    if results_csv.exists():
        with open(results_csv) as f:
            header = f.readline()
        if ",p2," in header or header.startswith("p1,p2"):
            written.extend(plot_mre_heatmap(results_csv, summary, figdir))
        else:
            out = figdir / "mre_sweep.png"
            plot_mre_sweep(results_csv, summary, out)
            written.append(out)
    if summary:
        out = plot_samples_clusters(summary, figdir / "samples_clusters.png")
        if out:
            written.append(out)
    for frf in sorted(outdir.glob("frf_*.csv")):
        out = figdir / (frf.stem + ".png")
        plot_frf(frf, out)
        written.append(out)
    if (outdir / "timing.json").exists():
        written.append(plot_timing(outdir / "timing.json", figdir / "timing.png"))
    return written
