"""Serialization of sample archives and parametric reduced models.

Sample archives bundle mesh + geometry + reduced system in one .npz so the
command-line tools can compare and assemble models from files.  Model files
store a versioned JSON header plus binary operator blobs; the entrywise
predictor is rebuilt deterministically from the stored operators on load.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .mesh import GeometryParams, Mesh
from .prom import ClusterModel, PromModel, SamplePoint, fit_interpolant, _pack_ops
from .reduction import RomSample

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for unreadable or incompatible model/sample files."""


def _mesh_to_json(mesh: Mesh) -> str:
    return json.dumps(
        {
            "nodes": [[float(x), float(z)] for x, z in mesh.nodes],
            "elements": [[int(i) for i in el] for el in mesh.elements],
            "groups": {k: [int(i) for i in v] for k, v in mesh.groups.items()},
            "meta": mesh.meta,
        }
    )


def _mesh_from_json(doc: str) -> Mesh:
    d = json.loads(doc)
    return Mesh(
        np.array(d["nodes"], dtype=float),
        np.array(d["elements"], dtype=np.int64),
        {k: [int(i) for i in v] for k, v in d["groups"].items()},
        d.get("meta", {}),
    )


def save_sample_archive(sp: SamplePoint, path):
    rom = sp.rom
    np.savez_compressed(
        path,
        format_version=np.array(FORMAT_VERSION),
        kind=np.array("sample"),
        case=np.array(sp.params.case),
        p=np.array(sp.params.p, dtype=float),
        mesh_json=np.array(_mesh_to_json(sp.mesh)),
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
        rom_meta=np.array(json.dumps(rom.meta)),
    )


def load_sample_archive(path) -> SamplePoint:
    with np.load(path, allow_pickle=False) as z:
        if str(z.get("kind", "")) != "sample":
            raise ModelFormatError(f"{path}: not a sample archive")
        params = GeometryParams(str(z["case"]), tuple(float(v) for v in z["p"]))
        mesh = _mesh_from_json(str(z["mesh_json"]))
        rom = RomSample(
            p=params.p,
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
            meta=json.loads(str(z["rom_meta"])),
        )
    return SamplePoint(params, mesh, rom)


def save_prom_model(model: PromModel, path):
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "prom",
        "mode": model.mode,
        "method": model.method,
        "bounds": [list(b) for b in model.bounds],
        "r": model.r,
        "case": model.case,
        "meta": model.meta,
        "clusters": [
            {
                "sample_ids": [int(i) for i in cm.sample_ids],
                "retained_ids": [int(i) for i in cm.retained_ids],
                "params": [list(p) for p in cm.params],
                "reference_id": int(cm.reference_id),
                "conditions": [float(c) for c in cm.conditions],
                "rejected": cm.rejected,
                "predictor_mode": cm.predictor.mode,
            }
            for cm in model.clusters
        ],
    }
    arrays = {"header": np.array(json.dumps(header))}
    for i, cm in enumerate(model.clusters):
        arrays[f"c{i}_R"] = cm.R
        arrays[f"c{i}_T"] = np.stack(cm.T) if cm.T else np.zeros((0, model.r, model.r))
        arrays[f"c{i}_ops"] = np.vstack([_pack_ops(o) for o in cm.transformed])
    np.savez_compressed(path, **arrays)


def load_prom_model(path) -> PromModel:
    from .prom import _unpack_ops

    with np.load(path, allow_pickle=False) as z:
        if "header" not in z:
            raise ModelFormatError(f"{path}: missing model header")
        header = json.loads(str(z["header"]))
        if header.get("kind") != "prom":
            raise ModelFormatError(f"{path}: not a parametric model file")
        if header.get("format_version", 0) > FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: format version {header['format_version']} "
                f"newer than supported {FORMAT_VERSION}"
            )
        r = int(header["r"])
        clusters = []
        for i, cdoc in enumerate(header["clusters"]):
            ops_packed = z[f"c{i}_ops"]
            transformed = [_unpack_ops(row, r) for row in ops_packed]
            predictor = fit_interpolant(
                [tuple(p) for p in cdoc["params"]],
                transformed,
                header["mode"],
                header["bounds"],
                degrade=True,
            )
            clusters.append(
                ClusterModel(
                    sample_ids=cdoc["sample_ids"],
                    retained_ids=cdoc["retained_ids"],
                    params=[tuple(p) for p in cdoc["params"]],
                    reference_id=cdoc["reference_id"],
                    R=z[f"c{i}_R"],
                    T=list(z[f"c{i}_T"]),
                    transformed=transformed,
                    conditions=cdoc["conditions"],
                    predictor=predictor,
                    rejected=cdoc.get("rejected", []),
                )
            )
    return PromModel(
        clusters,
        header["mode"],
        header["method"],
        [tuple(b) for b in header["bounds"]],
        r,
        case=header.get("case", ""),
        meta=header.get("meta", {}),
    )
