"""JSON and CSV export with a provenance manifest, plus the matching importers.

Floats are written with ``repr`` precision, so JSON round trips are exact.
Complex arrays are stored as ``{"shape": [...], "re": [...], "im": [...]}``.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import subprocess
from dataclasses import asdict, fields, is_dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..emhd_limit import EmhdTrajectory, ResonanceSet
from ..evolution import IterationReport, Trajectory
from ..filtering_correctors import CorrectorState, FilteredFields
from ..oscillatory_maxwell import SourceHistory
from ..spectral_core import Lattice
from .sweep import METRICS, SweepEntry, SweepReport

__all__ = [
    "FORMATS",
    "manifest",
    "git_describe",
    "export",
    "load_json",
    "import_report",
    "import_trajectory",
    "encode_array",
    "decode_array",
]

FORMATS = ("json", "csv")


def git_describe() -> str:
    """``git describe --always --dirty`` of the source tree, or ``"unknown"``."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
            check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def manifest(config=None, tolerances: dict | None = None, **extra) -> dict:
    """Provenance: configuration hash, build revision, tolerances and package version."""
    from .. import __version__

    m = {
        "config_sha256": None if config is None else config.digest(),
        "git_describe": git_describe(),
        "package_version": __version__,
        "tolerances": dict(tolerances or {}),
    }
    m.update(extra)
    return m


# ------------------------------------------------------------------ encoding
def encode_array(a) -> dict:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"shape": list(a.shape), "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}
    return {"shape": list(a.shape), "re": a.astype(float).ravel().tolist()}


def decode_array(d: dict) -> np.ndarray:
    re = np.array(d["re"], dtype=float).reshape(d["shape"])
    if "im" in d:
        return re + 1j * np.array(d["im"], dtype=float).reshape(d["shape"])
    return re


def _lattice_dict(lat: Lattice) -> dict:
    return {"dim": lat.dim, "K": lat.K, "N": lat.N, "M": lat.M}


def _encode_dataclass(obj, skip=()) -> dict:
    out: dict[str, Any] = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if isinstance(v, Lattice):
            out[f.name] = _lattice_dict(v)
        elif isinstance(v, np.ndarray):
            out[f.name] = encode_array(v)
        elif is_dataclass(v):
            out[f.name] = _encode_dataclass(v)
        else:
            out[f.name] = v
    return out


def _payload(obj) -> tuple[str, dict]:
    if isinstance(obj, SweepReport):
        return "sweep_report", obj.to_dict()
    if isinstance(obj, ResonanceSet):
        return "resonance_set", obj.to_dict()
    if isinstance(obj, IterationReport):
        return "iteration_report", asdict(obj)
    if isinstance(obj, Trajectory):
        return "trajectory", _encode_dataclass(obj)
    if isinstance(obj, EmhdTrajectory):
        return "emhd_trajectory", _encode_dataclass(obj)
    if isinstance(obj, FilteredFields):
        return "filtered_fields", _encode_dataclass(obj)
    if isinstance(obj, CorrectorState):
        return "corrector_state", _encode_dataclass(obj)
    if isinstance(obj, (list, tuple)) and all(isinstance(o, ResonanceSet) for o in obj):
        return "resonance_sets", {"sets": [o.to_dict() for o in obj]}
    if isinstance(obj, dict):
        return "summary", obj
    raise TypeError(f"cannot export objects of type {type(obj).__name__}")


def _strided(obj, stride: int):
    """Trajectories are exported at the output stride."""
    if stride == 1 or not isinstance(obj, Trajectory):
        return obj
    sl = slice(None, None, stride)
    arrays = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, np.ndarray) and f.name != "weights":
            arrays[f.name] = v[sl]
        elif isinstance(v, SourceHistory):
            arrays[f.name] = SourceHistory(v.times[sl], v.g[sl], v.h[sl], v.q[sl])
    meta = dict(obj.metadata)
    meta["export_stride"] = stride
    arrays["metadata"] = meta
    return dataclasses.replace(obj, **arrays)


# ------------------------------------------------------------------ writers
def export(obj, out_dir: str | Path, fmt: str = "json", *, name: str | None = None, meta: dict | None = None, stride: int = 1) -> list[Path]:
    """Write ``obj`` into ``out_dir`` in ``fmt``; returns the files written.

    Every export writes ``<name>.manifest.json`` next to the data.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    obj = _strided(obj, stride)
    kind, payload = _payload(obj)
    name = name or kind
    meta = dict(meta or {})
    meta.setdefault("kind", kind)
    mpath = out / f"{name}.manifest.json"
    mpath.write_text(json.dumps(meta, indent=1, sort_keys=True))
    written = [mpath]
    if fmt == "json":
        path = out / f"{name}.json"
        path.write_text(json.dumps({"kind": kind, "manifest": meta, "data": payload}, sort_keys=True))
        return written + [path]
    path = out / f"{name}.csv"
    with path.open("w", newline="") as fh:
        _write_csv(kind, obj, payload, csv.writer(fh))
    return written + [path]


def _write_csv(kind: str, obj, payload: dict, w) -> None:
    if kind == "sweep_report":
        w.writerow(["eps", "status", *(f"err_{m}" for m in METRICS), "gauss", "divB", "weak_W", "runtime", "message"])
        for e in obj.entries:
            w.writerow([repr(e.eps), e.status, *(repr(e.errors.get(m, float("nan"))) for m in METRICS), repr(e.gauss), repr(e.divB), repr(e.weak_W), repr(e.runtime), e.message])
    elif kind in ("resonance_set", "resonance_sets"):
        sets = [obj] if kind == "resonance_set" else list(obj)
        w.writerow(["kind", "sign1", "sign2", "k", "radius", "member"])
        for s in sets:
            for m in s.members:
                w.writerow([s.kind, s.signs[0], s.signs[1], " ".join(map(str, s.k)), s.radius, " ".join(map(str, m))])
    elif kind == "iteration_report":
        names = sorted({k for d in obj.differences for k in d})
        w.writerow(["iteration", *(f"diff_{n}" for n in names), *(f"norm_{n}" for n in names)])
        for i, d in enumerate(obj.differences, start=1):
            norms = obj.norms[i] if i < len(obj.norms) else {}
            w.writerow([i, *(repr(d.get(n, float("nan"))) for n in names), *(repr(norms.get(n, float("nan"))) for n in names)])
    elif kind == "summary":
        w.writerow(["key", "value"])
        for k, v in payload.items():
            w.writerow([k, json.dumps(v)])
    else:
        # long format: one row per (array, time index, flat coefficient)
        w.writerow(["array", "time_index", "flat_index", "re", "im"])
        for key, val in payload.items():
            if isinstance(val, dict) and "shape" in val and "re" in val:
                a = decode_array(val)
                lead = a.shape[0] if a.ndim > 1 else 1
                flat = a.reshape(lead, -1) if a.ndim > 1 else a.reshape(1, -1)
                for ti, row in enumerate(flat):
                    for fi, v in enumerate(row):
                        w.writerow([key, ti, fi, repr(float(np.real(v))), repr(float(np.imag(v)))])


# ------------------------------------------------------------------ readers
def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def import_report(path: str | Path) -> SweepReport:
    """Read a sweep report written as JSON or CSV."""
    path = Path(path)
    if path.suffix == ".json":
        doc = load_json(path)
        return SweepReport.from_dict(doc["data"])
    entries = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            entries.append(
                SweepEntry(
                    eps=float(row["eps"]),
                    status=row["status"],
                    message=row["message"],
                    errors={m: float(row[f"err_{m}"]) for m in METRICS},
                    gauss=float(row["gauss"]),
                    divB=float(row["divB"]),
                    weak_W=float(row["weak_W"]),
                    runtime=float(row["runtime"]),
                )
            )
    return SweepReport(entries)


def _decode_fields(d: dict) -> dict:
    return {k: decode_array(v) if isinstance(v, dict) and "shape" in v and "re" in v else v for k, v in d.items()}


def import_trajectory(path: str | Path) -> Trajectory:
    """Rebuild a :class:`Trajectory` from its JSON export."""
    doc = load_json(path)
    if doc.get("kind") != "trajectory":
        raise ValueError(f"{path} holds a {doc.get('kind')!r}, not a trajectory")
    d = _decode_fields(doc["data"])
    lat = d.pop("lattice")
    d["lattice"] = Lattice(lat["dim"], lat["K"], lat["N"], lat["M"])
    src = _decode_fields(d.pop("sources"))
    d["sources"] = SourceHistory(np.asarray(src["times"], dtype=float), src["g"], src["h"], src["q"])
    d["weights"] = np.asarray(d["weights"], dtype=float)
    d["times"] = np.asarray(d["times"], dtype=float)
    return Trajectory(**d)
