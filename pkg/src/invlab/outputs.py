"""Artifact writing: JSON reports, plot-data CSVs and the digest manifest."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from statistics import NormalDist
from typing import Mapping

import numpy as np

MANIFEST = "manifest.json"
MANIFEST_SCHEMA = 1


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "nan", "inf", "-inf"."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def histogram_csv(z: np.ndarray, width: float = 0.25) -> str:
    """Counts of the standardized sample on bins of fixed ``width`` aligned at 0."""
    z = np.asarray(z, dtype=float)
    lo = math.floor(z.min() / width) * width
    hi = math.ceil(z.max() / width) * width
    if hi <= lo:
        hi = lo + width
    edges = lo + width * np.arange(int(round((hi - lo) / width)) + 1)
    counts, _ = np.histogram(z, bins=edges)
    e = edges.tolist()
    rows = [f"{e[j]!r},{e[j + 1]!r},{int(c)}" for j, c in enumerate(counts)]
    return "bin_left,bin_right,count\n" + "\n".join(rows) + "\n"


def qq_csv(z: np.ndarray, points: int = 199) -> str:
    """Normal quantiles against empirical quantiles at ``p = j / (points + 1)``."""
    p = np.arange(1, points + 1) / (points + 1)
    theo = [NormalDist().inv_cdf(float(x)) for x in p]
    emp = np.quantile(np.asarray(z, dtype=float), p)
    rows = [f"{t!r},{float(e)!r}" for t, e in zip(theo, emp)]
    return "theoretical,empirical\n" + "\n".join(rows) + "\n"


def variance_csv(points) -> str:
    return "n,variance\n" + "".join(f"{int(n)},{float(v)!r}\n" for n, v in points)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _archive(directory: Path) -> Path | None:
    old = directory / MANIFEST
    if not old.exists():
        return None
    k = 1
    while (directory / f"manifest.{k}.json").exists():
        k += 1
    dest = directory / f"manifest.{k}.json"
    old.rename(dest)
    return dest


def emit_outputs(files: Mapping[str, str | bytes], directory, meta: Mapping | None = None) -> dict:
    """Write ``files`` (relative path -> content) and a manifest of their digests.

    A manifest already present in ``directory`` is renamed to
    ``manifest.<k>.json`` first. Returns the new manifest.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        _archive(directory)
        entries = []
        for rel in sorted(files):
            data = files[rel]
            data = data.encode("utf-8") if isinstance(data, str) else bytes(data)
            path = directory / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            entries.append({"path": rel, "sha256": sha256(data), "bytes": len(data)})
        manifest = {"schema_version": MANIFEST_SCHEMA, **(meta or {}), "files": entries}
        (directory / MANIFEST).write_text(dumps(manifest), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write outputs under {directory}: {exc}") from exc
    return manifest


def verify_manifest(directory) -> list[str]:
    """Paths in the manifest that are missing or whose digest no longer matches."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
    bad = []
    for entry in manifest["files"]:
        path = directory / entry["path"]
        if not path.exists() or sha256(path.read_bytes()) != entry["sha256"]:
            bad.append(entry["path"])
    return bad
