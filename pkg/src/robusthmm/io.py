"""File formats: JSON documents for models, specs and configs; CSV and BNCF features.

Every JSON document carries ``"schema_version": 1`` and a ``"kind"``.  The
serialisation is canonical (sorted keys, two-space indent, shortest
round-trip float repr), so equal content gives equal bytes.

Model document::

    {"schema_version": 1, "kind": "models", "provenance": {...},
     "models": [{"model_id": ..., "initial": [...], "transitions": [[...]],
                 "states": [{"weights": [...],
                             "components": [{"mean": [...], "cov": [...]}]}]}]}

A diagonal covariance is a list, a full one a list of rows.  Observation
model specs are ``{"family": <class name>, <field>: ...}``; an ``Affine``
spec nests a regression assignment, a ``PmcLogSum`` may nest a noise HMM.

Feature files hold one (N, D) float32 matrix: CSV with a ``dim_0,...``
header, or BNCF (16-byte little-endian header ``BNCF``, version, D, N,
then row-major float32).
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .compensation import MapPrior, MllrPrior
from .gauss import Gaussian, Gmm
from .hmm import Hmm
from .obsmodels import FAMILIES, Affine, AffineTransform, PmcLogSum, RegressionAssignment

SCHEMA_VERSION = 1
BNCF_MAGIC = b"BNCF"
BNCF_VERSION = 1
_BNCF_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """A file does not follow its documented format."""


# --- canonical JSON -----------------------------------------------------------


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dumps(doc: dict) -> str:
    try:
        return json.dumps(_plain(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise FormatError(f"document contains a non-finite number: {exc}") from None


def write_json(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path, kind: str | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    check_header(doc, kind, str(path))
    return doc


def check_header(doc: Any, kind: str | None, where: str = "document") -> None:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"{where}: unsupported schema_version {doc.get('schema_version')!r}")
    if kind is not None and doc.get("kind") != kind:
        raise FormatError(f"{where}: expected kind {kind!r}, got {doc.get('kind')!r}")


def document(kind: str, provenance: dict | None = None, **body) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "provenance": provenance or {}, **body}


# --- models -------------------------------------------------------------------


def hmm_to_dict(hmm: Hmm) -> dict:
    return {
        "model_id": hmm.model_id,
        "initial": hmm.initial,
        "transitions": hmm.transitions,
        "states": [
            {"weights": g.weights, "components": [{"mean": c.mean, "cov": c.cov} for c in g.components]}
            for g in hmm.emissions
        ],
    }


def hmm_from_dict(d: dict) -> Hmm:
    try:
        ems = tuple(
            Gmm(s["weights"], tuple(Gaussian(c["mean"], c["cov"]) for c in s["components"]))
            for s in d["states"]
        )
        return Hmm(d["initial"], d["transitions"], ems, d.get("model_id", "hmm"))
    except KeyError as exc:
        raise FormatError(f"model is missing field {exc}") from None


def models_document(models, provenance: dict | None = None) -> dict:
    return document("models", provenance, models=[hmm_to_dict(m) for m in models])


def write_models(path, models, provenance: dict | None = None) -> None:
    write_json(path, models_document(models, provenance))


def read_models(path) -> list[Hmm]:
    return [hmm_from_dict(m) for m in read_json(path, "models")["models"]]


# --- observation model specs and technique parameters -------------------------


def _assignment_to_dict(a: RegressionAssignment) -> dict:
    out = {"transforms": [{"matrix": t.matrix, "bias_mean": t.bias_mean, "bias_cov": t.bias_cov}
                          for t in a.transforms]}
    out["mapping"] = None if a.mapping is None else [[q, k, c] for (q, k), c in sorted(a.mapping.items())]
    return out


def _assignment_from_dict(d: dict) -> RegressionAssignment:
    ts = tuple(AffineTransform(t["matrix"], t["bias_mean"], t.get("bias_cov")) for t in d["transforms"])
    mapping = d.get("mapping")
    return RegressionAssignment(ts, None if mapping is None else {(q, k): c for q, k, c in mapping})


def spec_to_dict(spec) -> dict:
    name = type(spec).__name__
    if name not in FAMILIES:
        raise FormatError(f"cannot serialise observation model {name}")
    out: dict = {"family": name}
    for f in dataclasses.fields(spec):
        v = getattr(spec, f.name)
        if isinstance(v, RegressionAssignment):
            v = _assignment_to_dict(v)
        elif isinstance(v, Hmm):
            v = hmm_to_dict(v)
        out[f.name] = v
    return out


def spec_from_dict(d: dict):
    d = dict(d)
    family = d.pop("family", None)
    if family not in FAMILIES:
        raise FormatError(f"unknown observation model family {family!r}; known: {', '.join(sorted(FAMILIES))}")
    cls = FAMILIES[family]
    if cls is Affine:
        d["assignment"] = _assignment_from_dict(d["assignment"])
    if cls is PmcLogSum and d.get("noise_hmm") is not None:
        d["noise_hmm"] = hmm_from_dict(d["noise_hmm"])
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise FormatError(f"{family}: unknown fields {sorted(unknown)}")
    return cls(**d)


def params_to_dict(params: dict) -> dict:
    out = {}
    for key, v in params.items():
        if key == "spec":
            v = spec_to_dict(v)
        elif key == "assignment":
            v = _assignment_to_dict(v)
        elif isinstance(v, (MapPrior, MllrPrior)):
            v = {f.name: getattr(v, f.name) for f in dataclasses.fields(v)}
            if isinstance(v.get("tau"), float) and np.isinf(v["tau"]):
                v["tau"] = "inf"
        out[key] = v
    return out


def params_from_dict(technique_id: str, d: dict, base_dir: Path | None = None) -> dict:
    """Decode a technique parameter block; ``data`` entries are feature file paths."""
    out = {}
    for key, v in d.items():
        if key == "spec":
            v = spec_from_dict(v)
        elif key == "assignment":
            v = _assignment_from_dict(v)
        elif key == "prior":
            if technique_id == "map":
                v = MapPrior(float(v["tau"]), v.get("means"))
            else:
                v = MllrPrior(**v)
        elif key == "data":
            base = base_dir or Path(".")
            v = [(read_features(base / p).astype(float), None) for p in v]
        elif isinstance(v, list):
            v = np.asarray(v, dtype=float)
        out[key] = v
    return out


# --- features -----------------------------------------------------------------


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float32)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise FormatError(f"features must be a non-empty (N, D) matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise FormatError("features must be finite")
    return a


def write_csv(path, x) -> None:
    a = _as_matrix(x)
    header = ",".join(f"dim_{i}" for i in range(a.shape[1]))
    # 9 significant digits reproduce every float32 exactly
    rows = [",".join(format(float(v), ".9g") for v in row) for row in a]
    Path(path).write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")


def read_csv(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty feature file")
    header = lines[0].split(",")
    if header != [f"dim_{i}" for i in range(len(header))]:
        raise FormatError(f"{path}: header must be dim_0,...,dim_{{D-1}}")
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:] if ln]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: every row needs {len(header)} values")
    return _as_matrix(rows)


def write_bncf(path, x) -> None:
    a = _as_matrix(x)
    n, d = a.shape
    Path(path).write_bytes(_BNCF_HEADER.pack(BNCF_MAGIC, BNCF_VERSION, d, n) + a.astype("<f4").tobytes())


def read_bncf(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _BNCF_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, d, n = _BNCF_HEADER.unpack_from(raw)
    if magic != BNCF_MAGIC or version != BNCF_VERSION:
        raise FormatError(f"{path}: not a version-{BNCF_VERSION} BNCF file")
    body = raw[_BNCF_HEADER.size:]
    if len(body) != 4 * n * d:
        raise FormatError(f"{path}: expected {n}x{d} float32 values, found {len(body)} bytes")
    return _as_matrix(np.frombuffer(body, dtype="<f4").reshape(n, d))


FEATURE_SUFFIX = {"csv": ".csv", "bin": ".bncf"}


def write_features(path, x, fmt: str = "csv") -> None:
    if fmt == "csv":
        write_csv(path, x)
    elif fmt == "bin":
        write_bncf(path, x)
    else:
        raise FormatError(f"unknown feature format {fmt!r}")


def read_features(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".bncf":
        return read_bncf(path)
    return read_csv(path)
