"""JSON serialization for posets, sheaves, cochains, datasets and results.

Every document carries ``"schema": "sheaflab-v1"``. Files are written with
sorted keys and ids in canonical order, and floats use Python's shortest
round-trip representation, so identical inputs give identical bytes.
Model checkpoints are the one binary format: little-endian float64 arrays
concatenated in a ``.bin`` file next to a JSON sidecar with names and shapes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError, SchemaVersionMismatch, SheafLabError, ValidationError
from .poset import Poset, SimplicialComplex, natural_key, simplicial_from_facets
from .sheaf import Sheaf

SCHEMA_VERSION = "sheaflab-v1"


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _write(path, doc: dict) -> None:
    Path(path).write_text(dumps({"schema": SCHEMA_VERSION, **doc}))


def _parse(text: str, what: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{what}: {e}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{what}: expected a JSON object")
    version = doc.get("schema")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{what}: schema {version!r}, expected {SCHEMA_VERSION!r}")
    return doc


def _read(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(str(e)) from None
    return _parse(text, str(path))


def _field(doc: dict, key: str, what: str):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise ParseError(f"{what}: missing field {key!r}") from None


# -- complexes -------------------------------------------------------------


def complex_to_dict(P: Poset) -> dict:
    rank = P.rank if P.is_graded else {}
    elements = [{"id": s, **({"rank": rank[s]} if s in rank else {})} for s in P.elements]
    coverings = []
    for s, t in P.covers:
        c = {"from": s, "to": t}
        if (s, t) in P.signs:
            c["sign"] = int(P.signs[(s, t)])
        coverings.append(c)
    doc = {"kind": P.kind, "elements": elements, "coverings": coverings}
    if P.vertex_order is not None:
        doc["vertex_order"] = list(P.vertex_order)
    return doc


def complex_from_dict(doc: dict) -> Poset:
    what = "complex"
    try:
        elems = [str(_field(e, "id", what)) for e in _field(doc, "elements", what)]
        covs = [(str(_field(c, "from", what)), str(_field(c, "to", what))) for c in _field(doc, "coverings", what)]
        signs = {(str(c["from"]), str(c["to"])): int(c["sign"]) for c in doc["coverings"] if "sign" in c}
    except (TypeError, ValueError) as e:
        raise ParseError(f"{what}: {e}") from None
    try:
        P = Poset(elems, covs, signs=signs or None, kind=doc.get("kind", "poset"), vertex_order=doc.get("vertex_order"))
    except (SheafLabError, KeyError, ValueError) as e:
        raise ValidationError(f"{what}: {e}") from None
    stated = {str(e["id"]): e["rank"] for e in doc["elements"] if "rank" in e}
    if stated:
        try:
            rank = P.rank
        except SheafLabError as e:
            raise ValidationError(f"{what}: {e}") from None
        bad = [s for s, r in stated.items() if rank[s] != r]
        if bad:
            raise ValidationError(f"{what}: stated rank of {bad[0]!r} is {stated[bad[0]]}, computed {rank[bad[0]]}")
    return P


def save_complex(P: Poset | SimplicialComplex, path) -> None:
    if isinstance(P, SimplicialComplex):
        P = P.poset
    _write(path, complex_to_dict(P))


def load_complex(path) -> Poset:
    return complex_from_dict(_read(path))


def as_simplicial(P: Poset) -> SimplicialComplex:
    """Rebuild the simplicial complex behind a simplicial poset from its vertex order."""
    if P.kind not in ("simplicial", "graph") or P.vertex_order is None:
        raise ValidationError("not a simplicial poset with a vertex order")
    return simplicial_from_facets([s.split(",") for s in P.elements], vertex_order=P.vertex_order)


# -- sheaves ----------------------------------------------------------------


def sheaf_to_dict(F: Sheaf, base_ref: str | None = None) -> dict:
    doc: dict[str, Any] = {
        "base": complex_to_dict(F.base),
        "stalks": {s: F.stalk_dim[s] for s in F.base.elements},
        "restrictions": [
            {"from": s, "to": t, "matrix": F.restriction[(s, t)].tolist()} for s, t in F.base.covers
        ],
    }
    if base_ref is not None:
        doc["base_ref"] = base_ref
    if F.inner:
        doc["inner_products"] = {
            s: F.inner[s].tolist() for s in sorted(F.inner, key=natural_key)
        }
    return doc


def sheaf_from_dict(doc: dict, base: Poset | None = None) -> Sheaf:
    what = "sheaf"
    if base is None:
        base = complex_from_dict(_field(doc, "base", what))
    stalks = {str(k): int(v) for k, v in _field(doc, "stalks", what).items()}
    unknown = [s for s in stalks if s not in base]
    if unknown:
        raise ValidationError(f"{what}: stalk given for unknown element {unknown[0]!r}")
    res = {}
    for r in _field(doc, "restrictions", what):
        s, t = str(_field(r, "from", what)), str(_field(r, "to", what))
        if s not in base or t not in base or not base.is_cover(s, t):
            raise ValidationError(f"{what}: restriction {s}->{t} is not a covering of the base")
        m = np.asarray(_field(r, "matrix", what), dtype=float)
        want = (stalks.get(t, 0), stalks.get(s, 0))
        if m.size == 0 and 0 in want:
            m = m.reshape(want)
        if m.shape != want:
            raise ValidationError(f"{what}: restriction {s}->{t} has shape {m.shape}, expected {want}")
        res[(s, t)] = m
    inner = {}
    for s, v in doc.get("inner_products", {}).items():
        m = np.asarray(v, dtype=float)
        d = stalks.get(s, 0)
        if m.size == 0 and d == 0:
            m = m.reshape(0, 0)
        if m.shape != (d, d):
            raise ValidationError(f"{what}: inner product at {s!r} has shape {m.shape}, expected {(d, d)}")
        inner[s] = m
    return Sheaf(base, stalks, res, inner or None)


def save_sheaf(F: Sheaf, path, base_ref: str | None = None) -> None:
    _write(path, sheaf_to_dict(F, base_ref))


def load_sheaf(path, base: Poset | None = None) -> Sheaf:
    return sheaf_from_dict(_read(path), base)


# -- cochains and results --------------------------------------------------


def save_cochain(x: np.ndarray, path, k: int, labels: list[str] | None = None) -> None:
    doc = {"grading": int(k), "values": np.asarray(x, dtype=float).tolist()}
    if labels is not None:
        doc["labels"] = list(labels)
    _write(path, doc)


def load_cochain(path) -> tuple[np.ndarray, int]:
    doc = _read(path)
    vals = np.asarray(_field(doc, "values", "cochain"), dtype=float)
    return vals, int(_field(doc, "grading", "cochain"))


def to_jsonable(obj):
    """Convert numpy scalars/arrays and tuples into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def save_results(results: dict, path) -> None:
    _write(path, {"results": to_jsonable(results)})


def load_results(path) -> dict:
    return _field(_read(path), "results", "results")


# -- trajectory datasets (JSON lines) --------------------------------------


def save_dataset(data, path) -> None:
    """First line: header with parameters; then one ``{nodes, region, label}`` per line."""
    lines = [json.dumps({"schema": SCHEMA_VERSION, "params": to_jsonable(data.params)}, sort_keys=True)]
    for t in data.trajectories:
        lines.append(json.dumps({"nodes": list(t.nodes), "region": t.region, "label": t.label}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path):
    from .trajectory import Trajectory, TrajectoryDataset

    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty dataset file")
    head = _parse(lines[0], str(path))
    out = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(Trajectory([str(v) for v in rec["nodes"]], str(rec["region"]), str(rec["label"])))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"{path}:{n}: {e}") from None
    return TrajectoryDataset(out, head.get("params", {}))


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(params: dict[str, np.ndarray], path, meta: dict | None = None) -> None:
    """Write ``path`` (``.bin``, little-endian float64) and ``path + '.json'``."""
    names = sorted(params)
    blob = b"".join(np.asarray(params[n], dtype="<f8").tobytes() for n in names)
    Path(path).write_bytes(blob)
    side = {
        "arrays": [{"name": n, "shape": list(np.shape(params[n]))} for n in names],
        "meta": to_jsonable(meta or {}),
    }
    _write(str(path) + ".json", side)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    side = _read(str(path) + ".json")
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    out, pos = {}, 0
    for a in _field(side, "arrays", "checkpoint"):
        shape = tuple(a["shape"])
        n = int(np.prod(shape))
        if pos + n > raw.size:
            raise ValidationError(f"checkpoint {path} is shorter than its sidecar describes")
        out[a["name"]] = raw[pos : pos + n].reshape(shape).astype(np.float64)
        pos += n
    if pos != raw.size:
        raise ValidationError(f"checkpoint {path} has {raw.size - pos} trailing values")
    return out, side.get("meta", {})
