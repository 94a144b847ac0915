"""File formats for rigs, targets, weights, reports and spectral caches.

Text documents are JSON written in a fixed layout (key order, one array row
per line) so identical content gives identical bytes. Floats use Python's
shortest round-trip representation, so text round trips are lossless.
Binary blocks are little-endian IEEE-754 float64. See ``docs/formats.md``
for the byte-level schema.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .model import BlendshapeModel, ModelError, validate_model
from .spectral import SpectralCache, assemble

__all__ = [
    "FORMAT_VERSION",
    "FormatError",
    "StaleCacheError",
    "model_hash",
    "read_cache",
    "read_report",
    "read_rig",
    "read_target",
    "read_weights",
    "write_cache",
    "write_report",
    "write_rig",
    "write_target",
    "write_weights",
]

FORMAT_VERSION = 1
CACHE_MAGIC = b"QRIGSPEC"
_CACHE_HEADER = struct.Struct("<8sI32sQQ")
_CACHE_RECORD = struct.Struct("<dddd")
_LE_F64 = np.dtype("<f8")


class FormatError(ValueError):
    """Malformed or unsupported file content."""


class StaleCacheError(FormatError):
    """The spectral cache was built for a different model."""


# --- helpers -----------------------------------------------------------------

def _num(x):
    return json.dumps(float(x), allow_nan=False)


def _row(values):
    return "[" + ", ".join(_num(x) for x in values) + "]"


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _load_json(path, kind):
    text = Path(path).read_text(encoding="utf-8")

    def reject_constant(name):
        raise FormatError(f"{path}: non-finite constant {name} is not allowed")

    try:
        doc = json.loads(text, parse_constant=reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    if doc.get("format") != kind:
        raise FormatError(f"{path}: field 'format' must be {kind!r}, got {doc.get('format')!r}")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {version!r} "
                          f"(this reader supports {FORMAT_VERSION})")
    return doc


def _field(doc, name, path):
    if name not in doc:
        raise FormatError(f"{path}: missing field {name!r}")
    return doc[name]


def _int_field(doc, name, path):
    val = _field(doc, name, path)
    if isinstance(val, bool) or not isinstance(val, int) or val < 0:
        raise FormatError(f"{path}: field {name!r} must be a non-negative integer")
    return val


def _floats(values, name, length, path):
    if not isinstance(values, list):
        raise FormatError(f"{path}: field {name!r} must be an array")
    if len(values) != length:
        raise FormatError(f"{path}: field {name!r} has {len(values)} entries, expected {length}")
    for i, x in enumerate(values):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise FormatError(f"{path}: field {name!r} entry {i} is not a number")
    return np.array(values, dtype=np.float64)


# --- model hash --------------------------------------------------------------

def model_hash(model: BlendshapeModel) -> bytes:
    """SHA-256 over the canonical little-endian encoding of the rig."""
    h = hashlib.sha256(b"quadrig-model-v1")
    h.update(struct.pack("<QQQ", model.n_coords, model.n_blendshapes, model.n_pairs))
    h.update(model.neutral.astype(_LE_F64).tobytes())
    h.update(np.ascontiguousarray(model.deltas, dtype=_LE_F64).tobytes())
    for j, k, off in model.corrective_pairs:
        h.update(struct.pack("<QQ", j, k))
        h.update(off.astype(_LE_F64).tobytes())
    return h.digest()


# --- rig ---------------------------------------------------------------------

def _sidecar_name(path):
    return Path(path).with_suffix(".bin").name


def write_rig(model: BlendshapeModel, path, sidecar: bool = False) -> None:
    """Write ``model`` as a rig document.

    With ``sidecar`` the arrays go to ``<stem>.bin`` next to ``path``:
    neutral, then deltas row-major, then each corrective's offsets in pair
    order, all little-endian float64.
    """
    violations = validate_model(model)
    if violations:
        raise ModelError(violations)
    path = Path(path)
    lines = [
        "{",
        '  "format": "quadrig-rig",',
        f'  "format_version": {FORMAT_VERSION},',
        f'  "n_vertices": {model.n_vertices},',
        f'  "n_blendshapes": {model.n_blendshapes},',
    ]
    if sidecar:
        blob = b"".join(
            [model.neutral.astype(_LE_F64).tobytes(),
             np.ascontiguousarray(model.deltas, dtype=_LE_F64).tobytes()]
            + [p.offsets.astype(_LE_F64).tobytes() for p in model.corrective_pairs])
        name = _sidecar_name(path)
        (path.parent / name).write_bytes(blob)
        lines.append('  "storage": "sidecar",')
        lines.append(f'  "sidecar": {{"file": {json.dumps(name)}, '
                     f'"sha256": "{hashlib.sha256(blob).hexdigest()}"}},')
        pairs = [f'    {{"j": {p.j}, "k": {p.k}}}' for p in model.corrective_pairs]
    else:
        lines.append('  "storage": "inline",')
        lines.append(f'  "neutral": {_row(model.neutral)},')
        rows = [f"    {_row(r)}" for r in model.deltas]
        lines.append('  "deltas": [')
        lines.append(",\n".join(rows))
        lines.append("  ],")
        pairs = [f'    {{"j": {p.j}, "k": {p.k}, "offsets": {_row(p.offsets)}}}'
                 for p in model.corrective_pairs]
    if pairs:
        lines.append('  "correctives": [')
        lines.append(",\n".join(pairs))
        lines.append("  ]")
    else:
        lines.append('  "correctives": []')
    lines.append("}")
    _write_text(path, "\n".join(lines) + "\n")


def _pair_indices(entry, idx, path):
    if not isinstance(entry, dict):
        raise FormatError(f"{path}: field 'correctives' entry {idx} must be an object")
    out = []
    for key in ("j", "k"):
        val = entry.get(key)
        if isinstance(val, bool) or not isinstance(val, int):
            raise FormatError(f"{path}: field 'correctives' entry {idx} needs integer {key!r}")
        out.append(val)
    return out


def read_rig(path) -> BlendshapeModel:
    path = Path(path)
    doc = _load_json(path, "quadrig-rig")
    n = _int_field(doc, "n_vertices", path)
    m = _int_field(doc, "n_blendshapes", path)
    n3 = 3 * n
    storage = _field(doc, "storage", path)
    corr = _field(doc, "correctives", path)
    if not isinstance(corr, list):
        raise FormatError(f"{path}: field 'correctives' must be an array")
    if storage == "inline":
        neutral = _floats(_field(doc, "neutral", path), "neutral", n3, path)
        rows = _field(doc, "deltas", path)
        if not isinstance(rows, list) or len(rows) != n3:
            got = len(rows) if isinstance(rows, list) else "no"
            raise FormatError(f"{path}: field 'deltas' has {got} rows, expected {n3}")
        deltas = np.empty((n3, m))
        for r, row in enumerate(rows):
            deltas[r] = _floats(row, f"deltas[{r}]", m, path)
        pairs = []
        for idx, entry in enumerate(corr):
            j, k = _pair_indices(entry, idx, path)
            off = _floats(entry.get("offsets"), f"correctives[{idx}].offsets", n3, path)
            pairs.append((j, k, off))
    elif storage == "sidecar":
        side = _field(doc, "sidecar", path)
        if not isinstance(side, dict) or not isinstance(side.get("file"), str):
            raise FormatError(f"{path}: field 'sidecar' must name a file")
        blob_path = path.parent / side["file"]
        try:
            blob = blob_path.read_bytes()
        except OSError as exc:
            raise FormatError(f"{path}: cannot read sidecar {blob_path}: {exc}") from None
        if hashlib.sha256(blob).hexdigest() != side.get("sha256"):
            raise FormatError(f"{path}: sidecar {blob_path} does not match its sha256")
        expected = 8 * (n3 + n3 * m + n3 * len(corr))
        if len(blob) != expected:
            raise FormatError(f"{path}: sidecar has {len(blob)} bytes, expected {expected}")
        data = np.frombuffer(blob, dtype=_LE_F64).astype(np.float64)
        neutral = data[:n3]
        deltas = data[n3:n3 + n3 * m].reshape(n3, m)
        base = n3 + n3 * m
        pairs = []
        for idx, entry in enumerate(corr):
            j, k = _pair_indices(entry, idx, path)
            pairs.append((j, k, data[base + idx * n3: base + (idx + 1) * n3]))
    else:
        raise FormatError(f"{path}: field 'storage' must be 'inline' or 'sidecar'")
    model = BlendshapeModel(neutral, deltas, pairs)
    violations = validate_model(model)
    if violations:
        raise FormatError(f"{path}: {ModelError(violations)}")
    if list(model.pair_index.tolist()) != [list(_pair_indices(e, i, path))
                                           for i, e in enumerate(corr)]:
        raise FormatError(f"{path}: field 'correctives' must be sorted by (j, k)")
    return model


# --- target and weights ------------------------------------------------------

def write_target(target, path) -> None:
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 1 or target.shape[0] % 3:
        raise FormatError("target must be a flat vector of 3n coordinates")
    _write_text(path, "{\n"
                '  "format": "quadrig-target",\n'
                f'  "format_version": {FORMAT_VERSION},\n'
                f'  "n_vertices": {target.shape[0] // 3},\n'
                f'  "coords": {_row(target)}\n'
                "}\n")


def read_target(path) -> np.ndarray:
    doc = _load_json(path, "quadrig-target")
    n = _int_field(doc, "n_vertices", path)
    return _floats(_field(doc, "coords", path), "coords", 3 * n, path)


def write_weights(w, path) -> None:
    w = np.asarray(w, dtype=np.float64)
    _write_text(path, "{\n"
                '  "format": "quadrig-weights",\n'
                f'  "format_version": {FORMAT_VERSION},\n'
                f'  "n_blendshapes": {w.shape[0]},\n'
                f'  "weights": {_row(w)}\n'
                "}\n")


def read_weights(path) -> np.ndarray:
    """Read a weights document, or a plain text file of whitespace-separated numbers."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = _load_json(path, "quadrig-weights")
        m = _int_field(doc, "n_blendshapes", path)
        return _floats(_field(doc, "weights", path), "weights", m, path)
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        for tok in line.split("#", 1)[0].split():
            try:
                values.append(float(tok))
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: {tok!r} is not a number") from None
            if not np.isfinite(values[-1]):
                raise FormatError(f"{path}: line {lineno}: non-finite weight {tok!r}")
    return np.array(values, dtype=np.float64)


# --- reports -----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_report(report: dict, path) -> None:
    """Write a report mapping as an indented JSON document with a format header."""
    doc = {"format": "quadrig-report", "format_version": FORMAT_VERSION}
    doc.update(_jsonable(report))
    _write_text(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")


def read_report(path) -> dict:
    return _load_json(path, "quadrig-report")


# --- spectral cache ----------------------------------------------------------

def write_cache(cache: SpectralCache, model: BlendshapeModel, path) -> None:
    """Binary cache: header (magic, version, model hash, n_coords, m) then one
    ``(index, lambda_min, lambda_max, sigma)`` float64 record per coordinate."""
    if not cache.has_spectra:
        raise ValueError("cache has no spectra to write")
    parts = [_CACHE_HEADER.pack(CACHE_MAGIC, FORMAT_VERSION, model_hash(model),
                                cache.n_coords, cache.n_blendshapes)]
    for i in range(cache.n_coords):
        parts.append(_CACHE_RECORD.pack(float(i), cache.lambda_min[i], cache.lambda_max[i],
                                        cache.sigma[i]))
    tmp = f"{path}.tmp"
    Path(tmp).write_bytes(b"".join(parts))
    os.replace(tmp, path)


def read_cache(path, model: BlendshapeModel) -> SpectralCache:
    """Load spectra for ``model``; raises :class:`StaleCacheError` on hash mismatch."""
    blob = Path(path).read_bytes()
    if len(blob) < _CACHE_HEADER.size:
        raise FormatError(f"{path}: truncated cache header")
    magic, version, digest, n_coords, m = _CACHE_HEADER.unpack_from(blob)
    if magic != CACHE_MAGIC:
        raise FormatError(f"{path}: not a spectral cache (bad magic)")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    if digest != model_hash(model):
        raise StaleCacheError(f"{path}: cache was built for a different model")
    expected = _CACHE_HEADER.size + n_coords * _CACHE_RECORD.size
    if len(blob) != expected:
        raise FormatError(f"{path}: cache has {len(blob)} bytes, expected {expected}")
    recs = np.frombuffer(blob, dtype=np.dtype([("i", "<f8"), ("lmin", "<f8"),
                                               ("lmax", "<f8"), ("sigma", "<f8")]),
                         offset=_CACHE_HEADER.size)
    if not np.array_equal(recs["i"], np.arange(n_coords, dtype=np.float64)):
        raise FormatError(f"{path}: cache records out of order")
    base = assemble(model)
    lam_min = recs["lmin"].astype(np.float64)
    lam_max = recs["lmax"].astype(np.float64)
    sigma = recs["sigma"].astype(np.float64)
    for a in (lam_min, lam_max, sigma):
        a.setflags(write=False)
    return SpectralCache(base.n_blendshapes, base.pair_index, base.half_values,
                         lam_min, lam_max, sigma)
