"""JSON + raw binary bundles for models and simulation truth.

A bundle ``name`` is two files:

* ``name.json``: manifest with ``format``, ``version``, free-form ``meta``
  and an ``arrays`` table mapping each array name to
  ``{"dtype", "shape", "offset", "nbytes"}``.
* ``name.bin``: the arrays back to back, each stored little-endian in
  column-major (Fortran) order. ``dtype`` is ``"<f8"``, ``"<c16"``,
  ``"<i8"`` or ``"|b1"``; ``offset`` counts bytes from the start of the file.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "esi-bundle"
VERSION = 1
_DTYPES = {"f": "<f8", "c": "<c16", "i": "<i8", "u": "<i8", "b": "|b1"}


class BundleError(ValueError):
    pass


def _paths(path):
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".bin")


def write_bundle(path, arrays: dict, meta: dict | None = None, kind: str = "generic") -> Path:
    """Write ``arrays`` (name -> ndarray) and ``meta``; returns the manifest path."""
    mpath, bpath = _paths(path)
    table = {}
    offset = 0
    with open(bpath, "wb") as fh:
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            code = _DTYPES.get(arr.dtype.kind)
            if code is None:
                raise BundleError(f"array {name!r}: unsupported dtype {arr.dtype}")
            raw = np.asfortranarray(arr.astype(code, copy=False)).tobytes(order="F")
            fh.write(raw)
            table[name] = {"dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
            offset += len(raw)
    manifest = {"format": FORMAT, "version": VERSION, "kind": kind, "binary": bpath.name,
                "arrays": table, "meta": meta or {}}
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def read_bundle(path):
    """Return ``(arrays, meta, kind)``."""
    mpath, bpath = _paths(path)
    try:
        manifest = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise BundleError(f"bundle manifest {mpath} not found") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"{mpath}: invalid JSON ({exc})") from None
    if manifest.get("format") != FORMAT:
        raise BundleError(f"{mpath}: not an {FORMAT} manifest")
    if manifest.get("version") != VERSION:
        raise BundleError(f"{mpath}: unsupported bundle version {manifest.get('version')}")
    blob = (mpath.parent / manifest.get("binary", bpath.name)).read_bytes()
    arrays = {}
    for name, spec in manifest["arrays"].items():
        start, n = int(spec["offset"]), int(spec["nbytes"])
        if start + n > len(blob):
            raise BundleError(f"{mpath}: array {name!r} runs past the end of the binary block")
        shape = tuple(spec["shape"])
        flat = np.frombuffer(blob[start:start + n], dtype=np.dtype(spec["dtype"]))
        arrays[name] = flat.reshape(shape, order="F").astype(flat.dtype.newbyteorder("="))
    return arrays, manifest.get("meta", {}), manifest.get("kind", "generic")


# -- ESIModel -----------------------------------------------------------------

_MODEL_ARRAYS = ("K", "M", "gamma", "singular_values", "states", "states_next",
                 "cov_delta", "cov_xi", "offset", "scale")


def save_model(model, path) -> Path:
    arrays = {k: getattr(model, k) for k in _MODEL_ARRAYS}
    meta = {"dt": model.dt, "t0": model.t0, "labels": list(model.labels),
            "block_rows": model.block_rows, "config": model.config,
            "dictionary": json.loads(model.dictionary.to_json())}
    return write_bundle(path, arrays, meta, kind="esi-model")


def load_model(path):
    from .core import ESIModel
    from .lifting import Dictionary

    arrays, meta, kind = read_bundle(path)
    if kind != "esi-model":
        raise BundleError(f"{path}: bundle holds {kind!r}, not an identified model")
    d = Dictionary.from_json(json.dumps(meta["dictionary"]))
    return ESIModel(dictionary=d, dt=float(meta["dt"]), t0=float(meta["t0"]), labels=list(meta["labels"]),
                    block_rows=int(meta["block_rows"]), config=dict(meta["config"]),
                    **{k: arrays[k] for k in _MODEL_ARRAYS})
