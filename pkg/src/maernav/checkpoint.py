"""Versioned checkpoint container: a zip of .npy arrays plus a JSON header.

Entries are written with a fixed timestamp and in sorted order so that
identical state always produces identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

FORMAT = "maernav-checkpoint"
VERSION = 1
_META = "__meta__.json"
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def save(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    header = dict(meta)
    header["format"] = FORMAT
    header["version"] = VERSION
    header["arrays"] = [
        {"name": k, "shape": list(np.shape(v)), "dtype": np.asarray(v).dtype.str} for k, v in sorted(arrays.items())
    ]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo(_META, _EPOCH), json.dumps(header, sort_keys=True, indent=1))
        for name, arr in sorted(arrays.items()):
            bio = io.BytesIO()
            np.lib.format.write_array(bio, np.array(arr, order="C", copy=True), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", _EPOCH), bio.getvalue())
    tmp.replace(path)


def load(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from None
    with zf:
        try:
            header = json.loads(zf.read(_META))
        except (KeyError, ValueError, zipfile.BadZipFile) as exc:
            raise CheckpointError(f"{path}: missing or corrupt header ({exc})") from None
        if header.get("format") != FORMAT:
            raise CheckpointError(f"{path}: not a {FORMAT} file")
        if header.get("version") != VERSION:
            raise CheckpointVersionError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
        arrays = {}
        for entry in header["arrays"]:
            try:
                arr = np.lib.format.read_array(io.BytesIO(zf.read(entry["name"] + ".npy")), allow_pickle=False)
            except (KeyError, ValueError, zipfile.BadZipFile) as exc:
                raise CheckpointError(f"{path}: corrupt array {entry['name']!r} ({exc})") from None
            if list(arr.shape) != entry["shape"]:
                raise CheckpointError(f"{path}: shape mismatch for {entry['name']!r}")
            arrays[entry["name"]] = arr
    return header, arrays
