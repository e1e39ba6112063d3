"""Versioned binary container for an :class:`AnalysisState`.

Layout: 8-byte magic, little-endian uint32 format version, uint64 header
length, a UTF-8 JSON header (config, scalars, energy log, array table), then
the raw little-endian arrays in table order. The dictionary is stored as
``d x 3M`` row-major and codes as sparse ``(row, col, value)`` triplets. The
encoding carries no timestamps, so equal states give equal bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .analysis import AnalysisState
from .config import AnalysisConfig
from .io import DataError, atomic_write
from .pattern import Pattern

MAGIC = b"LPFSNAP\0"
VERSION = 1


class SnapshotVersionError(DataError):
    pass


def _arrays(state: AnalysisState) -> dict:
    rows, cols = np.nonzero(state.codes)
    return {
        "pattern_offsets": state.pattern.offsets,
        "centers": state.centers,
        "origins": state.origins,
        "axes": state.axes,
        "v": state.v,
        "valid": state.valid,
        "target_ptr": state.target_ptr,
        "target_idx": state.target_idx,
        "dictionary": np.ascontiguousarray(state.dictionary.T),
        "code_rows": rows,
        "code_cols": cols,
        "code_vals": state.codes[rows, cols],
    }


_DTYPES = {"valid": "|b1", "target_ptr": "<i8", "target_idx": "<i8", "code_rows": "<i8", "code_cols": "<i8"}


def dumps(state: AnalysisState) -> bytes:
    table, blobs = [], []
    for name, arr in _arrays(state).items():
        arr = np.ascontiguousarray(arr, dtype=_DTYPES.get(name, "<f8"))
        table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    p = state.pattern
    header = {
        "config": state.config.to_dict(),
        "pattern": {"radius": p.radius, "tau_s": p.tau_s, "kind": p.kind, "grid_n": p.grid_n},
        "tau_p": state.tau_p,
        "lam": state.lam,
        "n_lpf": state.n_lpf,
        "d": int(state.dictionary.shape[1]),
        "energy_log": state.energy_log,
        "arrays": table,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(blobs)


def loads(data: bytes) -> AnalysisState:
    if len(data) < 20 or data[:8] != MAGIC:
        raise DataError("not an LPF analysis snapshot (bad magic bytes)")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise SnapshotVersionError(f"snapshot format version {version} is not supported (expected {VERSION})")
    try:
        header = json.loads(data[20:20 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt snapshot header: {exc}") from None
    pos = 20 + hlen
    arrs = {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if pos + nbytes > len(data):
            raise DataError("truncated snapshot")
        arrs[entry["name"]] = np.frombuffer(data, dt, count, pos).reshape(entry["shape"]).copy()
        pos += nbytes
    if pos != len(data):
        raise DataError("trailing bytes after snapshot arrays")
    pm = header["pattern"]
    pattern = Pattern(arrs["pattern_offsets"], pm["radius"], pm["tau_s"], pm["kind"], pm["grid_n"])
    n, d = header["n_lpf"], header["d"]
    codes = np.zeros((n, d))
    codes[arrs["code_rows"], arrs["code_cols"]] = arrs["code_vals"]
    return AnalysisState(
        AnalysisConfig.from_dict(header["config"]), pattern, header["tau_p"], header["lam"],
        arrs["centers"], arrs["origins"], arrs["axes"], arrs["v"], arrs["valid"],
        arrs["target_ptr"].astype(np.intp), arrs["target_idx"].astype(np.intp),
        np.ascontiguousarray(arrs["dictionary"].T), codes, header["energy_log"])


def save(path, state: AnalysisState):
    atomic_write(path, dumps(state))


def load(path) -> AnalysisState:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    return loads(data)
