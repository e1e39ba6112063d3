"""Point-set readers and writers (XYZ text, ASCII and binary PLY)."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .geom import PointCloud


class DataError(ValueError):
    """Malformed or unreadable input data."""


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_xyz(path) -> PointCloud:
    """Whitespace-separated x y z per line; ``#`` starts a comment; extra columns are ignored."""
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) < 3:
                    raise DataError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
                try:
                    rows.append([float(p) for p in parts[:3]])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    return _cloud(np.array(rows, dtype=np.float64).reshape(-1, 3), path)


def _cloud(pts, path) -> PointCloud:
    try:
        return PointCloud(pts)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _parse_header(fh, path):
    if fh.readline().strip() != b"ply":
        raise DataError(f"{path}: not a PLY file")
    fmt, elements = None, []
    while True:
        raw = fh.readline()
        if not raw:
            raise DataError(f"{path}: truncated PLY header")
        tok = raw.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise DataError(f"{path}: bad element line {raw!r}")
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise DataError(f"{path}: property before any element")
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise DataError(f"{path}: bad list property {raw!r}")
                elements[-1][2].append((tok[4], "list", tok[2], tok[3]))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise DataError(f"{path}: bad property {raw!r}")
                elements[-1][2].append((tok[2], "scalar", tok[1], None))
        else:
            raise DataError(f"{path}: unexpected header line {raw!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path) -> PointCloud:
    """Vertex positions of an ASCII or little-endian binary PLY file.

    Only ``x y z`` of the ``vertex`` element are kept; other properties and
    elements are skipped.
    """
    try:
        with open(path, "rb") as fh:
            fmt, elements = _parse_header(fh, path)
            body = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    if fmt == "ascii":
        pts = _ply_ascii(body, elements, path)
    else:
        pts = _ply_binary(body, elements, path)
    return _cloud(pts, path)


def _xyz_columns(props, path):
    names = [p[0] for p in props]
    try:
        return [names.index(c) for c in "xyz"]
    except ValueError:
        raise DataError(f"{path}: vertex element lacks x, y or z") from None


def _ply_ascii(body, elements, path):
    tokens = body.split()
    pos = 0
    result = None
    for name, count, props in elements:
        is_vertex = name == "vertex"
        cols = _xyz_columns(props, path) if is_vertex else None
        rows = np.empty((count, 3)) if is_vertex else None
        for i in range(count):
            vals = []
            for pname, kind, t1, _ in props:
                if kind == "list":
                    if pos >= len(tokens):
                        raise DataError(f"{path}: unexpected end of data")
                    n = int(tokens[pos])
                    pos += 1 + n
                    vals.append(0.0)
                else:
                    if pos >= len(tokens):
                        raise DataError(f"{path}: unexpected end of data")
                    vals.append(tokens[pos])
                    pos += 1
            if is_vertex:
                try:
                    rows[i] = [float(vals[c]) for c in cols]
                except ValueError as exc:
                    raise DataError(f"{path}: vertex {i}: {exc}") from None
        if is_vertex:
            result = rows
    if result is None:
        raise DataError(f"{path}: no vertex element")
    return result


def _ply_binary(body, elements, path):
    pos = 0
    result = None
    for name, count, props in elements:
        if any(kind == "list" for _, kind, _, _ in props):
            if name == "vertex":
                raise DataError(f"{path}: list properties on vertices are not supported")
            pos = _skip_lists(body, pos, count, props, path)
            continue
        dtype = np.dtype([(p[0], "<" + _PLY_TYPES[p[2]]) for p in props])
        nbytes = dtype.itemsize * count
        if pos + nbytes > len(body):
            raise DataError(f"{path}: unexpected end of data")
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=pos)
        pos += nbytes
        if name == "vertex":
            _xyz_columns(props, path)
            result = np.column_stack([arr[c].astype(np.float64) for c in "xyz"]) if count else np.zeros((0, 3))
    if result is None:
        raise DataError(f"{path}: no vertex element")
    return result


def _skip_lists(body, pos, count, props, path):
    for _ in range(count):
        for _, kind, t1, t2 in props:
            if kind == "scalar":
                pos += np.dtype(_PLY_TYPES[t1]).itemsize
                continue
            size = np.dtype(_PLY_TYPES[t1]).itemsize
            if pos + size > len(body):
                raise DataError(f"{path}: unexpected end of data")
            n = int(np.frombuffer(body, "<" + _PLY_TYPES[t1], 1, pos)[0])
            pos += size + n * np.dtype(_PLY_TYPES[t2]).itemsize
    if pos > len(body):
        raise DataError(f"{path}: unexpected end of data")
    return pos


def atomic_write(path, data: bytes):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def xyz_bytes(points) -> bytes:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return "".join(f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in pts).encode()


def ply_bytes(points, binary: bool = True) -> bytes:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (f"ply\nformat {fmt} 1.0\nelement vertex {len(pts)}\n"
              "property double x\nproperty double y\nproperty double z\nend_header\n").encode()
    if binary:
        return header + pts.astype("<f8").tobytes()
    return header + xyz_bytes(pts)


def write_xyz(path, cloud):
    atomic_write(path, xyz_bytes(_pts(cloud)))


def write_ply(path, cloud, binary: bool = True):
    atomic_write(path, ply_bytes(_pts(cloud), binary))


def _pts(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def read_points(path) -> PointCloud:
    """Dispatch on extension: ``.ply`` or anything else as XYZ text."""
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    return read_ply(path) if str(path).lower().endswith(".ply") else read_xyz(path)


def write_points(path, cloud):
    if str(path).lower().endswith(".ply"):
        write_ply(path, cloud)
    else:
        write_xyz(path, cloud)
