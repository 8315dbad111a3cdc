"""File helpers: atomic JSON/CSV writes and binary PPM/PGM images."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json_atomic(path, payload) -> None:
    _atomic_write_bytes(path, dumps_json(payload).encode())


def write_csv_atomic(path, header, rows) -> None:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write_bytes(path, buf.getvalue().encode())


def _read_netpbm(path, magic: bytes) -> tuple[np.ndarray, int, int, int]:
    data = Path(path).read_bytes()
    if data[:2] != magic:
        raise ValueError(f"{path}: expected {magic.decode()} file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace before the raster
    width, height, maxval = fields
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit netpbm is not supported")
    return np.frombuffer(data, dtype=np.uint8, offset=pos), width, height, maxval


def read_ppm(path) -> np.ndarray:
    """P6 image as a (height, width, 3) uint8 array."""
    raster, w, h, _ = _read_netpbm(path, b"P6")
    return raster[: w * h * 3].reshape(h, w, 3).copy()


def read_pgm(path) -> np.ndarray:
    """P5 image as a (height, width) uint8 array."""
    raster, w, h, _ = _read_netpbm(path, b"P5")
    return raster[: w * h].reshape(h, w).copy()


def write_ppm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w, _ = img.shape
    _atomic_write_bytes(path, f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def write_pgm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape
    _atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode() + img.tobytes())
