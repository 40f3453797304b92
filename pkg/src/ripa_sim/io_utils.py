"""Deterministic artifact writers: 16-bit PGM images, CSV, JSON, manifests.

Every writer produces byte-identical output for identical inputs: no
timestamps, sorted JSON keys, LF line endings, repr-based float formatting.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .focal_solver import FieldGrid


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_csv(path, header, rows) -> None:
    """CSV with '.' decimals, ',' separators, LF endings."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (int, float,
                     np.floating)) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_pgm16(path, intensity, normalize: bool = True) -> None:
    """Binary 16-bit PGM (P5, big-endian), row-major, intensity-normalized.

    intensity[ix, iy] maps to column ix / row iy so x runs along the image
    width and y down the height.
    """
    img = np.asarray(intensity, dtype=float)
    if img.ndim != 2:
        raise ValueError("intensity must be 2-D")
    if normalize:
        peak = img.max()
        img = img / peak if peak > 0 else img
    img = np.clip(img, 0.0, 1.0)
    data = np.round(img.T * 65535.0).astype(">u2")  # rows = y
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm16(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM file")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        raw = fh.read(width * height * 2)
    data = np.frombuffer(raw, dtype=">u2").reshape(height, width)
    return data.T.astype(float) / maxval


def write_field_grid(path_base, grid: FieldGrid) -> None:
    """PGM image of |E|^2 plus a JSON sidecar with the grid metadata."""
    base = Path(path_base)
    write_pgm16(base.with_suffix(".pgm"), grid.intensity)
    write_json(base.with_suffix(".json"), {
        "dx": grid.dx,
        "dy": grid.dy,
        "origin": list(grid.origin),
        "z": grid.plane_z,
        "shape": list(grid.samples.shape),
        "peak_intensity": float(grid.intensity.max()),
    })


def write_movie(out_dir, movie, dt_meta=None) -> None:
    """Directory of numbered PGM frames + a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    peak = float(movie.frames.max())
    for k in range(movie.times.size):
        write_pgm16(out / f"frame_{k:05d}.pgm",
                    movie.frames[k] / peak if peak > 0 else movie.frames[k],
                    normalize=False)
    write_json(out / "frames.json", {
        "dx": float(movie.x_axis[1] - movie.x_axis[0]),
        "dt": dt_meta,
        "frame_times": [float(t) for t in movie.times],
        "origin": [float(movie.x_axis[0]), float(movie.y_axis[0])],
        "peak_intensity": peak,
        "n_frames": int(movie.times.size),
    })


def write_trace_csv(path, trace) -> None:
    write_csv(path, ["t_s", "intensity"],
              [(t, v) for t, v in zip(trace.times, trace.values)])


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
