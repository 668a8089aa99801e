"""Binary slice-stream formats, mask generation and the results CSV.

Tensor files ("TNS3") hold a 20-byte header followed by T dense L x W
float64 slices; mask files ("MSK3") share the header and store one byte
per entry, 0 or 1. All integers and floats are little-endian; slices
are row-major and stored in step order.

Header layout: magic (4 bytes), format version (u32, currently 1),
then L, W, T as u32.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .exceptions import FormatError
from .metrics import MetricsRecord

TENSOR_MAGIC = b"TNS3"
MASK_MAGIC = b"MSK3"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

PathLike = Union[str, Path]


def _pack_header(magic: bytes, L: int, W: int, T: int) -> bytes:
    return _HEADER.pack(magic, FORMAT_VERSION, L, W, T)


def _read_header(buf: bytes, magic: bytes, path: PathLike) -> tuple[int, int, int]:
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a header")
    got_magic, version, L, W, T = _HEADER.unpack_from(buf)
    if got_magic != magic:
        raise FormatError(
            f"{path}: bad magic {got_magic!r}, expected {magic.decode()}"
        )
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if L < 1 or W < 1 or T < 1:
        raise FormatError(f"{path}: non-positive dimensions ({L}, {W}, {T})")
    return L, W, T


def write_tensor(path: PathLike, slices: np.ndarray) -> None:
    """Write a (T, L, W) float array as a tensor file.

    Raises:
        FormatError: on non-finite values or a non-3-D array.
    """
    slices = np.ascontiguousarray(slices, dtype="<f8")
    if slices.ndim != 3:
        raise FormatError(f"expected a (T, L, W) array, got shape {slices.shape}")
    if not np.isfinite(slices).all():
        raise FormatError("tensor contains non-finite values")
    T, L, W = slices.shape
    with open(path, "wb") as fh:
        fh.write(_pack_header(TENSOR_MAGIC, L, W, T))
        fh.write(slices.tobytes())


def read_tensor(path: PathLike) -> np.ndarray:
    """Read a tensor file back into a (T, L, W) float64 array."""
    buf = Path(path).read_bytes()
    L, W, T = _read_header(buf, TENSOR_MAGIC, path)
    expected = _HEADER.size + 8 * T * L * W
    if len(buf) != expected:
        raise FormatError(
            f"{path}: payload size {len(buf) - _HEADER.size} does not match "
            f"header dimensions (expected {expected - _HEADER.size} bytes)"
        )
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    slices = data.reshape(T, L, W).astype(np.float64)
    if not np.isfinite(slices).all():
        raise FormatError(f"{path}: tensor contains non-finite values")
    return slices


def write_mask(path: PathLike, masks: np.ndarray) -> None:
    """Write a (T, L, W) boolean array as a mask file."""
    masks = np.asarray(masks)
    if masks.ndim != 3:
        raise FormatError(f"expected a (T, L, W) array, got shape {masks.shape}")
    if masks.dtype != bool and not np.isin(masks, (0, 1)).all():
        raise FormatError("mask entries must be 0 or 1")
    T, L, W = masks.shape
    with open(path, "wb") as fh:
        fh.write(_pack_header(MASK_MAGIC, L, W, T))
        fh.write(np.ascontiguousarray(masks, dtype=np.uint8).tobytes())


def read_mask(path: PathLike) -> np.ndarray:
    """Read a mask file back into a (T, L, W) boolean array."""
    buf = Path(path).read_bytes()
    L, W, T = _read_header(buf, MASK_MAGIC, path)
    expected = _HEADER.size + T * L * W
    if len(buf) != expected:
        raise FormatError(
            f"{path}: payload size {len(buf) - _HEADER.size} does not match "
            f"header dimensions (expected {expected - _HEADER.size} bytes)"
        )
    raw = np.frombuffer(buf, dtype=np.uint8, offset=_HEADER.size)
    bad = (raw > 1).sum()
    if bad:
        raise FormatError(f"{path}: {bad} mask bytes outside {{0, 1}}")
    return raw.reshape(T, L, W).astype(bool)


def generate_mask(L: int, W: int, T: int, ratio: float, seed: int) -> np.ndarray:
    """Deterministic i.i.d. Bernoulli masks, drawn slice by slice."""
    if not 0.0 < ratio <= 1.0:
        raise FormatError(f"ratio must lie in (0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    masks = np.empty((T, L, W), dtype=bool)
    for t in range(T):
        masks[t] = rng.random((L, W)) < ratio
    return masks


def _load_grid(path: PathLike) -> np.ndarray:
    """One numeric CSV (or whitespace-separated) grid as a 2-D array."""
    text = Path(path).read_text()
    delimiter = "," if "," in text.splitlines()[0] else None
    try:
        grid = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: not a numeric grid ({exc})") from exc
    if not np.isfinite(grid).all():
        raise FormatError(f"{path}: grid contains non-finite values")
    return grid


def read_csv_slices(paths: Sequence[PathLike]) -> np.ndarray:
    """Stack per-slice CSV grids (one file per step) into (T, L, W).

    Files are taken in the order given; all grids must share one shape.
    """
    if not paths:
        raise FormatError("no slice files given")
    grids = [_load_grid(p) for p in paths]
    shape = grids[0].shape
    for p, g in zip(paths, grids):
        if g.shape != shape:
            raise FormatError(
                f"{p}: grid shape {g.shape} differs from first slice {shape}"
            )
    return np.stack(grids)


RESULT_FIELDS = ("t", "residual", "running_avg", "elapsed_ms", "algo", "variant")


def write_results_csv(
    path: PathLike,
    records: Iterable[MetricsRecord],
    algo: str,
    variant: str,
) -> None:
    """Per-step metrics log; floats keep full double precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for rec in records:
            writer.writerow(
                (
                    rec.t,
                    format(rec.residual, ".17g"),
                    format(rec.running_avg, ".17g"),
                    format(rec.elapsed_ms, ".17g"),
                    algo,
                    variant,
                )
            )


def read_results_csv(path: PathLike) -> list[dict]:
    """Parse a results CSV; numeric fields come back as int / float."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(RESULT_FIELDS):
            raise FormatError(
                f"{path}: unexpected header {reader.fieldnames}, "
                f"expected {list(RESULT_FIELDS)}"
            )
        for row in reader:
            out.append(
                {
                    "t": int(row["t"]),
                    "residual": float(row["residual"]),
                    "running_avg": float(row["running_avg"]),
                    "elapsed_ms": float(row["elapsed_ms"]),
                    "algo": row["algo"],
                    "variant": row["variant"],
                }
            )
    return out
