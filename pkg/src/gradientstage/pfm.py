"""File formats: PFM float images, 8-bit PGM/PNG export, CSV tables.

PFM files are written little-endian (scale -1.0), rows bottom-to-top.
Invalid pixels are stored as NaN and recovered as invalid on read.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .core import Image, NormalMap


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise ValueError("unexpected end of PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm_array(path) -> np.ndarray:
    """Read a PFM file into an (H, W) or (H, W, 3) float array (top-down rows)."""
    with open(path, "rb") as f:
        ident = _read_token(f).decode("ascii")
        if ident == "PF":
            channels = 3
        elif ident == "Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: identifier {ident!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        scale = float(_read_token(f))
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        data = np.frombuffer(f.read(count * 4), dtype=endian + "f4", count=count)
        if data.size != count:
            raise ValueError("truncated PFM payload")
    arr = data.reshape(height, width, channels).astype(float)
    arr = np.flipud(arr)
    if abs(scale) != 1.0:
        arr = arr * abs(scale)
    return arr[:, :, 0] if channels == 1 else arr


def write_pfm_array(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        ident, payload = b"Pf", arr[:, :, None]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        ident, payload = b"PF", arr
    else:
        raise ValueError("PFM supports HxW or HxWx3 arrays")
    h, w = payload.shape[:2]
    with open(path, "wb") as f:
        f.write(ident + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(payload).astype("<f4").tobytes())


def write_image(path, img: Image) -> None:
    """One-channel PFM; invalid pixels stored as NaN."""
    data = np.where(img.mask, img.samples, np.nan)
    write_pfm_array(path, data)


def read_image(path) -> Image:
    """Inverse of write_image: non-finite or negative samples become invalid."""
    arr = read_pfm_array(path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a 1-channel PFM radiance image")
    mask = np.isfinite(arr) & (arr >= 0)
    return Image(np.where(mask, arr, 0.0), mask)


def write_normal_map(path, nm: NormalMap, visualization: bool = False) -> None:
    """3-channel PFM of normal components; invalid pixels stored as NaN.

    With visualization=True the components are remapped [-1,1] -> [0,1]
    (export-boundary convenience only; never part of the math path).
    """
    data = nm.normals
    if visualization:
        data = (data + 1.0) / 2.0
    data = np.where(nm.mask[..., None], data, np.nan)
    write_pfm_array(path, data)


def read_normal_map(path, magnitude_path=None) -> NormalMap:
    arr = read_pfm_array(path)
    if arr.ndim != 3:
        raise ValueError(f"{path}: expected a 3-channel PFM normal map")
    mask = np.all(np.isfinite(arr), axis=2)
    mag = None
    if magnitude_path is not None:
        mag_img = read_image(magnitude_path)
        mag = mag_img.samples
        mask &= mag_img.mask
    arr = np.where(mask[..., None], arr, 0.0)
    nm = NormalMap.from_components(arr, mask)
    if mag is not None:
        nm = NormalMap(nm.normals, np.where(nm.mask, mag, 0.0), nm.mask)
    return nm


def write_float3(path, data: np.ndarray, mask=None) -> None:
    """Generic 3-channel float map (distortion maps, flow fields)."""
    data = np.asarray(data, dtype=float)
    if mask is not None:
        data = np.where(np.asarray(mask, bool)[..., None], data, np.nan)
    write_pfm_array(path, data)


GAMMA = 2.2


def to_8bit(samples: np.ndarray) -> np.ndarray:
    """Gamma-2.2 encode linear [0,1] values to uint8. Export boundary only."""
    v = np.clip(np.asarray(samples, dtype=float), 0.0, 1.0)
    return np.round(255.0 * np.power(v, 1.0 / GAMMA)).astype(np.uint8)


def write_pgm(path, samples: np.ndarray) -> None:
    b = to_8bit(samples)
    h, w = b.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(b.tobytes())


def write_png(path, samples: np.ndarray) -> None:
    """Minimal 8-bit grayscale PNG writer (no external imaging deps)."""
    b = to_8bit(samples)
    h, w = b.shape
    raw = b"".join(b"\x00" + b[r].tobytes() for r in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        data = tag + payload
        return struct.pack(">I", len(payload)) + data + struct.pack(">I", zlib.crc32(data))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(chunk(b"IHDR", ihdr))
        f.write(chunk(b"IDAT", zlib.compress(raw, 9)))
        f.write(chunk(b"IEND", b""))


def write_histogram_csv(path, bins: list[tuple[float, int]]) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("bin_center,count\n")
        for center, count in bins:
            f.write(f"{center},{count}\n")


def write_flow(path, flow) -> None:
    """Flow stored as 3-channel PFM (u, v, validity); see alignment.FlowField."""
    data = np.concatenate(
        [flow.vectors, flow.mask.astype(float)[..., None]], axis=2
    )
    write_pfm_array(path, data)


def read_flow(path):
    from .alignment import FlowField

    arr = read_pfm_array(path)
    if arr.ndim != 3:
        raise ValueError(f"{path}: expected a 3-channel flow PFM")
    mask = (arr[:, :, 2] > 0.5) & np.all(np.isfinite(arr[:, :, :2]), axis=2)
    return FlowField(np.where(mask[..., None], arr[:, :, :2], 0.0), mask)
