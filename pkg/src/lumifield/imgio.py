"""PNG and PFM image I/O.

Color images live in linear RGB in memory and are stored as 8-bit sRGB PNG;
the transfer functions below are the exact inverse pair so the generator and
the loader agree. Depth maps are stored as 32-bit float PFM.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    linear = np.clip(linear, 0.0, 1.0)
    return np.where(linear <= 0.0031308,
                    12.92 * linear,
                    1.055 * np.power(linear, 1.0 / 2.4) - 0.055)


def srgb_decode(srgb: np.ndarray) -> np.ndarray:
    srgb = np.clip(srgb, 0.0, 1.0)
    return np.where(srgb <= 0.04045,
                    srgb / 12.92,
                    np.power((srgb + 0.055) / 1.055, 2.4))


def write_png_color(path, img: np.ndarray, alpha: np.ndarray | None = None) -> None:
    """Write a linear-RGB float image (H,W,3) in [0,1]; alpha (H,W) optional."""
    img = np.asarray(img, dtype=np.float64)
    u8 = np.round(srgb_encode(img) * 255.0).astype(np.uint8)
    if alpha is not None:
        a = np.round(np.clip(np.asarray(alpha, dtype=np.float64), 0, 1) * 255.0)
        u8 = np.concatenate([u8, a.astype(np.uint8)[..., None]], axis=2)
        Image.fromarray(u8, mode="RGBA").save(path)
    else:
        Image.fromarray(u8, mode="RGB").save(path)


def read_png_color(path):
    """Read a PNG into linear RGB floats; returns (img (H,W,3), alpha or None)."""
    with Image.open(path) as im:
        has_alpha = im.mode in ("RGBA", "LA", "PA")
        arr = np.asarray(im.convert("RGBA" if has_alpha else "RGB"))
    rgb = srgb_decode(arr[..., :3].astype(np.float64) / 255.0).astype(np.float32)
    alpha = arr[..., 3].astype(np.float32) / 255.0 if has_alpha else None
    return rgb, alpha


def write_png_mask(path, mask: np.ndarray) -> None:
    """Boolean mask -> 8-bit grayscale PNG, 255 = foreground."""
    u8 = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path)


def read_png_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


def write_pfm(path, data: np.ndarray) -> None:
    """Grayscale PFM, little-endian; rows written bottom-up per the format."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("write_pfm expects a 2-d array")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(data[::-1], dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        data = np.frombuffer(fh.read(4 * w * h), dtype="<f4" if scale < 0 else ">f4")
        return data.reshape(h, w)[::-1].copy()
