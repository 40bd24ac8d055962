"""Image quantization, PNG and raw file IO, and PSNR.

Frames travel through the package as (height, width, 4) arrays with row 0 at
the bottom (matching the render target's clip-space mapping). PNG files
store rows top-down, so the writers flip on the way out and the readers flip
back, keeping round-trips exact.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def quantize_u8(img) -> np.ndarray:
    """floor(clamp(x, 0, 1) * 255 + 0.5) per channel — the display rule.

    uint8 input passes through unchanged.
    """
    a = np.asarray(img)
    if a.dtype == np.uint8:
        return a
    q = np.clip(a.astype(np.float32), 0.0, 1.0) * np.float32(255.0)
    return np.floor(q + np.float32(0.5)).astype(np.uint8)


def write_png(path, img) -> None:
    """Save an RGBA frame (float in [0,1] or uint8), flipping rows for PNG."""
    q = quantize_u8(img)
    if q.ndim != 3 or q.shape[2] != 4:
        raise ValueError(f"expected (h, w, 4) RGBA, got {q.shape}")
    Image.fromarray(q[::-1], mode="RGBA").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Load a PNG as (h, w, 4) uint8, rows bottom-up."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGBA"), np.uint8)
    return arr[::-1].copy()


def write_raw(path, img) -> None:
    """Bit-exact float32 frame dump (npy container)."""
    np.save(path, np.asarray(img, np.float32))


def read_raw(path) -> np.ndarray:
    return np.load(path)


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over all channels; inf when equal.

    uint8 inputs are normalized to [0, 1] first so mixed comparisons against
    float frames use one scale.
    """
    def unit(x):
        x = np.asarray(x)
        if x.dtype == np.uint8:
            return x.astype(np.float64) / 255.0
        return x.astype(np.float64)

    av, bv = unit(a), unit(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch {av.shape} vs {bv.shape}")
    mse = float(np.mean((av - bv) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
