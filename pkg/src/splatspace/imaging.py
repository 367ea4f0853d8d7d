"""PNG and base64 helpers shared by the renderer, pipeline, and wire layer."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def png_encode(pixels: np.ndarray) -> bytes:
    """Encode an (H, W, 4) RGBA or (H, W, 3) RGB uint8 array as PNG bytes."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(f"expected uint8 HxWx3/4 array, got {arr.dtype} {arr.shape}")
    mode = "RGBA" if arr.shape[2] == 4 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode).save(buf, format="PNG")
    return buf.getvalue()


def png_decode(data: bytes) -> np.ndarray:
    """Decode PNG bytes to an (H, W, 4) RGBA uint8 array."""
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.uint8)


def png_to_b64(pixels: np.ndarray) -> str:
    return base64.b64encode(png_encode(pixels)).decode("ascii")


def b64_to_png(data: str) -> np.ndarray:
    return png_decode(base64.b64decode(data))


def mask_to_rgba(mask: np.ndarray) -> np.ndarray:
    """Pack a boolean (H, W) mask as an opaque black/white RGBA image."""
    m = np.asarray(mask, dtype=bool)
    out = np.zeros((*m.shape, 4), dtype=np.uint8)
    out[m] = (255, 255, 255, 255)
    out[~m, 3] = 255
    return out


def rgba_to_mask(pixels: np.ndarray) -> np.ndarray:
    """Inverse of :func:`mask_to_rgba`: any nonzero RGB counts as masked."""
    arr = np.asarray(pixels)
    return arr[:, :, :3].max(axis=2) > 127
