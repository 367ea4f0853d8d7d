"""Deterministic stand-ins for the three inference stages.

All arithmetic is 32-bit with fixed iteration order, so identical inputs
produce identical masks, views, and .ply bytes on every run and platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assets import EmptyAsset, GaussianSplatAsset, serialize_ply
from .render import SH_C0

DEFAULT_SEGMENT_THRESHOLD = 30.0 / 255.0
DEFAULT_SPLAT_BUDGET = 4096

_BILLBOARD_HEIGHT_M = 1.0
_BACK_LAYER_DEPTH = 0.1 * _BILLBOARD_HEIGHT_M


def _flood(rgb: np.ndarray, seed_xy: tuple[int, int], threshold: float) -> np.ndarray:
    """Grow a region from one seed, joining pixels whose RGB distance to the
    running region mean stays within the per-channel threshold.

    The frontier advances in waves (4-connected) with the mean refreshed per
    wave; order is fixed, so the result is deterministic.
    """
    h, w = rgb.shape[:2]
    x, y = seed_xy
    region = np.zeros((h, w), dtype=bool)
    region[y, x] = True
    frontier = region.copy()
    channel_sum = rgb[y, x].astype(np.float64).copy()
    count = 1
    limit = np.float32(3.0) * np.float32(threshold) ** 2  # squared euclidean

    while True:
        candidates = np.zeros_like(region)
        candidates[1:, :] |= frontier[:-1, :]
        candidates[:-1, :] |= frontier[1:, :]
        candidates[:, 1:] |= frontier[:, :-1]
        candidates[:, :-1] |= frontier[:, 1:]
        candidates &= ~region
        if not candidates.any():
            return region
        mean = (channel_sum / count).astype(np.float32)
        dist2 = ((rgb - mean) ** 2).sum(axis=2, dtype=np.float32)
        accepted = candidates & (dist2 <= limit)
        if not accepted.any():
            return region
        region |= accepted
        channel_sum += rgb[accepted].sum(axis=0, dtype=np.float64)
        count += int(accepted.sum())
        frontier = accepted


def mock_segment(frame: np.ndarray, points, threshold: float = DEFAULT_SEGMENT_THRESHOLD) -> np.ndarray:
    """Union of region-growing floods from the three prompt points."""
    rgb = np.asarray(frame)[:, :, :3].astype(np.float32) / np.float32(255.0)
    mask = np.zeros(rgb.shape[:2], dtype=bool)
    for x, y in points:
        mask |= _flood(rgb, (int(x), int(y)), threshold)
    return mask


def _resample_columns(image: np.ndarray, new_width: int) -> np.ndarray:
    """Nearest-neighbor horizontal resample; pure integer index math."""
    w = image.shape[1]
    cols = ((2 * np.arange(new_width) + 1) * w) // (2 * new_width)
    return image[:, cols]


def mock_multiview(cutout: np.ndarray) -> list[np.ndarray]:
    """[front, left, right, back]: front is the cutout, the side views are
    25% horizontally compressed (left additionally mirrored), the back view
    is the mirrored cutout darkened to 80%."""
    cutout = np.asarray(cutout, dtype=np.uint8)
    side_width = max(1, round(0.75 * cutout.shape[1]))
    side = _resample_columns(cutout, side_width)
    left = side[:, ::-1].copy()
    right = side.copy()
    back = cutout[:, ::-1].copy()
    darkened = np.floor(back[:, :, :3].astype(np.float32) * np.float32(0.8) + np.float32(0.5))
    back[:, :, :3] = darkened.astype(np.uint8)
    return [cutout.copy(), left, right, back]


def _downsample2(rgba: np.ndarray) -> np.ndarray:
    """Alpha-weighted 2x2 box filter; odd edges padded transparent."""
    h, w = rgba.shape[:2]
    ph, pw = (h + 1) // 2 * 2, (w + 1) // 2 * 2
    padded = np.zeros((ph, pw, 4), dtype=np.float32)
    padded[:h, :w] = rgba.astype(np.float32)
    blocks = padded.reshape(ph // 2, 2, pw // 2, 2, 4)
    alpha = blocks[:, :, :, :, 3:4]
    alpha_sum = alpha.sum(axis=(1, 3))
    rgb = (blocks[:, :, :, :, :3] * alpha).sum(axis=(1, 3))
    out = np.zeros((ph // 2, pw // 2, 4), dtype=np.float32)
    np.divide(rgb, alpha_sum, out=out[:, :, :3], where=alpha_sum > 0)
    out[:, :, 3:4] = alpha_sum / np.float32(4.0)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _layer_splats(image: np.ndarray, pitch: float, z: float, flip_x: bool):
    """Arrays for one billboard layer, row-major over opaque pixels."""
    h, w = image.shape[:2]
    alpha = image[:, :, 3].astype(np.float32) / np.float32(255.0)
    ys, xs = np.nonzero(alpha > 0)
    sign = np.float32(-1.0 if flip_x else 1.0)
    px = sign * ((xs.astype(np.float32) + np.float32(0.5)) - np.float32(w / 2.0)) * np.float32(pitch)
    py = (np.float32(h / 2.0) - (ys.astype(np.float32) + np.float32(0.5))) * np.float32(pitch)
    positions = np.stack([px, py, np.full_like(px, np.float32(z))], axis=1)
    a = np.clip(alpha[ys, xs], 0.01, 0.99)
    raw_opacity = np.log(a / (np.float32(1.0) - a), dtype=np.float32)
    rgb = image[ys, xs, :3].astype(np.float32) / np.float32(255.0)
    color_dc = (rgb - np.float32(0.5)) / np.float32(SH_C0)
    return positions, raw_opacity, color_dc


def mock_gaussian(cutout: np.ndarray, views: list[np.ndarray],
                  budget: int = DEFAULT_SPLAT_BUDGET) -> bytes:
    """Billboard extrusion: every opaque cutout pixel becomes a front splat on
    a 1 m tall plane at z=0 and every opaque back-view pixel a rear splat one
    layer behind; the image is halved until 2x the opaque count fits the
    budget.  Returns canonical .ply bytes."""
    front = np.asarray(cutout, dtype=np.uint8)
    back = np.asarray(views[3], dtype=np.uint8)
    while 2 * int(np.count_nonzero(front[:, :, 3])) > budget:
        front = _downsample2(front)
        back = _downsample2(back)

    if not np.count_nonzero(front[:, :, 3]):
        raise EmptyAsset("cutout has no opaque pixels")

    pitch = _BILLBOARD_HEIGHT_M / front.shape[0]
    f_pos, f_op, f_dc = _layer_splats(front, pitch, 0.0, flip_x=True)
    back_pitch = _BILLBOARD_HEIGHT_M / back.shape[0]
    b_pos, b_op, b_dc = _layer_splats(back, back_pitch, _BACK_LAYER_DEPTH, flip_x=False)
    count = f_pos.shape[0] + b_pos.shape[0]

    rotations = np.tile(np.array([1, 0, 0, 0], dtype=np.float32), (count, 1))
    log_scales = np.concatenate([
        np.full((f_pos.shape[0], 3), np.log(np.float32(pitch)), dtype=np.float32),
        np.full((b_pos.shape[0], 3), np.log(np.float32(back_pitch)), dtype=np.float32),
    ])
    asset = GaussianSplatAsset(
        positions=np.concatenate([f_pos, b_pos]),
        rotations=rotations,
        log_scales=log_scales,
        raw_opacities=np.concatenate([f_op, b_op]),
        colors_dc=np.concatenate([f_dc, b_dc]),
        provenance="mock",
    )
    return serialize_ply(asset)


@dataclass
class MockBackend:
    """Bundles the three mock stages behind the backend contract."""

    segment_threshold: float = DEFAULT_SEGMENT_THRESHOLD
    splat_budget: int = DEFAULT_SPLAT_BUDGET

    def segment(self, frame: np.ndarray, points) -> np.ndarray:
        return mock_segment(frame, points, self.segment_threshold)

    def multiview(self, cutout: np.ndarray) -> list[np.ndarray]:
        return mock_multiview(cutout)

    def gaussian(self, cutout: np.ndarray, views: list[np.ndarray]) -> bytes:
        return mock_gaussian(cutout, views, self.splat_budget)
