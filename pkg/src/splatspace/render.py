"""CPU rasterizer for splat assets.

Splats are projected with the affine EWA approximation (2D covariance
J·W·Σ·Wᵀ·Jᵀ plus a 0.3 px² low-pass dilation), depth-sorted by camera-space
center distance with stable index tie-break, and alpha-composited front to
back in float, quantized once at the end.  A splat contributes nothing to a
pixel where its 2D Gaussian falls below 1/255, which makes the per-splat
screen bounding box an exact cull, not an approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assets import EmptyAsset, GaussianSplatAsset, covariances3d

SH_C0 = 0.28209479177
COV_DILATION = 0.3          # px², added to the projected covariance diagonal
GAUSSIAN_FLOOR = 1.0 / 255.0
# Radius beyond which G < 1/255, padded so float noise can't leak through.
_CUTOFF_SIGMA = 1.05 * math.sqrt(2.0 * math.log(255.0))
_AXIS_VIEW_FOV = 2.0 * math.atan(0.3)

AXIS_VIEW_DIRECTIONS = {
    "front": (0.0, 0.0, -1.0),
    "left": (-1.0, 0.0, 0.0),
    "right": (1.0, 0.0, 0.0),
    "back": (0.0, 0.0, 1.0),
}


class InvalidCamera(ValueError):
    """Camera fields violate the documented constraints."""


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; +x screen-right is f×up, +y screen-down, +z forward."""

    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    vertical_fov: float = math.pi / 4.0
    width: int = 256
    height: int = 256
    near: float = 0.01

    def __post_init__(self):
        for name in ("position", "look_at", "up"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise InvalidCamera(f"{name} must have 3 components")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "vertical_fov", float(self.vertical_fov))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "near", float(self.near))

    def validate(self) -> None:
        fields = (*self.position, *self.look_at, *self.up, self.vertical_fov, self.near)
        if not all(math.isfinite(v) for v in fields):
            raise InvalidCamera("camera fields must be finite")
        if not (0.0 < self.vertical_fov < math.pi):
            raise InvalidCamera(f"vertical_fov {self.vertical_fov} outside (0, pi)")
        if self.width < 1 or self.height < 1:
            raise InvalidCamera(f"resolution {self.width}x{self.height} below 1x1")
        if self.near <= 0.0:
            raise InvalidCamera(f"near plane {self.near} must be positive")
        forward = np.subtract(self.look_at, self.position, dtype=np.float64)
        dist = float(np.linalg.norm(forward))
        if dist <= self.near:
            raise InvalidCamera(f"look_at distance {dist} not beyond near plane {self.near}")
        if np.linalg.norm(np.cross(forward / dist, np.asarray(self.up, dtype=np.float64))) < 1e-9:
            raise InvalidCamera("up vector parallel to view direction")

    def world_to_camera(self) -> tuple[np.ndarray, np.ndarray]:
        """Rotation rows (right, down, forward) and translation; p_cam = R p + t."""
        pos = np.asarray(self.position, dtype=np.float64)
        forward = np.asarray(self.look_at, dtype=np.float64) - pos
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        return rot, -rot @ pos

    def intrinsics(self) -> tuple[float, float, float, float]:
        """(fx, fy, cx, cy) in pixels; square pixels, vertical fov."""
        fy = (self.height / 2.0) / math.tan(self.vertical_fov / 2.0)
        return fy, fy, self.width / 2.0, self.height / 2.0

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "look_at": list(self.look_at),
            "up": list(self.up),
            "fov": self.vertical_fov,
            "width": self.width,
            "height": self.height,
            "near": self.near,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        try:
            return cls(
                position=tuple(d["position"]),
                look_at=tuple(d["look_at"]),
                up=tuple(d.get("up", (0.0, 1.0, 0.0))),
                vertical_fov=float(d["fov"]),
                width=int(d["width"]),
                height=int(d["height"]),
                near=float(d.get("near", 0.01)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidCamera(f"bad camera record: {exc}") from None


@dataclass(frozen=True)
class RenderedImage:
    """Row-major RGBA8 pixels plus the camera that produced them."""

    width: int
    height: int
    pixels: np.ndarray
    camera: Camera

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.uint8)
        if arr.shape != (self.height, self.width, 4):
            raise ValueError(f"pixel buffer {arr.shape} != ({self.height}, {self.width}, 4)")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)


@dataclass(frozen=True)
class OrthogonalViewSet:
    """The four axis views around a source image (front/left/right/back)."""

    front: RenderedImage
    left: RenderedImage
    right: RenderedImage
    back: RenderedImage
    center: np.ndarray

    def views(self) -> dict[str, RenderedImage]:
        return {"front": self.front, "left": self.left, "right": self.right, "back": self.back}


def splat_colors(colors_dc: np.ndarray) -> np.ndarray:
    """DC coefficients to display RGB: clamp(0.5 + SH_C0 · f_dc, 0, 1)."""
    return np.clip(0.5 + SH_C0 * np.asarray(colors_dc, dtype=np.float64), 0.0, 1.0)


def render(asset: GaussianSplatAsset, camera: Camera,
           background: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> RenderedImage:
    """Rasterize ``asset`` through ``camera`` over an opaque RGB background.

    Deterministic: identical inputs give byte-identical images.  An empty
    asset yields the pure background.
    """
    camera.validate()
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    if np.any(bg < 0.0) or np.any(bg > 1.0):
        raise ValueError(f"background {background} outside [0, 1]")
    h, w = camera.height, camera.width

    if asset.splat_count == 0:
        out = np.empty((h, w, 4), dtype=np.uint8)
        out[:, :, :3] = np.clip(np.rint(bg * 255.0), 0, 255).astype(np.uint8)
        out[:, :, 3] = 255
        return RenderedImage(w, h, out, camera)

    rot, tvec = camera.world_to_camera()
    fx, fy, cx, cy = camera.intrinsics()
    cam_pts = asset.positions.astype(np.float64) @ rot.T + tvec

    keep = cam_pts[:, 2] >= camera.near
    idx = np.nonzero(keep)[0]
    color_buf = np.zeros((h, w, 3), dtype=np.float64)
    transmit = np.ones((h, w), dtype=np.float64)

    if idx.size:
        # Stable sort keeps ascending asset index among equal depths.
        order = idx[np.argsort(cam_pts[idx, 2], kind="stable")]
        t = cam_pts[order]
        tz = t[:, 2]

        cov3 = covariances3d(asset.rotations[order], asset.log_scales[order])
        jac = np.zeros((order.size, 2, 3), dtype=np.float64)
        jac[:, 0, 0] = fx / tz
        jac[:, 0, 2] = -fx * t[:, 0] / (tz * tz)
        jac[:, 1, 1] = fy / tz
        jac[:, 1, 2] = -fy * t[:, 1] / (tz * tz)
        m = jac @ rot
        cov2 = np.einsum("nij,njk,nlk->nil", m, cov3, m)
        a = cov2[:, 0, 0] + COV_DILATION
        b = cov2[:, 0, 1]
        c = cov2[:, 1, 1] + COV_DILATION

        det = a * c - b * b
        inv_a, inv_b, inv_c = c / det, -b / det, a / det
        lam_max = (a + c) / 2.0 + np.sqrt(((a - c) / 2.0) ** 2 + b * b)
        radius = _CUTOFF_SIGMA * np.sqrt(lam_max)

        us = fx * t[:, 0] / tz + cx
        vs = fy * t[:, 1] / tz + cy
        alphas = 1.0 / (1.0 + np.exp(-asset.raw_opacities[order].astype(np.float64)))
        rgbs = splat_colors(asset.colors_dc[order])

        for i in range(order.size):
            x0 = max(int(math.floor(us[i] - radius[i])), 0)
            x1 = min(int(math.ceil(us[i] + radius[i])), w - 1)
            y0 = max(int(math.floor(vs[i] - radius[i])), 0)
            y1 = min(int(math.ceil(vs[i] + radius[i])), h - 1)
            if x0 > x1 or y0 > y1:
                continue
            dx = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5 - us[i]
            dy = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5 - vs[i]
            qform = (
                inv_a[i] * dx[None, :] ** 2
                + 2.0 * inv_b[i] * dy[:, None] * dx[None, :]
                + inv_c[i] * dy[:, None] ** 2
            )
            gauss = np.exp(-0.5 * qform)
            weight = np.where(gauss >= GAUSSIAN_FLOOR, alphas[i] * gauss, 0.0)
            region = (slice(y0, y1 + 1), slice(x0, x1 + 1))
            color_buf[region] += rgbs[i] * (weight * transmit[region])[:, :, None]
            transmit[region] *= 1.0 - weight

    rgb = color_buf + transmit[:, :, None] * bg
    out = np.empty((h, w, 4), dtype=np.uint8)
    out[:, :, :3] = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    out[:, :, 3] = 255
    return RenderedImage(w, h, out, camera)


def framing_camera(asset: GaussianSplatAsset, direction: tuple[float, float, float],
                   resolution: int, width: int | None = None) -> Camera:
    """Camera on ``direction`` from the bounds center at 2x the bounds diagonal."""
    if asset.splat_count == 0:
        raise EmptyAsset("cannot frame an empty asset")
    center = asset.bounds.center
    diag = asset.bounds.diagonal
    dist = 2.0 * diag if diag > 0.0 else 1.0
    d = np.asarray(direction, dtype=np.float64)
    d /= np.linalg.norm(d)
    return Camera(
        position=tuple(center + dist * d),
        look_at=tuple(center),
        up=(0.0, 1.0, 0.0),
        vertical_fov=_AXIS_VIEW_FOV,
        width=width if width is not None else resolution,
        height=resolution,
        near=1e-3 * dist,
    )


def orthogonal_views(asset: GaussianSplatAsset, source_image: np.ndarray, resolution: int = 256,
                     background: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> OrthogonalViewSet:
    """Render the four axis views around the asset; the source sits in the center slot."""
    if asset.splat_count == 0:
        raise EmptyAsset("cannot build views of an empty asset")
    rendered = {
        name: render(asset, framing_camera(asset, direction, resolution), background)
        for name, direction in AXIS_VIEW_DIRECTIONS.items()
    }
    return OrthogonalViewSet(center=np.asarray(source_image), **rendered)


def orbit_camera(asset: GaussianSplatAsset, azimuth: float, resolution: int) -> Camera:
    """Camera at ``azimuth`` radians around +y; azimuth 0 is the front view."""
    direction = (math.sin(azimuth), 0.0, -math.cos(azimuth))
    return framing_camera(asset, direction, resolution)


def orbit_frames(asset: GaussianSplatAsset, frame_count: int = 36, resolution: int = 256,
                 background: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> list[RenderedImage]:
    """Deterministic 360° sweep; frame i sits at azimuth 2πi/frame_count."""
    if asset.splat_count == 0:
        raise EmptyAsset("cannot orbit an empty asset")
    if frame_count < 1:
        raise ValueError(f"frame_count {frame_count} must be >= 1")
    return [
        render(asset, orbit_camera(asset, 2.0 * math.pi * i / frame_count, resolution), background)
        for i in range(frame_count)
    ]
