"""Brute-force reference rasterizer used only by tests.

Evaluates every splat at every pixel with exact stable depth sorting and no
bounding-box culling or early termination; shares nothing with the production
renderer beyond the documented contract (camera basis right = forward x up,
pixel centers at +0.5, 0.3 px² dilation, 1/255 Gaussian floor, DC color
mapping, final rint quantization).
"""

import math

import numpy as np

_C0 = 0.28209479177


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / math.sqrt(float(v @ v))


def _quat_to_matrix(q):
    w, x, y, z = (float(c) for c in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def reference_render(asset, camera, background=(0.0, 0.0, 0.0)):
    """Return (H, W, 4) uint8 pixels for comparison against render()."""
    h, w = camera.height, camera.width
    bg = np.asarray(background, dtype=np.float64)

    pos = np.asarray(camera.position, dtype=np.float64)
    fwd = _unit(np.asarray(camera.look_at, dtype=np.float64) - pos)
    right = _unit(np.cross(fwd, np.asarray(camera.up, dtype=np.float64)))
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    tvec = -rot @ pos
    fy = (h / 2.0) / math.tan(camera.vertical_fov / 2.0)
    fx, cx, cy = fy, w / 2.0, h / 2.0

    color = np.zeros((h, w, 3), dtype=np.float64)
    transmit = np.ones((h, w), dtype=np.float64)

    px = np.arange(w, dtype=np.float64) + 0.5
    py = np.arange(h, dtype=np.float64) + 0.5

    cam_pts = np.asarray(asset.positions, dtype=np.float64) @ rot.T + tvec
    order = np.argsort(cam_pts[:, 2], kind="stable")
    for i in order:
        t = cam_pts[i]
        if t[2] < camera.near:
            continue
        r3 = _quat_to_matrix(asset.rotations[i])
        s2 = np.diag(np.exp(2.0 * np.asarray(asset.log_scales[i], dtype=np.float64)))
        cov3 = r3 @ s2 @ r3.T
        tz = t[2]
        jac = np.array([
            [fx / tz, 0.0, -fx * t[0] / (tz * tz)],
            [0.0, fy / tz, -fy * t[1] / (tz * tz)],
        ])
        m = jac @ rot
        cov2 = m @ cov3 @ m.T + 0.3 * np.eye(2)
        inv = np.linalg.inv(cov2)

        u = fx * t[0] / tz + cx
        v = fy * t[1] / tz + cy
        dx = px - u
        dy = py - v
        q = (inv[0, 0] * dx[None, :] ** 2
             + 2.0 * inv[0, 1] * dy[:, None] * dx[None, :]
             + inv[1, 1] * dy[:, None] ** 2)
        gauss = np.exp(-0.5 * q)
        alpha = 1.0 / (1.0 + math.exp(-float(asset.raw_opacities[i])))
        weight = np.where(gauss >= 1.0 / 255.0, alpha * gauss, 0.0)
        rgb = np.clip(0.5 + _C0 * np.asarray(asset.colors_dc[i], dtype=np.float64), 0.0, 1.0)
        color += rgb[None, None, :] * (weight * transmit)[:, :, None]
        transmit = transmit * (1.0 - weight)

    out = np.empty((h, w, 4), dtype=np.uint8)
    out[:, :, :3] = np.clip(np.rint((color + transmit[:, :, None] * bg) * 255.0), 0, 255).astype(np.uint8)
    out[:, :, 3] = 255
    return out
