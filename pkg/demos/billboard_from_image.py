"""
From a 2D image region to a 3D splat object
============================================

Walks the full generation pipeline by hand: three prompt points select a
region, the mock segmenter floods it, the mock multiview stage fabricates
side and back views, and the billboard extruder turns them into splats.
"""

from pathlib import Path

import numpy as np

from splatspace import Camera, parse_ply, render
from splatspace.imaging import png_encode
from splatspace.mock_backend import mock_gaussian, mock_multiview, mock_segment
from splatspace.pipeline import build_cutout

out_dir = Path(__file__).parent / "out" / "billboard"
out_dir.mkdir(parents=True, exist_ok=True)

# A synthetic photo: mug-ish shape on a bright desk.
frame = np.zeros((96, 128, 4), dtype=np.uint8)
frame[:, :, :3] = (235, 228, 215)
frame[:, :, 3] = 255
frame[28:80, 40:88, :3] = (170, 40, 50)        # body
frame[34:54, 88:100, :3] = (170, 40, 50)       # handle
frame[28:36, 44:84, :3] = (90, 20, 28)         # rim shadow

# The selection gesture yields three points on the object.
points = [(52, 40), (70, 62), (92, 44)]
mask = mock_segment(frame, points)
print(f"mask covers {mask.sum()} px; all prompt points inside: "
      f"{all(mask[y, x] for x, y in points)}")

cutout = build_cutout(frame, mask)
(out_dir / "cutout.png").write_bytes(png_encode(cutout))
print(f"cutout: {cutout.shape[1]}x{cutout.shape[0]}")

front, left, right, back = mock_multiview(cutout)
for name, img in [("front", front), ("left", left), ("right", right), ("back", back)]:
    (out_dir / f"mv_{name}.png").write_bytes(png_encode(img))
print(f"side views compressed to {left.shape[1]} px wide; back view darkened 20%")

blob = mock_gaussian(cutout, [front, left, right, back])
(out_dir / "object.ply").write_bytes(blob)
asset = parse_ply(blob)
print(f"billboard asset: {asset.splat_count} splats "
      f"(2x the {asset.splat_count // 2} opaque pixels)")

# Seen from the front the object matches its source image.
camera = Camera(position=(0, 0, -3), look_at=(0, 0, 0),
                vertical_fov=2 * np.arctan(0.5 / 3.0),
                width=cutout.shape[1] * 4, height=cutout.shape[0] * 4, near=0.05)
image = render(asset, camera, background=(0.12, 0.12, 0.14))
(out_dir / "front_render.png").write_bytes(png_encode(image.pixels))
print(f"wrote cutout, multiviews, object.ply, front_render.png -> {out_dir}")
