#!/usr/bin/env python3
"""Regenerate the frozen render fixture under tests/golden/.

The expected PNG comes from the brute-force reference rasterizer in
tests/render_oracle.py, not from the production renderer, so the golden
byte-match stays an independent check.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

import numpy as np  # noqa: E402

from render_oracle import reference_render  # noqa: E402
from splatspace.assets import GaussianSplatAsset, Splat, serialize_ply  # noqa: E402
from splatspace.imaging import png_encode  # noqa: E402
from splatspace.render import Camera  # noqa: E402

# Must match the CLI invocation frozen in tests/test_cli.py:
#   render --cam "0,0,-2;0,0,0;45;64x64" --bg 202020
CAMERA = Camera(position=(0, 0, -2), look_at=(0, 0, 0), up=(0, 1, 0),
                vertical_fov=np.radians(45.0), width=64, height=64, near=2e-3)
BACKGROUND = (0x20 / 255.0, 0x20 / 255.0, 0x20 / 255.0)

ASSET = GaussianSplatAsset.from_splats([
    Splat(position=(0.05, -0.02, 0.0),
          rotation=(0.92387953, 0.0, 0.38268343, 0.0),
          log_scale=(np.log(0.22), np.log(0.10), np.log(0.16)),
          raw_opacity=2.0,
          color_dc=((0.9 - 0.5) / 0.28209479177,
                    (0.35 - 0.5) / 0.28209479177,
                    (0.6 - 0.5) / 0.28209479177)),
])


def main() -> None:
    out = ROOT / "tests" / "golden"
    out.mkdir(parents=True, exist_ok=True)
    (out / "single_splat.ply").write_bytes(serialize_ply(ASSET))
    pixels = reference_render(ASSET, CAMERA, BACKGROUND)
    (out / "render_single.png").write_bytes(png_encode(pixels))
    print("wrote single_splat.ply and render_single.png")


if __name__ == "__main__":
    main()
