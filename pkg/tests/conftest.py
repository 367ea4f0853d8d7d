import numpy as np
import pytest

from splatspace.assets import GaussianSplatAsset


def make_asset(rng: np.random.Generator, count: int, extent: float = 1.0,
               provenance: str = "file") -> GaussianSplatAsset:
    """Random but well-conditioned asset for round-trip and render tests."""
    return GaussianSplatAsset(
        positions=rng.uniform(-extent, extent, (count, 3)),
        rotations=rng.normal(size=(count, 4)),
        log_scales=rng.uniform(np.log(0.02), np.log(0.5), (count, 3)),
        raw_opacities=rng.uniform(-4.0, 6.0, count),
        colors_dc=rng.uniform(-2.0, 2.0, (count, 3)),
        provenance=provenance,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
