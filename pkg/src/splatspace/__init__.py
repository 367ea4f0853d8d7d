"""Shared-space service turning 2D image regions into 3D Gaussian splat objects."""

from .assets import (
    Bounds,
    EmptyAsset,
    GaussianSplatAsset,
    MalformedHeader,
    PlyError,
    Splat,
    TruncatedBody,
    UnsupportedLayout,
    compute_bounds,
    covariance3d,
    parse_ply,
    serialize_ply,
)
from .render import (
    Camera,
    InvalidCamera,
    OrthogonalViewSet,
    RenderedImage,
    orbit_frames,
    orthogonal_views,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "Camera",
    "EmptyAsset",
    "GaussianSplatAsset",
    "InvalidCamera",
    "MalformedHeader",
    "OrthogonalViewSet",
    "PlyError",
    "RenderedImage",
    "Splat",
    "TruncatedBody",
    "UnsupportedLayout",
    "compute_bounds",
    "covariance3d",
    "orbit_frames",
    "orthogonal_views",
    "parse_ply",
    "render",
    "serialize_ply",
]
