"""Gaussian splat data model, covariance math, and binary .ply serialization.

The on-disk layout is the widely used splat interchange format: 17
little-endian float32 properties per vertex (position, zeroed normals, DC
color coefficients, pre-sigmoid opacity, pre-exp log scales, wxyz rotation
quaternion).  Higher-order harmonic coefficients (``f_rest_*``) are accepted
and discarded on read, never written, so round-trips over files emitted here
are bit-exact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

PLY_FIELDS = (
    "x", "y", "z",
    "nx", "ny", "nz",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)
RECORD_SIZE = 4 * len(PLY_FIELDS)

PROVENANCES = ("mock", "backend", "file")

_PLY_MAGIC = b"ply\n"
_PLY_FORMAT = b"format binary_little_endian 1.0"
_END_HEADER = b"end_header\n"

# Aliases various exporters use for 32-bit floats.
_FLOAT_TYPES = {"float", "float32"}


class PlyError(ValueError):
    """Base class for .ply parsing failures."""


class MalformedHeader(PlyError):
    """Missing magic, format line, vertex element, or end_header marker."""


class UnsupportedLayout(PlyError):
    """Header is well formed but the property layout cannot be mapped."""


class TruncatedBody(PlyError):
    """Body holds fewer bytes than the declared vertex count requires."""


class EmptyAsset(ValueError):
    """Operation requires at least one splat."""


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


def normalize_rotations(rotations: np.ndarray) -> np.ndarray:
    """Return unit-norm float32 copies of (N, 4) w-first quaternions.

    Vectors already unit to float32 round-off pass through untouched, which
    keeps serialization round-trips bit-exact; zero vectors become the
    identity rotation.
    """
    q = np.array(rotations, dtype=np.float32, copy=True).reshape(-1, 4)
    norms = np.linalg.norm(q.astype(np.float64), axis=-1)
    zero = norms == 0.0
    if np.any(zero):
        q[zero] = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)
    off = ~zero & (np.abs(norms - 1.0) > 1e-6)
    if np.any(off):
        q[off] = (q[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return q


def rotation_matrices(rotations: np.ndarray) -> np.ndarray:
    """Convert (N, 4) unit quaternions (w, x, y, z) to (N, 3, 3) matrices."""
    q = np.asarray(rotations, dtype=np.float64).reshape(-1, 4)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    m[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[:, 0, 1] = 2.0 * (x * y - w * z)
    m[:, 0, 2] = 2.0 * (x * z + w * y)
    m[:, 1, 0] = 2.0 * (x * y + w * z)
    m[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[:, 1, 2] = 2.0 * (y * z - w * x)
    m[:, 2, 0] = 2.0 * (x * z - w * y)
    m[:, 2, 1] = 2.0 * (y * z + w * x)
    m[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


def covariance3d(rotation, log_scale) -> np.ndarray:
    """World-space covariance R·S·Sᵀ·Rᵀ with S = diag(exp(log_scale)).

    Expects a normalized quaternion; the result is symmetric PSD with
    eigenvalues exp(2·log_scale_i).
    """
    r = rotation_matrices(np.asarray(rotation, dtype=np.float64))[0]
    s2 = np.exp(2.0 * np.asarray(log_scale, dtype=np.float64)).reshape(3)
    return (r * s2) @ r.T


def covariances3d(rotations: np.ndarray, log_scales: np.ndarray) -> np.ndarray:
    """Batched :func:`covariance3d` over (N, 4) and (N, 3) arrays."""
    r = rotation_matrices(rotations)
    s2 = np.exp(2.0 * np.asarray(log_scales, dtype=np.float64)).reshape(-1, 3)
    return np.einsum("nij,nj,nkj->nik", r, s2, r)


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box; ``lo`` ≤ ``hi`` component-wise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        for name in ("lo", "hi"):
            v = np.array(getattr(self, name), dtype=np.float32).reshape(3)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def center(self) -> np.ndarray:
        return (self.lo.astype(np.float64) + self.hi.astype(np.float64)) / 2.0

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi.astype(np.float64) - self.lo.astype(np.float64)))

    def contains(self, points: np.ndarray) -> bool:
        p = np.asarray(points, dtype=np.float32).reshape(-1, 3)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


def compute_bounds(positions: np.ndarray) -> Bounds:
    """Min/max box over (N, 3) positions; raises :class:`EmptyAsset` for N=0."""
    p = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
    if p.shape[0] == 0:
        raise EmptyAsset("cannot compute bounds of zero splats")
    return Bounds(p.min(axis=0), p.max(axis=0))


@dataclass(frozen=True)
class Splat:
    """A single Gaussian primitive in raw (pre-activation) parameterization."""

    position: np.ndarray        # (3,) meters
    rotation: np.ndarray        # (4,) unit quaternion, w first
    log_scale: np.ndarray       # (3,) log meters
    raw_opacity: float          # pre-sigmoid logit
    color_dc: np.ndarray        # (3,) degree-0 SH coefficients

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float32).reshape(3))
        object.__setattr__(self, "rotation", normalize_rotations(self.rotation)[0])
        object.__setattr__(self, "log_scale", np.asarray(self.log_scale, dtype=np.float32).reshape(3))
        object.__setattr__(self, "raw_opacity", float(self.raw_opacity))
        object.__setattr__(self, "color_dc", np.asarray(self.color_dc, dtype=np.float32).reshape(3))

    @property
    def opacity(self) -> float:
        """Effective opacity sigmoid(raw_opacity), in (0, 1)."""
        return float(sigmoid(self.raw_opacity))

    @property
    def scale(self) -> np.ndarray:
        """Effective per-axis scale exp(log_scale), strictly positive."""
        return np.exp(self.log_scale.astype(np.float64))

    def covariance(self) -> np.ndarray:
        return covariance3d(self.rotation, self.log_scale)


@dataclass(frozen=True, eq=False)
class GaussianSplatAsset:
    """Immutable splat collection; arrays are float32 and write-protected.

    ``asset_id`` defaults to the sha256 hex of the canonical serialization,
    so identical content always gets the identical id.
    """

    positions: np.ndarray       # (N, 3)
    rotations: np.ndarray       # (N, 4) normalized, w first
    log_scales: np.ndarray      # (N, 3)
    raw_opacities: np.ndarray   # (N,)
    colors_dc: np.ndarray       # (N, 3)
    provenance: str = "file"
    asset_id: str | None = None

    def __post_init__(self):
        n = np.asarray(self.positions).reshape(-1, 3).shape[0]
        arrays = {
            "positions": np.asarray(self.positions, dtype=np.float32).reshape(n, 3),
            "rotations": normalize_rotations(np.asarray(self.rotations).reshape(n, 4)),
            "log_scales": np.asarray(self.log_scales, dtype=np.float32).reshape(n, 3),
            "raw_opacities": np.asarray(self.raw_opacities, dtype=np.float32).reshape(n),
            "colors_dc": np.asarray(self.colors_dc, dtype=np.float32).reshape(n, 3),
        }
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.asset_id is None:
            object.__setattr__(self, "asset_id", self.content_hash)

    @classmethod
    def from_splats(cls, splats, provenance: str = "file", asset_id: str | None = None) -> "GaussianSplatAsset":
        splats = list(splats)
        if not splats:
            return cls.empty(provenance=provenance, asset_id=asset_id)
        return cls(
            positions=np.stack([s.position for s in splats]),
            rotations=np.stack([s.rotation for s in splats]),
            log_scales=np.stack([s.log_scale for s in splats]),
            raw_opacities=np.array([s.raw_opacity for s in splats]),
            colors_dc=np.stack([s.color_dc for s in splats]),
            provenance=provenance,
            asset_id=asset_id,
        )

    @classmethod
    def empty(cls, provenance: str = "file", asset_id: str | None = None) -> "GaussianSplatAsset":
        z = np.zeros((0, 3), dtype=np.float32)
        return cls(
            positions=z,
            rotations=np.zeros((0, 4), dtype=np.float32),
            log_scales=z,
            raw_opacities=np.zeros(0, dtype=np.float32),
            colors_dc=z,
            provenance=provenance,
            asset_id=asset_id,
        )

    @property
    def splat_count(self) -> int:
        return int(self.positions.shape[0])

    def __len__(self) -> int:
        return self.splat_count

    @cached_property
    def bounds(self) -> Bounds:
        if self.splat_count == 0:
            return Bounds(np.zeros(3), np.zeros(3))
        return compute_bounds(self.positions)

    @property
    def splats(self) -> list[Splat]:
        return [
            Splat(self.positions[i], self.rotations[i], self.log_scales[i],
                  float(self.raw_opacities[i]), self.colors_dc[i])
            for i in range(self.splat_count)
        ]

    @cached_property
    def content_hash(self) -> str:
        return hashlib.sha256(serialize_ply(self)).hexdigest()

    def opacities(self) -> np.ndarray:
        return sigmoid(self.raw_opacities)

    def same_content(self, other: "GaussianSplatAsset") -> bool:
        """Bit-exact equality of all stored numeric fields."""
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.rotations, other.rotations)
            and np.array_equal(self.log_scales, other.log_scales)
            and np.array_equal(self.raw_opacities, other.raw_opacities)
            and np.array_equal(self.colors_dc, other.colors_dc)
        )


def serialize_ply(asset: GaussianSplatAsset) -> bytes:
    """Emit the canonical 17-field binary little-endian layout."""
    n = asset.splat_count
    header = [_PLY_MAGIC.strip().decode()]
    header.append(_PLY_FORMAT.decode())
    header.append(f"element vertex {n}")
    header.extend(f"property float {name}" for name in PLY_FIELDS)
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    body = np.empty((n, len(PLY_FIELDS)), dtype="<f4")
    body[:, 0:3] = asset.positions
    body[:, 3:6] = 0.0
    body[:, 6:9] = asset.colors_dc
    body[:, 9] = asset.raw_opacities
    body[:, 10:13] = asset.log_scales
    body[:, 13:17] = asset.rotations
    return head + body.tobytes()


def parse_ply(data: bytes) -> GaussianSplatAsset:
    """Parse binary little-endian splat .ply bytes into an asset.

    Accepts any float32 property layout containing the 17 canonical fields
    (extra float properties such as ``f_rest_*`` are skipped); rotations are
    renormalized on load.
    """
    if not data.startswith(_PLY_MAGIC):
        raise MalformedHeader("missing 'ply' magic at byte 0")
    end = data.find(_END_HEADER)
    if end < 0:
        raise MalformedHeader("no 'end_header' marker found")
    body_offset = end + len(_END_HEADER)
    try:
        header_text = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"non-ascii header byte at offset {exc.start}") from None

    vertex_count: int | None = None
    properties: list[str] = []
    current_element: str | None = None
    for line in header_text.splitlines()[1:]:
        line = line.strip()
        if not line or line.startswith("comment"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if line != _PLY_FORMAT.decode():
                raise UnsupportedLayout(f"unsupported format line {line!r}")
        elif parts[0] == "element":
            if parts[1] != "vertex" or vertex_count is not None:
                raise UnsupportedLayout(f"unsupported element {parts[1]!r}")
            current_element = "vertex"
            try:
                vertex_count = int(parts[2])
            except (IndexError, ValueError):
                raise MalformedHeader(f"bad element line {line!r}") from None
            if vertex_count < 0:
                raise MalformedHeader(f"negative vertex count {vertex_count}")
        elif parts[0] == "property":
            if current_element != "vertex":
                raise UnsupportedLayout(f"property outside vertex element: {line!r}")
            if len(parts) != 3 or parts[1] not in _FLOAT_TYPES:
                raise UnsupportedLayout(f"non-float32 property {line!r}")
            properties.append(parts[2])
    if vertex_count is None:
        raise MalformedHeader("missing 'element vertex' declaration")

    indices = {}
    for name in PLY_FIELDS:
        try:
            indices[name] = properties.index(name)
        except ValueError:
            raise UnsupportedLayout(f"missing required property {name!r}") from None

    stride = 4 * len(properties)
    expected = vertex_count * stride
    available = len(data) - body_offset
    if available < expected:
        raise TruncatedBody(
            f"body at offset {body_offset} holds {available} bytes, "
            f"need {expected} for {vertex_count} x {stride}-byte records"
        )
    raw = np.frombuffer(data, dtype="<f4", count=vertex_count * len(properties), offset=body_offset)
    table = raw.reshape(vertex_count, len(properties))

    cols = lambda names: table[:, [indices[n] for n in names]]
    return GaussianSplatAsset(
        positions=cols(("x", "y", "z")),
        rotations=cols(("rot_0", "rot_1", "rot_2", "rot_3")),
        log_scales=cols(("scale_0", "scale_1", "scale_2")),
        raw_opacities=table[:, indices["opacity"]],
        colors_dc=cols(("f_dc_0", "f_dc_1", "f_dc_2")),
        provenance="file",
    )
