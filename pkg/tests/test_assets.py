import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatspace.assets import (
    EmptyAsset,
    GaussianSplatAsset,
    MalformedHeader,
    PlyError,
    Splat,
    TruncatedBody,
    UnsupportedLayout,
    compute_bounds,
    covariance3d,
    normalize_rotations,
    parse_ply,
    serialize_ply,
)

from conftest import make_asset


# ---------------------------------------------------------------------------
# covariance3d


def _matmul3(a, b):
    """Explicit 3x3 multiply, independent of numpy's dot."""
    out = [[0.0] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            out[i][j] = sum(a[i][k] * b[k][j] for k in range(3))
    return out


def _quat_matrix(w, x, y, z):
    return [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]


def _covariance_oracle(quat, log_scale):
    """R·S·Sᵀ·Rᵀ by explicit multiplication."""
    r = _quat_matrix(*quat)
    s = [[math.exp(log_scale[i]) if i == j else 0.0 for j in range(3)] for i in range(3)]
    rt = [[r[j][i] for j in range(3)] for i in range(3)]
    return np.array(_matmul3(_matmul3(_matmul3(r, s), s), rt))


def test_covariance_identity():
    assert np.allclose(covariance3d((1, 0, 0, 0), (0, 0, 0)), np.eye(3))


def test_covariance_diagonal_scales():
    got = covariance3d((1, 0, 0, 0), np.log([1.0, 2.0, 3.0]))
    assert np.allclose(got, np.diag([1.0, 4.0, 9.0]))


def test_covariance_x_rotation_permutes_axes():
    # 90 degrees about x swaps the y/z variances.
    q = (math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0, 0.0)
    ls = np.log([1.0, 2.0, 3.0])
    got = covariance3d(q, ls)
    assert np.allclose(got, _covariance_oracle(q, ls), atol=1e-12)
    assert np.allclose(got, np.diag([1.0, 9.0, 4.0]), atol=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_covariance_symmetric_and_matches_oracle(seed):
    g = np.random.default_rng(seed)
    q = normalize_rotations(g.normal(size=4))[0]
    ls = g.uniform(-2.0, 1.0, 3)
    cov = covariance3d(q, ls)
    assert np.abs(cov - cov.T).max() < 1e-9
    assert np.allclose(cov, _covariance_oracle(tuple(map(float, q)), ls), atol=1e-9)


def _char_poly_eigvals(m):
    """Eigenvalues of a symmetric 3x3 via the trigonometric cubic solution."""
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    q = np.trace(m) / 3.0
    p2 = sum((m[i, i] - q) ** 2 for i in range(3)) + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    if p == 0.0:
        return np.array([q, q, q])
    b = (m - q * np.eye(3)) / p
    det_b = np.linalg.det(b)
    r = min(1.0, max(-1.0, det_b / 2.0))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    return np.array([e1, 3.0 * q - e1 - e3, e3])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_covariance_eigenvalues_are_squared_scales(seed):
    g = np.random.default_rng(seed)
    q = g.normal(size=4)
    ls = g.uniform(-2.0, 1.0, 3)
    cov = covariance3d(normalize_rotations(q)[0], ls)
    got = np.sort(_char_poly_eigvals(cov))
    want = np.sort(np.exp(2.0 * ls))
    assert np.allclose(got, want, rtol=1e-6)


# ---------------------------------------------------------------------------
# bounds


def test_bounds_single_point():
    b = compute_bounds(np.zeros((1, 3)))
    assert np.array_equal(b.lo, np.zeros(3)) and np.array_equal(b.hi, np.zeros(3))


def test_bounds_symmetric_pair():
    b = compute_bounds(np.array([[1.0, 0, 0], [-1.0, 0, 0]]))
    assert np.array_equal(b.lo, [-1, 0, 0]) and np.array_equal(b.hi, [1, 0, 0])


def test_bounds_random_cloud_matches_scan(rng):
    pts = rng.uniform(-5, 5, (200, 3)).astype(np.float32)
    b = compute_bounds(pts)
    lo = [min(p[i] for p in pts) for i in range(3)]
    hi = [max(p[i] for p in pts) for i in range(3)]
    assert np.array_equal(b.lo, np.array(lo, dtype=np.float32))
    assert np.array_equal(b.hi, np.array(hi, dtype=np.float32))
    assert b.contains(pts)


def test_bounds_empty_raises():
    with pytest.raises(EmptyAsset):
        compute_bounds(np.zeros((0, 3)))


# ---------------------------------------------------------------------------
# asset model


def test_asset_counts_and_bounds(rng):
    a = make_asset(rng, 17)
    assert a.splat_count == 17 and len(a.splats) == 17
    assert a.bounds.contains(a.positions)


def test_asset_is_immutable(rng):
    a = make_asset(rng, 3)
    with pytest.raises(ValueError):
        a.positions[0, 0] = 5.0


def test_asset_rotations_normalized(rng):
    a = make_asset(rng, 64)
    norms = np.linalg.norm(a.rotations.astype(np.float64), axis=1)
    assert np.abs(norms - 1.0).max() < 1e-6


def test_splat_activations():
    s = Splat((0, 0, 0), (2, 0, 0, 0), np.log([1, 2, 3]), 0.0, (0, 0, 0))
    assert s.opacity == pytest.approx(0.5)
    assert np.allclose(s.scale, [1, 2, 3])
    assert abs(np.linalg.norm(s.rotation) - 1.0) < 1e-6


def test_content_hash_is_stable(rng):
    a = make_asset(rng, 9)
    b = GaussianSplatAsset(a.positions, a.rotations, a.log_scales,
                           a.raw_opacities, a.colors_dc, provenance="mock")
    assert a.asset_id == b.asset_id == a.content_hash


# ---------------------------------------------------------------------------
# .ply serialization


def test_empty_asset_roundtrip():
    blob = serialize_ply(GaussianSplatAsset.empty())
    assert b"element vertex 0" in blob
    parsed = parse_ply(blob)
    assert parsed.splat_count == 0


def test_single_splat_opacity_half():
    a = GaussianSplatAsset.from_splats([Splat((0, 0, 0), (1, 0, 0, 0), (0, 0, 0), 0.0, (0, 0, 0))])
    parsed = parse_ply(serialize_ply(a))
    assert parsed.splats[0].opacity == pytest.approx(0.5)


def test_serialize_deterministic(rng):
    a = make_asset(rng, 25)
    assert serialize_ply(a) == serialize_ply(a)


def test_roundtrip_bytes_and_fields(rng):
    for _ in range(50):
        a = make_asset(rng, int(rng.integers(0, 80)))
        blob = serialize_ply(a)
        parsed = parse_ply(blob)
        assert parsed.same_content(a)
        assert serialize_ply(parsed) == blob


def _foreign_ply(count, rng, rest_fields=45, float_word="float"):
    """Reference-layout file built with struct, independent of serialize_ply."""
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(rest_fields)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    lines = ["ply", "format binary_little_endian 1.0", "comment made elsewhere",
             f"element vertex {count}"]
    lines += [f"property {float_word} {n}" for n in names]
    lines.append("end_header")
    head = ("\n".join(lines) + "\n").encode()
    body = b""
    rows = []
    for _ in range(count):
        row = [rng.uniform(-1, 1) for _ in range(len(names))]
        # keep the quaternion in the tolerated near-unit band
        qn = math.sqrt(sum(v * v for v in row[-4:]))
        row[-4:] = [v / qn * (1.0 + rng.uniform(-5e-5, 5e-5)) for v in row[-4:]]
        rows.append(row)
        body += struct.pack(f"<{len(names)}f", *row)
    return head + body, rows


def test_parse_foreign_reference_layout(rng):
    blob, rows = _foreign_ply(13, rng)
    a = parse_ply(blob)
    assert a.splat_count == 13
    assert a.provenance == "file"
    want_pos = np.array([r[0:3] for r in rows], dtype=np.float32)
    assert np.array_equal(a.positions, want_pos)
    norms = np.linalg.norm(a.rotations.astype(np.float64), axis=1)
    assert np.abs(norms - 1.0).max() < 1e-6
    # higher-order coefficients are discarded: emitted file is canonical 17-field
    assert b"f_rest_0" not in serialize_ply(a)


def test_parse_float32_alias(rng):
    blob, _ = _foreign_ply(2, rng, rest_fields=0, float_word="float32")
    assert parse_ply(blob).splat_count == 2


def test_parse_missing_magic():
    with pytest.raises(MalformedHeader, match="byte 0"):
        parse_ply(b"plyx\nformat binary_little_endian 1.0\nend_header\n")


def test_parse_missing_end_header():
    with pytest.raises(MalformedHeader, match="end_header"):
        parse_ply(b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n")


def test_parse_missing_property_named():
    blob = serialize_ply(GaussianSplatAsset.empty())
    broken = blob.replace(b"property float rot_3\n", b"")
    with pytest.raises(UnsupportedLayout, match="rot_3"):
        parse_ply(broken)


def test_parse_non_float_property():
    blob = serialize_ply(GaussianSplatAsset.empty())
    broken = blob.replace(b"property float x\n", b"property uchar x\n")
    with pytest.raises(UnsupportedLayout, match="uchar"):
        parse_ply(broken)


def test_parse_ascii_format_rejected():
    blob = serialize_ply(GaussianSplatAsset.empty())
    broken = blob.replace(b"binary_little_endian", b"ascii")
    with pytest.raises(UnsupportedLayout, match="format"):
        parse_ply(broken)


def test_parse_truncated_body(rng):
    blob = serialize_ply(make_asset(rng, 4))
    with pytest.raises(TruncatedBody, match="need"):
        parse_ply(blob[:-10])


def test_parse_zero_norm_rotation_becomes_identity():
    a = GaussianSplatAsset.from_splats([Splat((0, 0, 0), (1, 0, 0, 0), (0, 0, 0), 0.0, (0, 0, 0))])
    blob = bytearray(serialize_ply(a))
    # zero out the quaternion in the single 68-byte record
    off = len(blob) - 16
    blob[off:] = struct.pack("<4f", 0, 0, 0, 0)
    parsed = parse_ply(bytes(blob))
    assert np.array_equal(parsed.rotations[0], np.array([1, 0, 0, 0], dtype=np.float32))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_normalize_rotations_idempotent(seed):
    g = np.random.default_rng(seed)
    q = g.normal(size=(8, 4)) * g.uniform(0.1, 10.0)
    once = normalize_rotations(q)
    twice = normalize_rotations(once)
    assert np.array_equal(once, twice)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=120, deadline=None)
def test_parser_survives_byte_corruption(seed):
    g = np.random.default_rng(seed)
    base = bytearray(serialize_ply(make_asset(g, int(g.integers(0, 6)))))
    for _ in range(int(g.integers(1, 6))):
        action = g.integers(0, 3)
        if action == 0 and base:
            base[int(g.integers(len(base)))] = int(g.integers(256))
        elif action == 1:
            base = base[:int(g.integers(len(base) + 1))]
        else:
            pos = int(g.integers(len(base) + 1))
            base[pos:pos] = bytes(g.integers(0, 256, int(g.integers(1, 9)), dtype=np.uint8))
    try:
        parse_ply(bytes(base))
    except PlyError:
        pass   # typed rejection only; anything else fails the test
