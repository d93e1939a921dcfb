from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import rotation, square_pixel_camera
from slcv.errors import DegenerateCamera, DegenerateInput, RankDeficient, SingularTransform
from slcv.geometry import (
    PixelShape,
    ProjectionMatrix,
    conic_coefficients,
    conic_fit,
    isotropic_lines,
    line_plane_meet,
    optical_center,
    pixel_shape_matrix,
    pixel_shape_normalize,
    plucker_dual,
    plucker_from_points,
    plucker_transform,
    points_on_conic_residual,
    principal_plane,
    proportional,
    veronese2,
    veronese3,
)

E = np.eye(4)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec4 = arrays(np.float64, 4, elements=finite)
vec3 = arrays(np.float64, 3, elements=finite)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def plucker_relation(m):
    return m[0, 1] * m[2, 3] + m[0, 2] * m[3, 1] + m[0, 3] * m[1, 2]


# ---------------------------------------------------------------- Pluecker lines
def test_plucker_from_basis_points():
    m = plucker_from_points(E[0], E[1])
    expected = np.zeros((4, 4))
    expected[0, 1], expected[1, 0] = 1, -1
    np.testing.assert_array_equal(m, expected)


def test_plucker_proportional_points_rejected():
    with pytest.raises(DegenerateInput):
        plucker_from_points(E[0], 2 * E[0])


def test_plucker_meets_pencil_planes(rng):
    p, q = rng.standard_normal(4), rng.standard_normal(4)
    m = plucker_from_points(p, q)
    assert np.linalg.matrix_rank(m) == 2
    assert np.allclose(m, -m.T)
    # planes through p and q: null space of the 2x4 system [p; q]
    _, _, vh = np.linalg.svd(np.vstack([p, q]))
    for plane in vh[2:]:
        assert line_plane_meet(m, plane) is None
        assert np.linalg.norm(m @ plane) < 1e-12


def test_plucker_dual_of_e1e2():
    d = plucker_dual(plucker_from_points(E[0], E[1]))
    nz = np.argwhere(np.abs(d) > 0)
    assert {tuple(i) for i in nz} == {(2, 3), (3, 2)}


def test_plucker_dual_involution(rng):
    m = plucker_from_points(random_complex(rng, 4), random_complex(rng, 4))
    assert proportional(plucker_dual(plucker_dual(m)), m)


def test_dual_is_plane_form(rng):
    # the dual (plane form) annihilates points on the line
    p, q = rng.standard_normal(4), rng.standard_normal(4)
    d = plucker_dual(plucker_from_points(p, q))
    assert np.linalg.norm(d @ p) < 1e-12 and np.linalg.norm(d @ q) < 1e-12
    assert abs(plucker_relation(d)) < 1e-12


def test_isotropic_line_of_canonical_camera():
    # P = [I|0]: the line through the center in direction (x, ix, 0)
    p = np.hstack([np.eye(3), np.zeros((3, 1))])
    line, _ = isotropic_lines(p)
    # intersect with two generic planes and back-project; the image is the cyclic point
    for plane in (np.array([1.0, 2, 3, 4]), np.array([-2.0, 1, 0.5, 1])):
        x = line @ plane
        img = p @ x
        assert proportional(img, np.array([1, 1j, 0]), 1e-12) or proportional(img, np.array([1, -1j, 0]), 1e-12)
    assert np.linalg.norm(plucker_dual(line) @ E[3]) < 1e-12


def test_meet_contained_and_point():
    m = plucker_from_points(E[0], E[1])
    assert line_plane_meet(m, [0, 0, 1, 1]) is None
    assert proportional(line_plane_meet(m, [0, 1, 0, 0]), E[0])


def test_meet_lies_on_plane_and_line(rng):
    p, q, plane = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(4)
    x = line_plane_meet(plucker_from_points(p, q), plane)
    assert abs(plane @ x) < 1e-12 * np.linalg.norm(x)
    coef, *_ = np.linalg.lstsq(np.column_stack([p, q]), x, rcond=None)
    assert np.linalg.norm(np.column_stack([p, q]) @ coef - x) < 1e-12 * np.linalg.norm(x)


def test_transform_identity_and_scale(rng):
    m = plucker_from_points(rng.standard_normal(4), rng.standard_normal(4))
    np.testing.assert_array_equal(plucker_transform(m, np.eye(4)), m)
    np.testing.assert_allclose(plucker_transform(m, 2 * np.eye(4)), 4 * m)
    with pytest.raises(SingularTransform):
        plucker_transform(m, np.diag([1.0, 1, 1, 0]))


def test_transform_consistent_with_points(rng):
    p, q = rng.standard_normal(4), rng.standard_normal(4)
    h = rng.standard_normal((4, 4))
    lhs = plucker_transform(plucker_from_points(p, q), h)
    rhs = plucker_from_points(h @ p, h @ q)
    assert proportional(lhs, rhs)


# ---------------------------------------------------------------- Veronese and conics
def test_veronese_examples():
    np.testing.assert_array_equal(veronese2([1, 0, 0]), [1, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(veronese2([1, 1, 1]), np.ones(6))
    np.testing.assert_array_equal(veronese3([1, 2, 3, 4]), [1, 2, 3, 4, 4, 6, 8, 9, 12, 16])


def test_conic_fit_unit_circle():
    t = np.linspace(0, 2, 5)
    pts = np.column_stack([np.cos(t), np.sin(t), np.ones(5)])
    c = conic_fit(pts)
    assert proportional(c, np.diag([1, 1, -1]))


def test_conic_fit_with_cyclic_points():
    t = np.array([0.3, 1.4, 2.9])
    pts = np.vstack([[1, 1j, 0], [1, -1j, 0], np.column_stack([np.cos(t), np.sin(t), np.ones(3)])])
    assert proportional(conic_fit(pts), np.diag([1, 1, -1]))


def _points_on_conic(rng, c, n):
    """Intersect random lines through a known point of the conic with the conic."""
    # find one point x0 on c (complex allowed): on a random line x = a + t b solve the quadratic
    pts = []
    while len(pts) < n:
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        qa, qb, qc = b @ c @ b, 2 * a @ c @ b, a @ c @ a
        t = np.roots([qa, qb, qc])[0]
        pts.append(a + t * b)
    return np.array(pts)


def test_conic_fit_random_conic(rng):
    c = rng.standard_normal((3, 3))
    c = c + c.T
    pts = _points_on_conic(rng, c, 6)
    fit = conic_fit(pts)
    assert proportional(fit, c, 1e-9)
    assert points_on_conic_residual(pts) <= 1e-10


def test_conic_fit_rank_deficient():
    # four points only determine a pencil of conics; a duplicate keeps it ambiguous
    pts = np.array([[1, 0, 1], [0, 1, 1], [-1, 0, 1], [0, -1, 1], [0, -1, 1]], float)
    with pytest.raises(RankDeficient):
        conic_fit(pts)


def test_points_on_conic_residual_off_conic(rng):
    t = rng.uniform(0, 2 * np.pi, 6)
    pts = np.column_stack([np.cos(t), np.sin(t), np.ones(6)])
    assert points_on_conic_residual(pts) <= 1e-10
    pts[0, :2] += 1e-2
    off = points_on_conic_residual(pts)
    assert off > 1e-6  # recorded: typically ~1e-4 for this construction


def test_five_points_plus_duplicate_on_conic(rng):
    pts = rng.standard_normal((5, 3))
    assert points_on_conic_residual(np.vstack([pts, pts[2]])) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(vec3, arrays(np.float64, (3, 3), elements=finite))
def test_veronese_quadratic_form(x, c):
    c = c + c.T
    assert np.isclose(veronese2(x) @ conic_coefficients(c), x @ c @ x, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conic_fit_five_points_membership(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = random_complex(rng, (5, 3))
    c = conic_fit(pts)
    for x in pts:
        assert abs(x @ c @ x) <= 1e-10 * np.linalg.norm(c) * np.linalg.norm(x) ** 2


@settings(max_examples=40, deadline=None)
@given(vec4, vec4)
def test_join_then_meet_contained(p, q):
    s = np.linalg.svd(np.vstack([p, q]), compute_uv=False)
    if s[1] < 1e-3 * max(s[0], 1e-12):
        return
    m = plucker_from_points(p, q)
    _, _, vh = np.linalg.svd(np.vstack([p, q]))
    for plane in vh[2:]:
        assert line_plane_meet(m, plane, rtol=1e-10) is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dual_involution_property(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    m = plucker_from_points(random_complex(rng, 4), random_complex(rng, 4))
    assert proportional(plucker_dual(plucker_dual(m)), m)


# ---------------------------------------------------------------- cameras
def _on_absolute_conic(p) -> float:
    worst = 0.0
    for line in isotropic_lines(p):
        x = line_plane_meet(line, E[3])
        assert abs(x[3]) < 1e-12 * np.linalg.norm(x)
        worst = max(worst, abs(x[:3] @ x[:3]) / np.linalg.norm(x[:3]) ** 2)
    return worst


def test_isotropic_lines_canonical_camera():
    p = np.hstack([np.eye(3), np.zeros((3, 1))])
    assert _on_absolute_conic(p) <= 1e-14
    for line in isotropic_lines(p):
        assert np.linalg.norm(plucker_dual(line) @ E[3]) < 1e-14


def test_isotropic_lines_synthetic(rng):
    _, _, c, p = square_pixel_camera(rng)
    assert _on_absolute_conic(p) <= 1e-10
    l1, l2 = isotropic_lines(p)
    np.testing.assert_array_equal(l2, l1.conj())
    center = np.append(c, 1)
    for line in (l1, l2):
        assert np.linalg.norm(plucker_dual(line) @ center) < 1e-10 * np.linalg.norm(center)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_isotropic_lines_meet_absolute_conic(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    assert _on_absolute_conic(square_pixel_camera(rng)[3]) <= 1e-10


def test_isotropic_lines_need_finite_camera():
    p = np.array([[1.0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
    with pytest.raises(DegenerateCamera):
        isotropic_lines(p)


def test_optical_center(rng):
    np.testing.assert_allclose(optical_center(np.hstack([np.eye(3), np.zeros((3, 1))])), E[3])
    _, _, c, p = square_pixel_camera(rng)
    assert proportional(optical_center(p), np.append(c, 1))
    with pytest.raises(DegenerateCamera):
        optical_center(np.array([[1.0, 0, 0, 0], [0, 1, 0, 0], [1, 1, 0, 0]]))


def test_principal_plane(rng):
    np.testing.assert_array_equal(principal_plane(np.hstack([np.eye(3), np.zeros((3, 1))])), E[2])
    _, _, _, p = square_pixel_camera(rng)
    pp = principal_plane(p)
    c = optical_center(p)
    assert abs(pp @ c) < 1e-10 * np.linalg.norm(pp)
    for line in isotropic_lines(p):
        assert line_plane_meet(line, pp, rtol=1e-10) is None


def test_pixel_shape_identity(rng):
    np.testing.assert_allclose(pixel_shape_matrix(PixelShape()), np.eye(3), atol=1e-16)
    p = rng.standard_normal((3, 4))
    np.testing.assert_allclose(pixel_shape_normalize(p, PixelShape()), p, atol=1e-15)
    twice = pixel_shape_normalize(pixel_shape_normalize(p, PixelShape()), PixelShape())
    np.testing.assert_allclose(twice, p, atol=1e-15)


def test_pixel_shape_normalize_makes_square_pixels(rng):
    # general intrinsics in the (f, m_x, m_y, theta) parameterization
    f, mx, my, theta = 900.0, 1.0, 1.1, np.deg2rad(85)
    k = np.array([[f * mx, -f * mx / np.tan(theta), 610], [0, f * my / np.sin(theta), 470], [0, 0, 1]])
    r, c = rotation(rng), rng.standard_normal(3) * 5
    p = k @ r @ np.hstack([np.eye(3), -c[:, None]])
    assert _on_absolute_conic(p) > 1e-3
    q = pixel_shape_normalize(ProjectionMatrix(p), PixelShape(my / mx, theta))
    assert isinstance(q, ProjectionMatrix)
    assert _on_absolute_conic(q.p) <= 1e-10


def test_pixel_shape_validation():
    with pytest.raises(ValueError):
        PixelShape(tau=0)
    with pytest.raises(ValueError):
        PixelShape(theta=np.pi)


def test_projection_matrix_shape():
    with pytest.raises(ValueError):
        ProjectionMatrix(np.eye(3))
