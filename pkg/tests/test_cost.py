from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cached_scene
from slcv.cost import (
    CostContext,
    CostWeights,
    IAC,
    c0,
    c0_batch,
    c1,
    c2,
    c3,
    c4,
    cost_z,
    iac_from_plane,
    normalize_iac,
    principal_point,
)
from slcv.errors import DegenerateAdjoint, IllConditioned, ZeroMatrix
from slcv.geometry import proportional
from slcv.variety import CameraTriple, candidate_planes, z_of_plane

seeds = st.integers(0, 2**32 - 1)


def complex_symmetric(rng):
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    return a + a.T


def iac_of(k):
    return np.linalg.inv(k @ k.T)


def context(seed, weights=CostWeights(), cams=None):
    truth, recon = cached_scene(seed, n_points=20, n_bar_triplets=0)
    t = CameraTriple.from_cameras(recon.cameras[:3])
    cameras = recon.cameras if cams is None else recon.cameras[:cams]
    return truth, recon, t, CostContext(cameras, t.iso_lines, weights)


# ---------------------------------------------------------------- normalization
def test_normalize_real_matrix(rng):
    w = rng.standard_normal((3, 3))
    w = w + w.T
    out = normalize_iac(w)
    assert out.normalized
    assert np.allclose(out.omega.imag, 0)
    assert np.allclose(np.abs(out.omega.real), np.abs(w) / np.linalg.norm(w))


def test_normalize_imaginary_matrix(rng):
    w = rng.standard_normal((3, 3))
    w = w + w.T
    out = normalize_iac(1j * w)
    assert np.linalg.norm(out.omega.imag) < 1e-15
    assert proportional(out.omega, w)


def _phase_sweep_max(w, n=10_000):
    phases = np.exp(2j * np.pi * np.arange(n) / n)
    return max(np.linalg.norm((u * w).real) for u in phases)


def test_normalize_phase_oracle(rng):
    for _ in range(5):
        w = complex_symmetric(rng)
        out = normalize_iac(w).omega
        assert abs(np.linalg.norm(out) - 1) < 1e-12
        best = _phase_sweep_max(w / np.linalg.norm(w))
        assert np.linalg.norm(out.real) >= best - 1e-12
        assert np.linalg.norm(out.real) - best < 1e-6  # sweep resolution


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_phase_optimality_property(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    out = normalize_iac(complex_symmetric(rng)).omega
    ref = np.linalg.norm(out.real)
    for u in np.exp(2j * np.pi * np.arange(16) / 16):
        assert np.linalg.norm((u * out).real) <= ref + 1e-12


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0, 2 * np.pi))
def test_c1_zero_for_phased_real_matrix(seed, phase):
    rng = np.random.Generator(np.random.PCG64(seed))
    w = rng.standard_normal((3, 3))
    w = w + w.T
    assert c1(normalize_iac(np.exp(1j * phase) * w)) <= 1e-12


def test_normalize_zero():
    with pytest.raises(ZeroMatrix):
        normalize_iac(np.zeros((3, 3)))


# ---------------------------------------------------------------- terms
def test_c1_examples(rng):
    w = rng.standard_normal((3, 3))
    assert c1(w + w.T) == 0
    m = np.zeros((3, 3), complex)
    m[0, 0] = 1
    m[0, 1] = m[1, 0] = 1j
    assert c1(m) == pytest.approx(np.sqrt(2) / 2, abs=1e-15)
    z = complex_symmetric(rng)
    assert c1(3.7 * z) == pytest.approx(c1(z), rel=1e-12)
    assert c1(-0.2 * z) == pytest.approx(c1(z), rel=1e-12)


def test_c2_examples():
    assert c2(np.eye(3)) == 0
    assert c2(-np.eye(3)) == 0
    assert c2(np.diag([1.0, -1, 1])) == 2


def test_c3_examples(rng):
    assert c3(np.eye(3)) == 0
    assert c3(np.diag([2.0, 1, 1])) == 1
    k = np.array([[950.0, 0, 600], [0, 950, 500], [0, 0, 1]])
    assert c3(normalize_iac(iac_of(k))) <= 1e-9
    with pytest.raises(IllConditioned):
        c3(np.diag([0.0, 1, 1]))


@pytest.mark.parametrize("pp,expected", [((640, 480), 0), ((-10, 480), 10), ((1300, -5), 25)])
def test_c4_examples(pp, expected):
    k = np.array([[1000.0, 0, pp[0]], [0, 1000, pp[1]], [0, 0, 1]])
    w = normalize_iac(iac_of(k))
    assert c4(w, 1280, 960) == pytest.approx(expected, abs=1e-8)
    np.testing.assert_allclose(principal_point(w), pp, atol=1e-8)


def test_c4_degenerate():
    with pytest.raises(DegenerateAdjoint):
        c4(np.diag([0.0, 1, 1]), 1280, 960)


def test_c4_respects_frame():
    # an IAC written in normalized coordinates reports its pixel principal point
    frame = np.array([[640.0, 0, 640], [0, 640, 480], [0, 0, 1]])
    k_pix = np.array([[1000.0, 0, -10], [0, 1000, 480], [0, 0, 1]])
    k_norm = np.linalg.solve(frame, k_pix)
    w = IAC(iac_of(k_norm), False, frame)
    assert c4(w, 1280, 960) == pytest.approx(10, abs=1e-8)


@settings(max_examples=80, deadline=None)
@given(seeds)
def test_terms_nonnegative(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    w = normalize_iac(complex_symmetric(rng))
    assert c1(w) >= 0 and c2(w) >= 0
    try:
        assert c3(w) >= 0
    except IllConditioned:
        pass
    try:
        assert c4(w, 2.0, 2.0) >= 0
    except DegenerateAdjoint:
        pass


# ---------------------------------------------------------------- IACs from planes
def test_iac_from_true_plane():
    truth, recon, t, ctx = context(0)
    for i in range(len(recon.cameras)):
        w = iac_from_plane(truth.plane, i, ctx)
        assert proportional(w.pixel(), iac_of(truth.cameras[i].k), 1e-7)


def test_triple_cameras_square_pixel_on_variety():
    _, _, t, ctx = context(1)
    for z in (0.2 + 0.5j, -1.1 + 0.3j, 3 - 2j):
        pair = candidate_planes(t, z)
        for chi in (pair.chi1, pair.chi2):
            for i in range(3):
                assert c3(iac_from_plane(chi, i, ctx)) <= 1e-9


def test_iac_homogeneous_in_plane(rng):
    _, _, _, ctx = context(2)
    chi = rng.standard_normal(4)
    a = iac_from_plane(chi, 3, ctx)
    b = iac_from_plane(5 * chi, 3, ctx)
    assert proportional(a.omega, b.omega, 1e-12)


# ---------------------------------------------------------------- C0 and C(z)
def test_c0_true_plane_and_recomputation():
    truth, recon, t, ctx = context(3)
    br = c0(truth.plane, ctx)
    assert br.c0 <= 1e-6
    assert np.all(br.terms >= 0)
    np.testing.assert_allclose(br.weighted, br.terms @ ctx.weights.as_array())
    assert br.c0 == np.max(br.weighted)


def test_c0_is_max_of_weighted_sums(rng):
    _, _, t, ctx = context(4, CostWeights(0.5, 2.0, 1.5, 0.01))
    pair = candidate_planes(t, 0.4 - 0.2j)
    for chi in (pair.chi1, pair.chi2):
        br = c0(chi, ctx)
        direct = max(
            sum(g * term for g, term in zip(ctx.weights.as_array(), row)) for row in br.terms
        )
        assert br.c0 == pytest.approx(direct, rel=1e-14)
        assert c0_batch(chi[None], ctx)[0] == pytest.approx(br.c0, rel=1e-12)


def test_c0_plane_through_center_is_infinite():
    _, _, t, ctx = context(0)
    _, _, vh = np.linalg.svd(t.centers[1][None])
    assert c0(vh[1] + vh[2], ctx).c0 == np.inf


def test_c0_zero_weights(rng):
    _, _, t, ctx = context(0, CostWeights(0, 0, 0, 0))
    pair = candidate_planes(t, 0.1 + 0.1j)
    assert c0(pair.chi1, ctx).c0 == 0


def test_c0_of_triple_only_square_pixel_term():
    # the variety forces square pixels on the triple's own cameras; the other
    # terms (reality, definiteness, principal point) are not forced
    _, _, t, ctx = context(5, CostWeights(0, 0, 1, 0), cams=3)
    for z in (0.3 + 0.3j, -2 + 0.1j, 0.05 - 0.7j):
        pair = candidate_planes(t, z)
        for chi in (pair.chi1, pair.chi2):
            assert c0(chi, ctx).c0 <= 1e-9


def test_cost_z_truth_and_degenerate(rng):
    truth, recon, t, ctx = context(6)
    zt = z_of_plane(t, truth.plane)
    assert cost_z(zt, ctx, t) <= 1e-6
    # a real plane through C2 and C3 defines a z with a degenerate frame
    _, _, vh = np.linalg.svd(np.vstack([t.centers[1], t.centers[2]]))
    q = t.iso_lines[0] @ (vh[2] + 0.3 * vh[3])
    coef, *_ = np.linalg.lstsq(np.column_stack([t.fixed_point(), t.centers[0]]), q, rcond=None)
    assert cost_z(coef[1] / coef[0], ctx, t) == np.inf


def test_cost_invariant_under_plane_conjugation():
    _, _, t, ctx = context(7)
    pair = candidate_planes(t, 0.6 + 0.2j)
    for chi in (pair.chi1, pair.chi2):
        assert c0(chi.conj(), ctx).c0 == pytest.approx(c0(chi, ctx).c0, rel=1e-9, abs=1e-14)
