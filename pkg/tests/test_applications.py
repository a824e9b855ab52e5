import math
from itertools import combinations

import numpy as np
import pytest

from devbound.applications import (
    escape_check,
    jl_embed,
    jl_global_bound,
    jl_local_bound,
    max_image_norm,
    min_image_norm,
    mstar_radius,
    random_image_radius,
    singular_interval_check,
)
from devbound.ensembles import EnsembleSpec, row_psi2_bound, sample_matrix
from devbound.geometry import (
    Ball2,
    FiniteCloud,
    L1Ball,
    Scaled,
    SparseVectors,
    Sphere,
    StarHull,
    UnsupportedOperation,
)


def test_singular_interval_no_violations_when_tall():
    spec = EnsembleSpec(family="gaussian", m=400, n=10, seed=0)
    rep = singular_interval_check(spec, n_trials=30)
    assert rep.violations == 0
    assert rep.sigma_min.shape == (30,)
    assert (rep.sigma_min <= rep.sigma_max).all()
    k = row_psi2_bound(spec)
    assert rep.lower == pytest.approx(20.0 - 2.0 * k * k * math.sqrt(10))
    assert rep.upper == pytest.approx(20.0 + 2.0 * k * k * math.sqrt(10))


def test_singular_interval_column_case():
    spec = EnsembleSpec(family="rademacher", m=64, n=1, seed=1)
    rep = singular_interval_check(spec, n_trials=20)
    # A sign column always has norm exactly sqrt(m).
    assert np.allclose(rep.sigma_min, 8.0)
    assert np.allclose(rep.sigma_max, 8.0)
    assert rep.violations == 0


def test_singular_interval_guards():
    with pytest.raises(ValueError):
        singular_interval_check(EnsembleSpec(family="gaussian", m=5, n=10, seed=0))
    aniso = EnsembleSpec(family="gaussian", m=10, n=3, seed=0, covariance=np.diag([2.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        singular_interval_check(aniso)


def _cloud(n_points=12, n=30, seed=0):
    return FiniteCloud(np.random.default_rng(seed).standard_normal((n_points, n)))


def test_jl_translation_and_scale_invariance():
    cloud = _cloud()
    spec = EnsembleSpec(family="gaussian", m=20, n=30, seed=2)
    base = jl_embed(cloud, spec)
    shifted = jl_embed(FiniteCloud(cloud.points + 5.0), spec)
    scaled = jl_embed(FiniteCloud(3.0 * cloud.points), spec)
    assert np.allclose(base.distortions, shifted.distortions, rtol=1e-9)
    assert np.allclose(base.distortions, scaled.distortions, rtol=1e-9)


def test_jl_bound_formula_and_fields():
    cloud = _cloud(n_points=8)
    spec = EnsembleSpec(family="gaussian", m=25, n=30, seed=3)
    rep = jl_embed(cloud, spec, draw_index=4, c_cal=1.5)
    k = row_psi2_bound(spec)
    assert rep.bound == pytest.approx(1.5 * k * k * math.sqrt(math.log(8)) / 5.0)
    assert rep.n_points == 8 and rep.draw_index == 4
    assert rep.distortions.shape == (8 * 7 // 2,)
    assert rep.max_distortion == pytest.approx(float(rep.distortions.max()))


def test_jl_guards():
    spec = EnsembleSpec(family="gaussian", m=10, n=4, seed=0)
    with pytest.raises(ValueError):
        jl_embed(FiniteCloud(np.ones((1, 4))), spec)
    dup = FiniteCloud(np.vstack([np.ones(4), np.ones(4)]))
    with pytest.raises(ValueError):
        jl_embed(dup, spec)


def test_jl_local_equals_global_for_widest_pair():
    pts = np.vstack([np.zeros(6), np.eye(6)[0] * 4.0, np.eye(6)[1]])
    cloud = FiniteCloud(pts)
    dists = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    i, j = np.unravel_index(int(np.argmax(dists)), dists.shape)
    local = jl_local_bound(cloud, (int(i), int(j)), m=16, n_samples=400, seed=5)
    other = jl_local_bound(cloud, (0, 2), m=16, n_samples=400, seed=5)
    glob = jl_global_bound(cloud, m=16, n_samples=400, seed=5)
    # The widest pair's ball covers the whole star hull: identical estimate.
    assert local == pytest.approx(glob, rel=1e-12)
    # A short pair's cap is strictly smaller.
    assert other < glob


def test_jl_local_gap_on_clustered_cloud():
    rng = np.random.default_rng(6)
    a = rng.normal(0.0, 0.05, size=(5, 10))
    b = rng.normal(0.0, 0.05, size=(5, 10)) + 20.0
    cloud = FiniteCloud(np.vstack([a, b]))
    local = jl_local_bound(cloud, (0, 1), m=9, n_samples=500, seed=7)
    glob = jl_global_bound(cloud, m=9, n_samples=500, seed=7)
    assert local < 0.25 * glob


def test_min_image_norm_exact_paths():
    A = np.random.default_rng(8).standard_normal((6, 4))
    pts = np.random.default_rng(9).standard_normal((7, 4))
    assert min_image_norm(A, FiniteCloud(pts)) == pytest.approx(
        float(np.linalg.norm(A @ pts.T, axis=0).min())
    )
    s = np.linalg.svd(A, compute_uv=False)
    assert min_image_norm(A, Sphere(2.0, 4)) == pytest.approx(2.0 * s.min())
    assert min_image_norm(A, Scaled(3.0, Sphere(2.0, 4))) == pytest.approx(6.0 * s.min())
    # Wide matrix: the kernel reaches the sphere.
    assert min_image_norm(np.ones((2, 5)), Sphere(1.0, 5)) == 0.0


def test_min_image_norm_sparse_vs_brute():
    A = np.random.default_rng(10).standard_normal((8, 6))
    T = SparseVectors(2, 6, radius=1.5, surface=True)
    expect = min(
        float(np.linalg.svd(A[:, S], compute_uv=False).min()) for S in combinations(range(6), 2)
    )
    assert min_image_norm(A, T) == pytest.approx(1.5 * expect)
    # Fewer rows than sparsity: every support has a kernel.
    assert min_image_norm(np.ones((1, 6)), T) == 0.0


def test_min_image_norm_refuses_heuristics():
    A = np.eye(3)
    with pytest.raises(UnsupportedOperation):
        min_image_norm(A, L1Ball(1.0, 3))
    with pytest.raises(UnsupportedOperation):
        min_image_norm(A, SparseVectors(1, 3, radius=1.0, surface=False))


def test_max_image_norm_exact_paths():
    A = np.random.default_rng(11).standard_normal((5, 4))
    s = np.linalg.svd(A, compute_uv=False)
    assert max_image_norm(A, Ball2(2.0, 4)) == pytest.approx(2.0 * s.max())
    assert max_image_norm(A, Sphere(2.0, 4)) == pytest.approx(2.0 * s.max())
    pts = np.random.default_rng(12).standard_normal((6, 4))
    expect = float(np.linalg.norm(A @ pts.T, axis=0).max())
    assert max_image_norm(A, FiniteCloud(pts)) == pytest.approx(expect)
    assert max_image_norm(A, StarHull(FiniteCloud(pts))) == pytest.approx(expect)
    T = SparseVectors(2, 4, radius=1.0)
    brute = max(
        float(np.linalg.svd(A[:, S], compute_uv=False).max()) for S in combinations(range(4), 2)
    )
    assert max_image_norm(A, T) == pytest.approx(brute)
    with pytest.raises(UnsupportedOperation):
        max_image_norm(A, L1Ball(1.0, 4))


def test_escape_certain_when_m_exceeds_n():
    spec = EnsembleSpec(family="gaussian", m=8, n=6, seed=13)
    T = SparseVectors(2, 6, radius=1.0, surface=True)
    rep = escape_check(spec, T, n_trials=50)
    # With m > n the matrix is a.s. injective, so escape always happens.
    assert rep.frequency == 1.0
    assert (rep.min_norms > 0).all()
    assert rep.escape_count == 50


def test_escape_impossible_below_sparsity():
    spec = EnsembleSpec(family="gaussian", m=1, n=6, seed=14)
    T = SparseVectors(2, 6, radius=1.0, surface=True)
    rep = escape_check(spec, T, n_trials=30)
    # One row cannot be injective on any 2-column support.
    assert rep.frequency == 0.0
    assert np.allclose(rep.min_norms, 0.0)
    assert rep.m_threshold_theory > 0.0


def test_escape_guards():
    spec = EnsembleSpec(family="gaussian", m=5, n=4, seed=0)
    with pytest.raises(ValueError):
        escape_check(spec, Ball2(1.0, 4), n_trials=5)
    aniso = EnsembleSpec(family="gaussian", m=5, n=4, seed=0, covariance=np.eye(4) * 2.0)
    with pytest.raises(ValueError):
        escape_check(aniso, SparseVectors(2, 4, radius=1.0, surface=True), n_trials=5)


def test_mstar_radius_ball_section_is_full_radius():
    spec = EnsembleSpec(family="gaussian", m=4, n=12, seed=15)
    rep = mstar_radius(spec, Ball2(1.0, 12), n_trials=5, n_starts=4)
    # Any unit kernel vector lies in the unit ball, so the lower bound is 1.
    assert np.allclose(rep.radius_lbs, 1.0, atol=1e-12)
    assert rep.gamma_hat == pytest.approx(3.3927605357798485, rel=1e-9)


def test_mstar_radius_trivial_kernel():
    spec = EnsembleSpec(family="gaussian", m=20, n=5, seed=16)
    rep = mstar_radius(spec, Ball2(1.0, 5), n_trials=4, n_starts=2)
    assert np.allclose(rep.radius_lbs, 0.0)
    assert rep.all_below


def test_mstar_radius_shrinks_with_m():
    T = L1Ball(1.0, 24)
    small = mstar_radius(EnsembleSpec(family="gaussian", m=4, n=24, seed=17), T, n_trials=8)
    large = mstar_radius(EnsembleSpec(family="gaussian", m=18, n=24, seed=17), T, n_trials=8)
    assert large.radius_lbs.mean() < small.radius_lbs.mean()
    assert large.bounds[0] < small.bounds[0]


def test_image_radius_bound_holds():
    spec = EnsembleSpec(family="gaussian", m=60, n=8, seed=18)
    rep = random_image_radius(spec, Ball2(1.0, 8), n_trials=40)
    assert rep.all_below
    assert rep.set_radius == 1.0
    expect = math.sqrt(60) + rep.c_cal * rep.k_value**2 * rep.gamma_hat
    assert rep.bounds[0] == pytest.approx(expect)
    # Image radii of the unit ball equal the top singular value.
    A0 = sample_matrix(spec, 0).entries
    assert rep.image_radii[0] == pytest.approx(float(np.linalg.svd(A0, compute_uv=False).max()))
