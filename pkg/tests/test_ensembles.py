import math

import numpy as np
import pytest
from scipy import integrate, stats

from devbound.ensembles import (
    EnsembleSpec,
    inv_sqrt_spd,
    read_matrix_csv,
    row_psi2_bound,
    sample_matrix,
    scalar_psi2,
    sqrt_spd,
    whiten,
    write_matrix_csv,
)

# Fixed points of E exp((X/K)^2) = 2, frozen from quadrature runs.
PSI2_UNIFORM = 1.338369155430911
PSI2_STUDENT_T = 3.059858832590432


def test_psi2_gaussian_closed_form():
    assert scalar_psi2("gaussian") == pytest.approx(math.sqrt(8.0 / 3.0), abs=1e-15)


def test_psi2_rademacher_closed_form():
    assert scalar_psi2("rademacher") == pytest.approx(1.0 / math.sqrt(math.log(2.0)), abs=1e-15)


def test_psi2_uniform_frozen_value():
    assert scalar_psi2("uniform") == pytest.approx(PSI2_UNIFORM, rel=1e-9)


def test_psi2_student_t_frozen_value():
    assert scalar_psi2("student_t") == pytest.approx(PSI2_STUDENT_T, rel=1e-6)


@pytest.mark.parametrize("family", ["gaussian", "rademacher", "uniform"])
def test_psi2_defining_property(family):
    # Independent check: E exp((X/K)^2) must equal 2 at the returned K.
    k = scalar_psi2(family)
    if family == "gaussian":
        value = 1.0 / math.sqrt(1.0 - 2.0 / k**2)
    elif family == "rademacher":
        value = math.exp(1.0 / k**2)
    else:
        half = math.sqrt(3.0)
        value, _ = integrate.quad(lambda x: math.exp((x / k) ** 2) / (2 * half), -half, half)
    assert value == pytest.approx(2.0, rel=1e-8)


@pytest.mark.parametrize("family,kurtosis_sign", [("uniform", -1), ("student_t", 1)])
def test_entry_moments(family, kurtosis_sign):
    spec = EnsembleSpec(family=family, m=400, n=250, seed=11)
    x = sample_matrix(spec, 0).entries.ravel()
    assert abs(x.mean()) < 0.01
    assert x.var() == pytest.approx(1.0, abs=0.02)
    assert np.sign(stats.kurtosis(x)) == kurtosis_sign


def test_rademacher_entries_are_signs():
    spec = EnsembleSpec(family="rademacher", m=20, n=30, seed=0)
    x = sample_matrix(spec, 0).entries
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_student_t_truncation_cut():
    spec = EnsembleSpec(family="student_t", m=300, n=300, seed=2)
    x = sample_matrix(spec, 0).entries
    # +-10 sd of the raw law, rescaled to unit variance.
    cut = 10.0 * math.sqrt(5.0 / 3.0) / 1.2856157416670126
    assert np.abs(x).max() <= cut + 1e-12


def test_isotropy_of_rows():
    spec = EnsembleSpec(family="gaussian", m=60_000 // 8, n=8, seed=5)
    x = sample_matrix(spec, 0).entries
    second_moment = x.T @ x / x.shape[0]
    assert np.allclose(second_moment, np.eye(8), atol=0.08)


def test_anisotropic_rows_match_covariance():
    rng = np.random.default_rng(3)
    root = rng.standard_normal((4, 4))
    cov = root @ root.T + 4.0 * np.eye(4)
    spec = EnsembleSpec(family="gaussian", m=40_000, n=4, covariance=cov, seed=9)
    x = sample_matrix(spec, 0).entries
    emp = x.T @ x / x.shape[0]
    assert np.allclose(emp, cov, rtol=0.1, atol=0.15)


def test_row_psi2_bound_scales_with_covariance():
    cov = np.diag([4.0, 1.0])
    spec = EnsembleSpec(family="gaussian", m=5, n=2, covariance=cov, seed=0)
    iso = EnsembleSpec(family="gaussian", m=5, n=2, seed=0)
    assert row_psi2_bound(spec) == pytest.approx(2.0 * row_psi2_bound(iso))


def test_spd_roots_invert_each_other():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((5, 5))
    cov = a @ a.T + np.eye(5)
    root = sqrt_spd(cov)
    assert np.allclose(root @ root, cov)
    assert np.allclose(root @ inv_sqrt_spd(cov), np.eye(5), atol=1e-10)


def test_covariance_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(family="gaussian", m=3, n=2, covariance=np.array([[1.0, 0.0], [0.1, 1.0]]), seed=0)
    with pytest.raises(ValueError):
        EnsembleSpec(family="gaussian", m=3, n=2, covariance=np.zeros((2, 2)), seed=0)
    with pytest.raises(ValueError):
        EnsembleSpec(family="gaussian", m=3, n=3, covariance=np.eye(2), seed=0)


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(family="poisson", m=3, n=2, seed=0)
    with pytest.raises(ValueError):
        EnsembleSpec(family="gaussian", m=0, n=2, seed=0)
    with pytest.raises(ValueError):
        EnsembleSpec(family="gaussian", m=3, n=2, seed=-1)


def test_draws_keyed_by_index_and_seed():
    spec = EnsembleSpec(family="gaussian", m=6, n=4, seed=21)
    same = sample_matrix(spec, 2).entries
    again = sample_matrix(spec, 2).entries
    other_draw = sample_matrix(spec, 3).entries
    other_seed = sample_matrix(EnsembleSpec(family="gaussian", m=6, n=4, seed=22), 2).entries
    assert np.array_equal(same, again)
    assert not np.array_equal(same, other_draw)
    assert not np.array_equal(same, other_seed)


def test_whiten_restores_isotropy():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    spec = EnsembleSpec(family="gaussian", m=30_000, n=2, covariance=cov, seed=4)
    sample = sample_matrix(spec, 0)
    white = whiten(sample)
    assert white.spec.isotropic
    emp = white.entries.T @ white.entries / white.entries.shape[0]
    assert np.allclose(emp, np.eye(2), atol=0.05)
    # Whitening is exactly the right-multiplication by the inverse root.
    assert np.allclose(white.entries, sample.entries @ inv_sqrt_spd(cov))


def test_matrix_csv_round_trip(tmp_path):
    spec = EnsembleSpec(family="uniform", m=7, n=3, seed=13)
    sample = sample_matrix(spec, 5)
    path = tmp_path / "matrix.csv"
    write_matrix_csv(sample, path)
    loaded = read_matrix_csv(path)
    assert np.array_equal(loaded.entries, sample.entries)
    assert loaded.spec.family == "uniform"
    assert loaded.spec.m == 7 and loaded.spec.n == 3
    assert loaded.spec.seed == 13 and loaded.draw_index == 5
