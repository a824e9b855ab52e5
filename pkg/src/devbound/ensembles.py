"""Row-independent random matrix ensembles with sub-gaussian rows.

A spec names an entry family, the shape, an optional row covariance, and a
master seed.  Rows are drawn isotropic (unit covariance) and then mapped
through the symmetric square root of the covariance when one is given, so
every ensemble here satisfies E[row rowᵀ] = Σ with independent rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.stats import t as _student_t

from .rng import substream

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
UNIFORM = "uniform"
STUDENT_T = "student_t"
FAMILIES = (GAUSSIAN, RADEMACHER, UNIFORM, STUDENT_T)

# Heavy-tailed base law for the truncated family; any fixed df > 4 works,
# this one keeps a finite fourth moment while staying visibly non-gaussian.
_T_DF = 5
_T_SD = math.sqrt(_T_DF / (_T_DF - 2))
_T_CUT = 10.0 * _T_SD  # truncation point, +-10 standard deviations

_EIG_FLOOR = 1e-12
_UNIFORM_HALF_WIDTH = math.sqrt(3.0)  # uniform on [-sqrt(3), sqrt(3)] has unit variance


@dataclass
class EnsembleSpec:
    """Description of one random matrix ensemble.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``; the scalar law of isotropic row entries.
    m, n : int
        Number of rows and columns, both >= 1.
    covariance : ndarray or None
        Optional n x n symmetric positive definite row covariance.  None
        means isotropic rows.
    seed : int
        Master seed (uint64); together with a draw index it pins every
        matrix bit-for-bit.
    """

    family: str
    m: int
    n: int
    covariance: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.m < 1 or self.n < 1:
            raise ValueError(f"matrix shape must be positive, got m={self.m} n={self.n}")
        if not (0 <= int(self.seed) <= 2**64 - 1):
            raise ValueError(f"seed must fit in uint64, got {self.seed}")
        if self.covariance is not None:
            cov = np.asarray(self.covariance, dtype=float)
            if cov.shape != (self.n, self.n):
                raise ValueError(f"covariance must be {self.n}x{self.n}, got {cov.shape}")
            scale = max(1.0, float(np.abs(cov).max()))
            if np.abs(cov - cov.T).max() > 1e-12 * scale:
                raise ValueError("covariance must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= _EIG_FLOOR:
                raise ValueError(f"covariance must be positive definite (eigenvalues > {_EIG_FLOOR})")
            self.covariance = cov

    @property
    def isotropic(self) -> bool:
        return self.covariance is None


@dataclass
class MatrixSample:
    """One realized matrix together with its provenance."""

    entries: np.ndarray
    spec: EnsembleSpec
    draw_index: int

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def n(self) -> int:
        return self.spec.n


def _sym_eig_sqrt(matrix: np.ndarray, invert: bool) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    if vals.min() <= _EIG_FLOOR:
        raise ValueError("matrix is numerically singular; cannot take SPD square root")
    roots = 1.0 / np.sqrt(vals) if invert else np.sqrt(vals)
    return (vecs * roots) @ vecs.T


def sqrt_spd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix via eigendecomposition."""
    return _sym_eig_sqrt(np.asarray(matrix, dtype=float), invert=False)


def inv_sqrt_spd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    return _sym_eig_sqrt(np.asarray(matrix, dtype=float), invert=True)


def sqrt_covariance(spec: EnsembleSpec) -> np.ndarray | None:
    """Square root of the spec's row covariance, or None when isotropic."""
    if spec.covariance is None:
        return None
    return sqrt_spd(spec.covariance)


@lru_cache(maxsize=None)
def _truncated_t_scale() -> float:
    # Variance of the +-_T_CUT truncation of the base t law; dividing by its
    # square root restores unit variance.
    mass = _student_t.cdf(_T_CUT, _T_DF) - _student_t.cdf(-_T_CUT, _T_DF)
    var = (
        2.0
        * integrate.quad(lambda x: x * x * _student_t.pdf(x, _T_DF), 0.0, _T_CUT, limit=200)[0]
        / mass
    )
    return math.sqrt(var)


def _psi2_from_density(density, upper: float) -> float:
    """Smallest K with E exp(X^2/K^2) = 2 for a symmetric density on [-upper, upper]."""

    def mean_exp_minus_two(k: float) -> float:
        # Cap the exponent: overflowing k values are far above the root and
        # only their sign matters to the bracketing search.
        val = integrate.quad(
            lambda x: math.exp(min((x / k) ** 2, 700.0)) * density(x), 0.0, upper, limit=200
        )[0]
        return 2.0 * val - 2.0

    lo, hi = upper / 50.0, 50.0 * upper
    return brentq(mean_exp_minus_two, lo, hi, xtol=1e-12, rtol=1e-10)


@lru_cache(maxsize=None)
def scalar_psi2(family: str) -> float:
    """psi2 norm of one unit-variance entry from the family.

    The norm is the smallest K with E exp(X^2/K^2) <= 2.  Gaussian and
    sign entries have closed forms; the bounded families are solved by
    quadrature plus bisection.
    """
    if family == GAUSSIAN:
        return math.sqrt(8.0 / 3.0)
    if family == RADEMACHER:
        return 1.0 / math.sqrt(math.log(2.0))
    if family == UNIFORM:
        half = _UNIFORM_HALF_WIDTH
        return _psi2_from_density(lambda x: 1.0 / (2.0 * half), half)
    if family == STUDENT_T:
        scale = _truncated_t_scale()
        mass = _student_t.cdf(_T_CUT, _T_DF) - _student_t.cdf(-_T_CUT, _T_DF)
        density = lambda x: scale * _student_t.pdf(scale * x, _T_DF) / mass
        return _psi2_from_density(density, _T_CUT / scale)
    raise ValueError(f"unknown family {family!r}")


def row_psi2_bound(spec: EnsembleSpec) -> float:
    """Upper bound on the psi2 norm of marginals <row, u> over unit u.

    For isotropic rows this is the scalar entry norm; a covariance scales it
    by the operator norm of its square root.
    """
    base = scalar_psi2(spec.family)
    if spec.covariance is None:
        return base
    top_eig = float(np.linalg.eigvalsh(spec.covariance).max())
    return base * math.sqrt(top_eig)


def _isotropic_entries(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    shape = (spec.m, spec.n)
    if spec.family == GAUSSIAN:
        return rng.standard_normal(shape)
    if spec.family == RADEMACHER:
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    if spec.family == UNIFORM:
        return rng.uniform(-_UNIFORM_HALF_WIDTH, _UNIFORM_HALF_WIDTH, size=shape)
    if spec.family == STUDENT_T:
        # Inverse-CDF sampling of the truncated law keeps exactly one uniform
        # per entry, so draw counts never depend on the realized values.
        lo = _student_t.cdf(-_T_CUT, _T_DF)
        hi = _student_t.cdf(_T_CUT, _T_DF)
        u = rng.uniform(lo, hi, size=shape)
        return _student_t.ppf(u, _T_DF) / _truncated_t_scale()
    raise ValueError(f"unknown family {spec.family!r}")


def sample_matrix(spec: EnsembleSpec, draw_index: int = 0) -> MatrixSample:
    """Draw matrix number ``draw_index`` of the ensemble.

    The stream is keyed by (seed, family, shape, draw index) alone, so the
    same arguments reproduce the same entries in any call order and at any
    thread count.
    """
    if draw_index < 0:
        raise ValueError(f"draw_index must be >= 0, got {draw_index}")
    rng = substream(spec.seed, "matrix", spec.family, spec.m, spec.n, draw_index)
    entries = _isotropic_entries(spec, rng)
    if spec.covariance is not None:
        entries = entries @ sqrt_spd(spec.covariance)
    return MatrixSample(entries=entries, spec=spec, draw_index=draw_index)


def whiten(sample: MatrixSample) -> MatrixSample:
    """Map each row through the inverse covariance square root.

    The result has isotropic rows; its spec drops the covariance but keeps
    family, shape, seed, and draw index for provenance.
    """
    spec = sample.spec
    if spec.covariance is None:
        raise ValueError("whiten requires a spec with a covariance")
    entries = sample.entries @ inv_sqrt_spd(spec.covariance)
    new_spec = EnsembleSpec(family=spec.family, m=spec.m, n=spec.n, covariance=None, seed=spec.seed)
    return MatrixSample(entries=entries, spec=new_spec, draw_index=sample.draw_index)


def write_matrix_csv(sample: MatrixSample, path: str | Path) -> Path:
    """Dump a sample as CSV with a replay header."""
    spec = sample.spec
    path = Path(path)
    lines = [f"# devbound-matrix m={spec.m} n={spec.n} family={spec.family} seed={spec.seed} draw={sample.draw_index}"]
    for row in sample.entries:
        lines.append(",".join(format(v, ".17g") for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_matrix_csv(path: str | Path) -> MatrixSample:
    """Parse a dump written by :func:`write_matrix_csv`."""
    text = Path(path).read_text(encoding="ascii").strip().splitlines()
    header = text[0]
    prefix = "# devbound-matrix "
    if not header.startswith(prefix):
        raise ValueError(f"not a devbound matrix dump: {header!r}")
    fields = dict(part.split("=", 1) for part in header[len(prefix):].split())
    entries = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    spec = EnsembleSpec(
        family=fields["family"],
        m=int(fields["m"]),
        n=int(fields["n"]),
        covariance=None,
        seed=int(fields["seed"]),
    )
    if entries.shape != (spec.m, spec.n):
        raise ValueError(f"dump shape {entries.shape} does not match header {spec.m}x{spec.n}")
    return MatrixSample(entries=entries, spec=spec, draw_index=int(fields["draw"]))
