"""Bounded index sets with support-function, projection, and size oracles.

Each set kind answers the same questions: support value sup <g, x> with an
attaining witness, Euclidean projection where the kind admits one, radius and
diameter, and membership.  Oracles are exact wherever a closed form exists;
the remaining intersections fall back to a multi-start ascent that is flagged
as a lower bound and never silently substitutes for an exact answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import substream

MEMBERSHIP_TOL = 1e-9


class UnsupportedOperation(NotImplementedError):
    """The set kind does not implement the requested oracle."""


@dataclass
class SupportResult:
    """Support value with an attaining point.

    ``exact`` distinguishes closed-form answers from heuristic lower bounds;
    the witness always lies in the set and satisfies <g, witness> = value up
    to 1e-9.
    """

    value: float
    witness: np.ndarray
    exact: bool = True


def _as_vector(g, dim: int) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (dim,):
        raise ValueError(f"expected vector of length {dim}, got shape {g.shape}")
    return g


class GeoSet:
    """Common oracle surface for all set kinds."""

    dim: int

    # Structure flags used by downstream dispatch.
    is_symmetric: bool = False
    is_star: bool = False  # contains 0 and every segment [0, x]
    radius_exact: bool = True

    def support(self, g) -> SupportResult:
        raise NotImplementedError

    def abs_support(self, g) -> SupportResult:
        """sup |<g, x>|, as the larger of the two one-sided supports."""
        g = _as_vector(g, self.dim)
        pos = self.support(g)
        neg = self.support(-g)
        if pos.value >= neg.value:
            return SupportResult(pos.value, pos.witness, pos.exact and neg.exact)
        return SupportResult(neg.value, neg.witness, pos.exact and neg.exact)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        """Support values for each row of G (loop fallback)."""
        return np.array([self.support(g).value for g in G])

    def abs_support_batch(self, G: np.ndarray) -> np.ndarray:
        return np.maximum(self.support_batch(G), self.support_batch(-G))

    def project(self, p) -> np.ndarray:
        raise UnsupportedOperation(f"{type(self).__name__} has no projection oracle")

    def radius(self) -> float:
        raise NotImplementedError

    def diameter(self) -> tuple[float, bool]:
        """(value, exact flag); inexact values are upper bounds."""
        return 2.0 * self.radius(), self.is_symmetric

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class FiniteCloud(GeoSet):
    """Finite point set; every oracle is an exact scan."""

    def __init__(self, points) -> None:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError(f"cloud needs a 2-D nonempty point array, got shape {points.shape}")
        if not np.isfinite(points).all():
            raise ValueError("cloud points must be finite")
        self.points = points
        self.dim = points.shape[1]

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        vals = self.points @ g
        i = int(np.argmax(vals))  # lowest index wins ties
        return SupportResult(float(vals[i]), self.points[i].copy(), True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return (np.asarray(G, dtype=float) @ self.points.T).max(axis=1)

    def abs_support_batch(self, G: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(G, dtype=float) @ self.points.T).max(axis=1)

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        d2 = ((self.points - p) ** 2).sum(axis=1)
        return self.points[int(np.argmin(d2))].copy()

    def radius(self) -> float:
        return float(np.sqrt((self.points**2).sum(axis=1).max()))

    def diameter(self) -> tuple[float, bool]:
        # Exact pairwise scan; clouds used here stay small enough for O(N^2).
        sq = (self.points**2).sum(axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (self.points @ self.points.T)
        return float(np.sqrt(max(d2.max(), 0.0))), True

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        d2 = ((self.points - x) ** 2).sum(axis=1)
        return bool(np.sqrt(d2.min()) <= tol)

    def describe(self) -> str:
        return f"cloud[{self.points.shape[0]}pts,n={self.dim}]"


class Ball2(GeoSet):
    """Euclidean ball of a given radius."""

    is_symmetric = True
    is_star = True

    def __init__(self, radius: float, dim: int) -> None:
        if radius <= 0 or dim < 1:
            raise ValueError(f"need radius > 0 and dim >= 1, got {radius}, {dim}")
        self.r = float(radius)
        self.dim = int(dim)

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            return SupportResult(0.0, np.zeros(self.dim), True)
        return SupportResult(self.r * norm, (self.r / norm) * g, True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.r * np.linalg.norm(np.asarray(G, dtype=float), axis=1)

    abs_support_batch = support_batch

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        norm = float(np.linalg.norm(p))
        if norm <= self.r:
            return p.copy()
        return (self.r / norm) * p

    def radius(self) -> float:
        return self.r

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.linalg.norm(_as_vector(x, self.dim)) <= self.r + tol)

    def describe(self) -> str:
        return f"ball2[r={self.r:g},n={self.dim}]"


class Sphere(GeoSet):
    """Euclidean sphere; same support as the ball, membership on the shell."""

    is_symmetric = True
    is_star = False

    def __init__(self, radius: float, dim: int) -> None:
        if radius <= 0 or dim < 1:
            raise ValueError(f"need radius > 0 and dim >= 1, got {radius}, {dim}")
        self.r = float(radius)
        self.dim = int(dim)

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            witness = np.zeros(self.dim)
            witness[0] = self.r
            return SupportResult(0.0, witness, True)
        return SupportResult(self.r * norm, (self.r / norm) * g, True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.r * np.linalg.norm(np.asarray(G, dtype=float), axis=1)

    abs_support_batch = support_batch

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        norm = float(np.linalg.norm(p))
        if norm == 0.0:
            out = np.zeros(self.dim)
            out[0] = self.r
            return out
        return (self.r / norm) * p

    def radius(self) -> float:
        return self.r

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(abs(np.linalg.norm(_as_vector(x, self.dim)) - self.r) <= tol)

    def describe(self) -> str:
        return f"sphere[r={self.r:g},n={self.dim}]"


class L1Ball(GeoSet):
    """Cross-polytope of a given l1 radius."""

    is_symmetric = True
    is_star = True

    def __init__(self, radius: float, dim: int) -> None:
        if radius <= 0 or dim < 1:
            raise ValueError(f"need radius > 0 and dim >= 1, got {radius}, {dim}")
        self.r = float(radius)
        self.dim = int(dim)

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        i = int(np.argmax(np.abs(g)))  # lowest index wins ties
        witness = np.zeros(self.dim)
        witness[i] = self.r * (1.0 if g[i] >= 0 else -1.0)
        return SupportResult(self.r * float(abs(g[i])), witness, True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.r * np.abs(np.asarray(G, dtype=float)).max(axis=1)

    abs_support_batch = support_batch

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        return project_l1_ball(p, self.r)

    def radius(self) -> float:
        return self.r

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.abs(_as_vector(x, self.dim)).sum() <= self.r + tol)

    def describe(self) -> str:
        return f"l1[r={self.r:g},n={self.dim}]"


def project_l1_ball(p: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball by sorted soft thresholding."""
    p = np.asarray(p, dtype=float)
    if np.abs(p).sum() <= radius:
        return p.copy()
    u = np.sort(np.abs(p))[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, p.size + 1)
    rho = int(np.nonzero(u * ks > css - radius)[0][-1])
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(p) * np.maximum(np.abs(p) - theta, 0.0)


def hard_threshold(p: np.ndarray, s: int) -> np.ndarray:
    """Keep the s largest-magnitude entries (lowest index wins ties)."""
    p = np.asarray(p, dtype=float)
    order = np.argsort(-np.abs(p), kind="stable")
    out = np.zeros_like(p)
    keep = order[:s]
    out[keep] = p[keep]
    return out


class SparseVectors(GeoSet):
    """s-sparse vectors, normed to a ball, a sphere, or left as the cone.

    ``radius=None`` builds the bare sparsity cone, which only supports
    projection (hard thresholding); every other oracle needs a finite radius.
    """

    is_symmetric = True

    def __init__(self, s: int, dim: int, radius: float | None = 1.0, surface: bool = False) -> None:
        if not (1 <= s <= dim):
            raise ValueError(f"need 1 <= s <= dim, got s={s}, dim={dim}")
        if radius is None and surface:
            raise ValueError("the sparsity cone has no surface variant")
        if radius is not None and radius <= 0:
            raise ValueError(f"radius must be positive, got {radius}")
        self.s = int(s)
        self.dim = int(dim)
        self.r = None if radius is None else float(radius)
        self.surface = bool(surface)

    @property
    def is_star(self) -> bool:  # type: ignore[override]
        # Scaling toward 0 preserves sparsity, so ball and cone are star-shaped.
        return not self.surface

    def _require_radius(self) -> float:
        if self.r is None:
            raise UnsupportedOperation("sparsity cone is unbounded; this oracle needs a radius")
        return self.r

    def support(self, g) -> SupportResult:
        r = self._require_radius()
        g = _as_vector(g, self.dim)
        order = np.argsort(-np.abs(g), kind="stable")[: self.s]
        gs = np.zeros(self.dim)
        gs[order] = g[order]
        norm = float(np.linalg.norm(gs))
        if norm == 0.0:
            witness = np.zeros(self.dim)
            if self.surface:
                witness[0] = r
            return SupportResult(0.0, witness, True)
        return SupportResult(r * norm, (r / norm) * gs, True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        r = self._require_radius()
        G = np.asarray(G, dtype=float)
        sq = G * G
        top = np.partition(sq, self.dim - self.s, axis=1)[:, self.dim - self.s :]
        return r * np.sqrt(top.sum(axis=1))

    abs_support_batch = support_batch

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        out = hard_threshold(p, self.s)
        if self.r is None:
            return out
        norm = float(np.linalg.norm(out))
        if self.surface:
            if norm == 0.0:
                out = np.zeros(self.dim)
                out[0] = self.r
                return out
            return (self.r / norm) * out
        if norm > self.r:
            return (self.r / norm) * out
        return out

    def radius(self) -> float:
        return self._require_radius()

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        if int((np.abs(x) > tol).sum()) > self.s:
            return False
        if self.r is None:
            return True
        norm = float(np.linalg.norm(x))
        if self.surface:
            return abs(norm - self.r) <= tol
        return norm <= self.r + tol

    def n_supports(self) -> int:
        return math.comb(self.dim, self.s)

    def describe(self) -> str:
        tag = "surface" if self.surface else ("cone" if self.r is None else "ball")
        r = "inf" if self.r is None else f"{self.r:g}"
        return f"sparse[s={self.s},n={self.dim},r={r},{tag}]"


class Subspace(GeoSet):
    """A linear subspace capped by a Euclidean ball of the given radius."""

    is_symmetric = True
    is_star = True

    def __init__(self, basis, radius: float = 1.0) -> None:
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] < 1 or basis.shape[0] < basis.shape[1]:
            raise ValueError(f"basis must be n x d with 1 <= d <= n, got shape {basis.shape}")
        if radius <= 0:
            raise ValueError(f"radius must be positive, got {radius}")
        q, _ = np.linalg.qr(basis)
        if np.linalg.matrix_rank(basis, tol=1e-10) < basis.shape[1]:
            raise ValueError("basis columns must be linearly independent")
        # Fix each column's sign so the orthonormal basis is deterministic.
        for j in range(q.shape[1]):
            i = int(np.argmax(np.abs(q[:, j])))
            if q[i, j] < 0:
                q[:, j] = -q[:, j]
        self.basis = q
        self.dim = basis.shape[0]
        self.subspace_dim = basis.shape[1]
        self.r = float(radius)

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        coeff = self.basis.T @ g
        norm = float(np.linalg.norm(coeff))
        if norm == 0.0:
            return SupportResult(0.0, np.zeros(self.dim), True)
        return SupportResult(self.r * norm, (self.r / norm) * (self.basis @ coeff), True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.r * np.linalg.norm(np.asarray(G, dtype=float) @ self.basis, axis=1)

    abs_support_batch = support_batch

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        v = self.basis @ (self.basis.T @ p)
        norm = float(np.linalg.norm(v))
        if norm > self.r:
            v *= self.r / norm
        return v

    def radius(self) -> float:
        return self.r

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        off = x - self.basis @ (self.basis.T @ x)
        return bool(np.linalg.norm(off) <= tol and np.linalg.norm(x) <= self.r + tol)

    def describe(self) -> str:
        return f"subspace[d={self.subspace_dim},n={self.dim},r={self.r:g}]"


class Scaled(GeoSet):
    """A positive rescaling of another set; all oracles delegate exactly."""

    def __init__(self, scale: float, inner: GeoSet) -> None:
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.scale = float(scale)
        self.inner = inner
        self.dim = inner.dim

    @property
    def is_symmetric(self) -> bool:  # type: ignore[override]
        return self.inner.is_symmetric

    @property
    def is_star(self) -> bool:  # type: ignore[override]
        return self.inner.is_star

    @property
    def radius_exact(self) -> bool:  # type: ignore[override]
        return self.inner.radius_exact

    def support(self, g) -> SupportResult:
        res = self.inner.support(g)
        return SupportResult(self.scale * res.value, self.scale * res.witness, res.exact)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.scale * self.inner.support_batch(G)

    def abs_support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.scale * self.inner.abs_support_batch(G)

    def project(self, p) -> np.ndarray:
        p = _as_vector(p, self.dim)
        return self.scale * self.inner.project(p / self.scale)

    def radius(self) -> float:
        return self.scale * self.inner.radius()

    def diameter(self) -> tuple[float, bool]:
        value, exact = self.inner.diameter()
        return self.scale * value, exact

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        return self.inner.contains(x / self.scale, tol)

    def describe(self) -> str:
        return f"scaled[{self.scale:g}x]{self.inner.describe()}"


class StarHull(GeoSet):
    """Union of all segments from the origin to points of the inner set.

    This is the smallest star-shaped superset of the inner set; its support
    function is the inner one clamped below at zero.
    """

    is_star = True

    def __init__(self, inner: GeoSet) -> None:
        self.inner = inner
        self.dim = inner.dim

    @property
    def is_symmetric(self) -> bool:  # type: ignore[override]
        return self.inner.is_symmetric

    def support(self, g) -> SupportResult:
        res = self.inner.support(g)
        if res.value >= 0.0:
            return res
        return SupportResult(0.0, np.zeros(self.dim), res.exact)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        return np.maximum(self.inner.support_batch(G), 0.0)

    def abs_support_batch(self, G: np.ndarray) -> np.ndarray:
        return self.inner.abs_support_batch(G)

    def radius(self) -> float:
        return self.inner.radius()

    def diameter(self) -> tuple[float, bool]:
        # For points a = la*p, b = mu*q the distance is convex in (la, mu),
        # so the maximum sits at segment endpoints: max(diam, radius).
        value, exact = self.inner.diameter()
        return max(value, self.inner.radius()), exact and self.inner.radius_exact

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        if self.inner.is_star:
            return self.inner.contains(x, tol)
        if np.linalg.norm(x) <= tol:
            return True
        if isinstance(self.inner, FiniteCloud):
            return _segment_contains(self.inner.points, None, x, tol)
        if isinstance(self.inner, Sphere):
            return Ball2(self.inner.r, self.dim).contains(x, tol)
        if isinstance(self.inner, SparseVectors) and self.inner.surface:
            return SparseVectors(self.inner.s, self.dim, self.inner.r, surface=False).contains(x, tol)
        raise UnsupportedOperation(f"no membership rule for the star hull of {self.inner.describe()}")

    def describe(self) -> str:
        return f"star[{self.inner.describe()}]"


def _segment_contains(points: np.ndarray, caps: np.ndarray | None, x: np.ndarray, tol: float) -> bool:
    """Is x on some segment [0, cap_j * p_j]?  caps=None means cap 1."""
    if np.linalg.norm(x) <= tol:
        return True
    sq = (points**2).sum(axis=1)
    for j, p in enumerate(points):
        if sq[j] == 0.0:
            continue
        alpha = float(x @ p) / sq[j]
        cap = 1.0 if caps is None else float(caps[j])
        if alpha < -tol or alpha > cap + tol:
            continue
        if np.linalg.norm(x - alpha * p) <= tol:
            return True
    return False


class L1BallSlice(GeoSet):
    """l1 ball intersected with a strictly smaller Euclidean ball.

    Support values come from the one-dimensional dual
    min_{theta >= 0} [r1 * theta + r2 * ||soft(g, theta)||_2], solved by
    bisection on the optimality condition; the primal witness certifies the
    value, making the oracle exact up to the reported duality gap.
    """

    is_symmetric = True
    is_star = True

    def __init__(self, l1_radius: float, l2_radius: float, dim: int) -> None:
        if not (0 < l2_radius < l1_radius):
            raise ValueError("slice requires 0 < l2 radius < l1 radius; otherwise one ball contains the other")
        self.r1 = float(l1_radius)
        self.r2 = float(l2_radius)
        self.dim = int(dim)

    def _theta_star(self, absg: np.ndarray) -> float:
        # ||soft(g,theta)||_1 / ||soft(g,theta)||_2 is nonincreasing in theta;
        # the optimum crosses r1/r2.
        target = self.r1 / self.r2
        soft = absg
        if soft.sum() <= target * np.linalg.norm(soft):
            return 0.0
        lo, hi = 0.0, float(absg.max())
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            s = np.maximum(absg - mid, 0.0)
            norm = np.linalg.norm(s)
            if norm == 0.0 or s.sum() <= target * norm:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, absg.max()):
                break
        return 0.5 * (lo + hi)

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        absg = np.abs(g)
        top = float(absg.max(initial=0.0))
        if top == 0.0:
            return SupportResult(0.0, np.zeros(self.dim), True)
        theta = self._theta_star(absg)
        s = np.sign(g) * np.maximum(absg - theta, 0.0)
        norm = float(np.linalg.norm(s))
        if norm == 0.0:
            # Degenerate tie at the top magnitude; fall back to one vertex.
            i = int(np.argmax(absg))
            witness = np.zeros(self.dim)
            witness[i] = min(self.r1, self.r2) * (1.0 if g[i] >= 0 else -1.0)
            return SupportResult(float(witness @ g), witness, True)
        witness = (self.r2 / norm) * s
        l1 = float(np.abs(witness).sum())
        if l1 > self.r1:
            witness *= self.r1 / l1
        value = float(witness @ g)
        dual = self.r1 * theta + self.r2 * norm
        exact = dual - value <= 1e-9 * max(1.0, dual)
        return SupportResult(value, witness, exact)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        G = np.asarray(G, dtype=float)
        absg = np.abs(G)
        top = absg.max(axis=1)
        target = self.r1 / self.r2
        lo = np.zeros(len(G))
        hi = top.copy()
        # Vectorized bisection on the same optimality condition as support().
        need = absg.sum(axis=1) > target * np.linalg.norm(absg, axis=1)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            s = np.maximum(absg - mid[:, None], 0.0)
            norms = np.linalg.norm(s, axis=1)
            high = (norms == 0.0) | (s.sum(axis=1) <= target * norms)
            hi = np.where(need & high, mid, hi)
            lo = np.where(need & ~high, mid, lo)
        theta = np.where(need, 0.5 * (lo + hi), 0.0)
        s = np.maximum(absg - theta[:, None], 0.0)
        norms = np.linalg.norm(s, axis=1)
        safe = norms > 0.0
        vals = np.zeros(len(G))
        # Primal value r2 * <|g|, s>/||s||, clipped into the l1 ball if the
        # bisection tolerance left a small overshoot.
        inner = (absg * s).sum(axis=1)
        l1 = s.sum(axis=1)
        scale = np.ones(len(G))
        with np.errstate(invalid="ignore", divide="ignore"):
            l1_witness = self.r2 * l1 / norms
            over = safe & (l1_witness > self.r1)
            scale[over] = self.r1 / l1_witness[over]
            vals[safe] = (self.r2 * inner[safe] / norms[safe]) * scale[safe]
        vals[top == 0.0] = 0.0
        return vals

    abs_support_batch = support_batch

    def radius(self) -> float:
        # r2 < r1, so the direction e1 reaches the full l2 radius.
        return self.r2

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        return bool(np.abs(x).sum() <= self.r1 + tol and np.linalg.norm(x) <= self.r2 + tol)

    def describe(self) -> str:
        return f"l1slice[r1={self.r1:g},r2={self.r2:g},n={self.dim}]"


class StarCloudSlice(GeoSet):
    """Star hull of a finite cloud intersected with a Euclidean ball.

    Each segment [0, p] is clipped at norm delta, so the support is the exact
    maximum over points of min(1, delta/||p||) <g, p>, clamped at zero.
    """

    is_star = True

    def __init__(self, points, delta: float) -> None:
        cloud = FiniteCloud(points)
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.points = cloud.points
        self.delta = float(delta)
        self.dim = cloud.dim
        norms = np.linalg.norm(self.points, axis=1)
        self.caps = np.where(norms > self.delta, self.delta / np.where(norms == 0, 1.0, norms), 1.0)

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        vals = self.caps * (self.points @ g)
        i = int(np.argmax(vals))
        if vals[i] <= 0.0:
            return SupportResult(0.0, np.zeros(self.dim), True)
        return SupportResult(float(vals[i]), self.caps[i] * self.points[i], True)

    def support_batch(self, G: np.ndarray) -> np.ndarray:
        vals = (np.asarray(G, dtype=float) @ self.points.T) * self.caps
        return np.maximum(vals.max(axis=1), 0.0)

    def abs_support_batch(self, G: np.ndarray) -> np.ndarray:
        vals = np.abs(np.asarray(G, dtype=float) @ self.points.T) * self.caps
        return vals.max(axis=1)

    def radius(self) -> float:
        norms = np.linalg.norm(self.points, axis=1)
        return float(np.minimum(norms, self.delta).max())

    def diameter(self) -> tuple[float, bool]:
        clipped = self.points * self.caps[:, None]
        value, _ = FiniteCloud(clipped).diameter()
        return max(value, self.radius()), True

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return _segment_contains(self.points, self.caps, _as_vector(x, self.dim), tol)

    def describe(self) -> str:
        return f"starslice[{self.points.shape[0]}pts,delta={self.delta:g},n={self.dim}]"


class GenericBallIntersect(GeoSet):
    """Fallback intersection with a Euclidean ball, heuristic support only.

    Support answers are feasible lower bounds found by multi-start projected
    ascent and are flagged exact=False; radius is an upper bound.
    """

    radius_exact = False

    def __init__(self, inner: GeoSet, delta: float, n_starts: int = 16, n_iters: int = 500) -> None:
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.inner = inner
        self.delta = float(delta)
        self.dim = inner.dim
        self.n_starts = n_starts
        self.n_iters = n_iters
        self._has_projection = True
        try:
            inner.project(np.zeros(self.dim))
        except UnsupportedOperation:
            self._has_projection = False
            if not inner.is_star:
                raise UnsupportedOperation(
                    f"cannot intersect {inner.describe()}: no projection oracle and not star-shaped"
                ) from None

    @property
    def is_symmetric(self) -> bool:  # type: ignore[override]
        return self.inner.is_symmetric

    @property
    def is_star(self) -> bool:  # type: ignore[override]
        return self.inner.is_star

    def _feasible(self, x: np.ndarray) -> np.ndarray:
        # Alternating projections land inside the intersection for convex
        # inner sets; a handful of rounds is enough at these tolerances.
        for _ in range(25):
            x = self.inner.project(x)
            norm = float(np.linalg.norm(x))
            if norm > self.delta:
                x = (self.delta / norm) * x
            else:
                break
        return x

    def _clipped_witness(self, g: np.ndarray) -> np.ndarray:
        # For star-shaped inner sets any witness scales into the ball while
        # staying inside the set, giving a feasible candidate with no
        # projection oracle at all.
        w = self.inner.support(g).witness
        norm = float(np.linalg.norm(w))
        if norm > self.delta:
            w = (self.delta / norm) * w
        return w

    def support(self, g) -> SupportResult:
        g = _as_vector(g, self.dim)
        gnorm = float(np.linalg.norm(g))
        if not self._has_projection:
            w = self._clipped_witness(g) if gnorm > 0 else np.zeros(self.dim)
            return SupportResult(float(w @ g), w, False)
        if gnorm == 0.0:
            return SupportResult(0.0, self._feasible(np.zeros(self.dim)), False)
        rng = substream(0, "cap-ascent", self.dim, self.n_starts)
        starts = [self.delta / gnorm * g, self.inner.support(g).witness]
        starts += [rng.standard_normal(self.dim) * self.delta for _ in range(self.n_starts - 2)]
        best_val, best_x = -np.inf, None
        steps = [0.1, 1.0, 10.0]
        for x0 in starts:
            x = self._feasible(np.asarray(x0, dtype=float))
            for it in range(self.n_iters):
                eta = steps[it % len(steps)] * self.delta / gnorm
                x_new = self._feasible(x + eta * g)
                if float(x_new @ g) <= float(x @ g) + 1e-15:
                    if it % len(steps) == len(steps) - 1:
                        break
                x = x_new if float(x_new @ g) > float(x @ g) else x
            val = float(x @ g)
            if val > best_val:
                best_val, best_x = val, x
        return SupportResult(best_val, best_x, False)

    def radius(self) -> float:
        return min(self.inner.radius(), self.delta)

    def diameter(self) -> tuple[float, bool]:
        return 2.0 * self.radius(), False

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_vector(x, self.dim)
        return bool(self.inner.contains(x, tol) and np.linalg.norm(x) <= self.delta + tol)

    def describe(self) -> str:
        return f"cap[{self.inner.describe()},delta={self.delta:g}]"


def ball_intersect(inner: GeoSet, delta: float) -> GeoSet:
    """Intersection of a set with the Euclidean ball of radius delta.

    Canonical kinds collapse to exact closed forms (smaller balls, sparse
    balls with the smaller radius, the l1/l2 slice, clipped star hulls of
    clouds); anything else gets the flagged heuristic fallback.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if isinstance(inner, Ball2):
        return Ball2(min(inner.r, delta), inner.dim)
    if isinstance(inner, Sphere):
        if delta < inner.r:
            raise ValueError("intersection of a sphere with a smaller ball is empty")
        return inner
    if isinstance(inner, L1Ball):
        if delta >= inner.r:
            return inner
        return L1BallSlice(inner.r, delta, inner.dim)
    if isinstance(inner, L1BallSlice):
        if delta >= inner.r2:
            return inner
        if delta >= inner.r1:
            return L1Ball(inner.r1, inner.dim)
        return L1BallSlice(inner.r1, delta, inner.dim)
    if isinstance(inner, SparseVectors):
        if inner.surface:
            if delta < inner.r:
                raise ValueError("intersection of a sparse sphere with a smaller ball is empty")
            return inner
        new_r = delta if inner.r is None else min(inner.r, delta)
        return SparseVectors(inner.s, inner.dim, new_r, surface=False)
    if isinstance(inner, Subspace):
        return Subspace(inner.basis, min(inner.r, delta))
    if isinstance(inner, Scaled):
        return Scaled(inner.scale, ball_intersect(inner.inner, delta / inner.scale))
    if isinstance(inner, FiniteCloud):
        norms = np.linalg.norm(inner.points, axis=1)
        keep = inner.points[norms <= delta * (1.0 + 1e-12)]
        if keep.shape[0] == 0:
            raise ValueError("no cloud point lies inside the ball; intersection is empty")
        return FiniteCloud(keep)
    if isinstance(inner, StarCloudSlice):
        return StarCloudSlice(inner.points, min(inner.delta, delta))
    if isinstance(inner, StarHull):
        if isinstance(inner.inner, FiniteCloud):
            return StarCloudSlice(inner.inner.points, delta)
        if inner.inner.is_star:
            return ball_intersect(inner.inner, delta)
        if isinstance(inner.inner, Sphere):
            return Ball2(min(inner.inner.r, delta), inner.dim)
        if isinstance(inner.inner, SparseVectors) and inner.inner.surface:
            capped = SparseVectors(inner.inner.s, inner.dim, inner.inner.r, surface=False)
            return ball_intersect(capped, delta)
    return GenericBallIntersect(inner, delta)


def diff_cloud(points, include_zero: bool = True) -> FiniteCloud:
    """Cloud of pairwise differences x - y, deduplicated exactly.

    The zero difference is kept by default and dropped with
    ``include_zero=False``.
    """
    cloud = FiniteCloud(points)
    pts = cloud.points
    diffs = (pts[:, None, :] - pts[None, :, :]).reshape(-1, cloud.dim)
    if not include_zero:
        diffs = diffs[np.abs(diffs).sum(axis=1) > 0.0]
        if diffs.shape[0] == 0:
            raise ValueError("all differences are zero and the zero vector is excluded")
    return FiniteCloud(np.unique(diffs, axis=0))


def random_subspace_basis(dim: int, subspace_dim: int, basis_seed: int = 0) -> np.ndarray:
    """Deterministic random basis used by set descriptors."""
    rng = substream(basis_seed, "subspace-basis", dim, subspace_dim)
    return rng.standard_normal((dim, subspace_dim))


def _parse_value(raw: str):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_set(descriptor: str) -> GeoSet:
    """Build a set from a compact descriptor string.

    Grammar: ``kind:key=value,key=value,flag``.  Kinds and their keys:

    - ``ball2:r=1,n=50``; ``sphere:r=1,n=50``; ``l1:r=1.5,n=200``
    - ``sparse:s=4,n=64[,r=1][,surface]``
    - ``subspace:d=4,n=50[,r=1][,basis_seed=0]``
    - ``cloud:file=points.csv`` (CSV, one point per row, no header)

    Optional wrapper keys on any kind, applied in this order:
    ``scale=<a>`` rescales, ``star`` takes the star hull, ``cap=<d>``
    intersects with the Euclidean ball of radius d.
    """
    if ":" not in descriptor:
        kind, body = descriptor.strip(), ""
    else:
        kind, body = descriptor.split(":", 1)
    kind = kind.strip().lower()
    kv: dict[str, object] = {}
    for part in body.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            key, raw = part.split("=", 1)
            kv[key.strip()] = _parse_value(raw.strip())
        else:
            kv[part] = True

    scale = kv.pop("scale", None)
    star = bool(kv.pop("star", False))
    cap = kv.pop("cap", None)

    def need(key: str):
        if key not in kv:
            raise ValueError(f"descriptor {descriptor!r} is missing key {key!r}")
        return kv.pop(key)

    if kind == "ball2":
        base: GeoSet = Ball2(float(need("r")), int(need("n")))
    elif kind == "sphere":
        base = Sphere(float(need("r")), int(need("n")))
    elif kind == "l1":
        base = L1Ball(float(need("r")), int(need("n")))
    elif kind == "sparse":
        s = int(need("s"))
        n = int(need("n"))
        surface = bool(kv.pop("surface", False))
        r = float(kv.pop("r", 1.0))
        base = SparseVectors(s, n, r, surface=surface)
    elif kind == "subspace":
        d = int(need("d"))
        n = int(need("n"))
        r = float(kv.pop("r", 1.0))
        basis_seed = int(kv.pop("basis_seed", 0))
        base = Subspace(random_subspace_basis(n, d, basis_seed), r)
    elif kind == "cloud":
        path = str(need("file"))
        points = np.loadtxt(Path(path), delimiter=",", ndmin=2)
        base = FiniteCloud(points)
    else:
        raise ValueError(f"unknown set kind {kind!r} in descriptor {descriptor!r}")

    if kv:
        raise ValueError(f"descriptor {descriptor!r} has unused keys {sorted(kv)}")
    if scale is not None:
        base = Scaled(float(scale), base)
    if star:
        base = StarHull(base)
    if cap is not None:
        base = ball_intersect(base, float(cap))
    return base
