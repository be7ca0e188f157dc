"""Distance and projection onto finite point clouds and round manifolds.

Points are 1-D float arrays. Two kinds of target set are supported:

* :class:`PointCloud` -- a finite set, handled by exact brute force.
* :class:`Sphere` -- a round sphere of intrinsic dimension ``d`` living in a
  ``(d + 1)``-dimensional affine subspace of R^n. ``Sphere.circle`` builds the
  ``d = 1`` case. Distances and projections are analytic and the reach equals
  the radius.

Both expose ``distance``, ``project`` and ``dim``; the module-level functions
dispatch on either.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

TIE_RTOL = 1e-9
ON_SET_ATOL = 1e-12


class NonUniqueProjectionError(ValueError):
    """Raised when the nearest point of a set is not unique."""


@dataclass(frozen=True)
class ProjectionResult:
    nearest: np.ndarray
    distance: float
    index: int = -1  # -1 for analytic sets
    tie: bool = False


def _as_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"dimension mismatch: point has {x.shape[-1]} coords, set lives in R^{n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    return x


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A finite, nonempty set of points of equal dimension, stored as an (m, n) array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError(f"point cloud must be a nonempty (m, n) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def diameter(self) -> float:
        return diameter(self)

    @property
    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def sq_distances(self, x) -> np.ndarray:
        """Squared distances from ``x`` to every point, shape (m,)."""
        x = _as_point(x, self.dim)
        diff = self.points - x
        return np.einsum("ij,ij->i", diff, diff)

    def distance(self, x) -> float:
        return float(np.sqrt(self.sq_distances(x).min()))

    def project(self, x) -> ProjectionResult:
        d = np.sqrt(self.sq_distances(x))
        i = int(np.argmin(d))  # argmin returns the lowest index among equal minima
        dmin = float(d[i])
        close = d <= dmin + TIE_RTOL * (1.0 + dmin)
        return ProjectionResult(self.points[i].copy(), dmin, i, bool(close.sum() > 1))

    @classmethod
    def load_csv(cls, path, skip_header: bool = False) -> "PointCloud":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if skip_header:
                next(reader, None)
            for lineno, row in enumerate(reader, start=1 + skip_header):
                if not row or all(not c.strip() for c in row):
                    continue
                vals = [float(c) for c in row]
                if rows and len(vals) != len(rows[0]):
                    raise ValueError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(vals)}")
                rows.append(vals)
        if not rows:
            raise ValueError(f"{path}: no points")
        return cls(np.array(rows))

    def save_csv(self, path, header: bool = False) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow([f"x{j}" for j in range(self.dim)])
            for p in self.points:
                w.writerow([f"{v:.17g}" for v in p])


@dataclass(frozen=True, eq=False)
class Sphere:
    """Round sphere ``{c + r B u : |u| = 1}`` where ``B`` has orthonormal columns.

    With ``k`` columns the sphere has intrinsic dimension ``d = k - 1``. When
    ``k == n`` this is the ordinary hypersphere and the out-of-plane part of
    every query vanishes.
    """

    center: np.ndarray
    radius: float
    basis: np.ndarray = field(default=None)

    def __post_init__(self):
        c = np.array(self.center, dtype=float).ravel()
        n = c.size
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        B = np.eye(n) if self.basis is None else np.array(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[0] != n or not 2 <= B.shape[1] <= n:
            raise ValueError(f"basis must have shape (n, k) with 2 <= k <= n, got {B.shape}")
        if not np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12):
            raise ValueError("basis columns must be orthonormal")
        c.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def circle(cls, n: int, radius: float = 1.0, center=None, plane=(0, 1)) -> "Sphere":
        """Circle in the coordinate plane ``plane`` of R^n."""
        if n < 2:
            raise ValueError("a circle needs n >= 2")
        B = np.zeros((n, 2))
        B[plane[0], 0] = 1.0
        B[plane[1], 1] = 1.0
        return cls(np.zeros(n) if center is None else center, radius, B)

    @classmethod
    def coordinate(cls, n: int, d: int, radius: float = 1.0, center=None) -> "Sphere":
        """d-sphere in the span of the first d + 1 coordinates of R^n."""
        if not 1 <= d < n:
            raise ValueError("need 1 <= d < n")
        return cls(np.zeros(n) if center is None else center, radius, np.eye(n)[:, : d + 1])

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def intrinsic_dim(self) -> int:
        return self.basis.shape[1] - 1

    @property
    def reach(self) -> float:
        return self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def _split(self, x):
        y = _as_point(x, self.dim) - self.center
        p = y @ self.basis
        q = y - p @ self.basis.T
        return p, q

    def distance(self, x):
        """Distance; accepts a single point or a stack of shape (..., n)."""
        p, q = self._split(x)
        pn = np.linalg.norm(p, axis=-1)
        qn = np.linalg.norm(q, axis=-1)
        out = np.hypot(pn - self.radius, qn)
        return float(out) if np.ndim(out) == 0 else out

    def project_points(self, x) -> np.ndarray:
        """Vectorized nearest points for a stack of queries of shape (..., n)."""
        p, _ = self._split(x)
        pn = np.linalg.norm(p, axis=-1, keepdims=True)
        if np.any(pn <= ON_SET_ATOL * max(1.0, self.radius)):
            raise NonUniqueProjectionError("query lies on the singular axis of the sphere")
        return self.center + (self.radius * p / pn) @ self.basis.T

    def project(self, x) -> ProjectionResult:
        x = _as_point(x, self.dim)
        if x.ndim != 1:
            raise ValueError("project expects a single point; use project_points for stacks")
        nearest = self.project_points(x)
        return ProjectionResult(nearest, float(np.linalg.norm(x - nearest)))

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """m points drawn uniformly from the sphere."""
        u = rng.standard_normal((m, self.basis.shape[1]))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + self.radius * u @ self.basis.T


TargetSet = Union[PointCloud, Sphere]


def distance(x, target: TargetSet) -> float:
    return target.distance(x)


def project(x, target: TargetSet) -> ProjectionResult:
    return target.project(x)


def grad_half_sq_distance(x, target: TargetSet) -> np.ndarray:
    """Gradient of ``0.5 * distance(x)**2``, i.e. ``x - proj(x)``.

    Raises NonUniqueProjectionError where the projection is not unique, since
    the gradient does not exist there.
    """
    res = target.project(x)
    if res.tie:
        raise NonUniqueProjectionError(f"projection is not unique (nearest index {res.index} is tied)")
    return np.asarray(x, dtype=float) - res.nearest


def smoothed_sq_distance(x, cloud: PointCloud, sigma: float) -> float:
    """Soft minimum of squared distances at temperature ``sigma**2``.

    Computes ``-2 sigma^2 log sum exp(-|x0 - x|^2 / (2 sigma^2))`` with a max
    shift. The factor 2 makes the singleton case equal ``|x - x0|^2`` and the
    half-gradient equal ``sigma * ideal_epsilon``.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    a = -cloud.sq_distances(x) / (2.0 * sigma * sigma)
    amax = a.max()
    return float(-2.0 * sigma * sigma * (amax + np.log(np.exp(a - amax).sum())))


def diameter(cloud: PointCloud, block: int = 2048) -> float:
    """Exact maximum pairwise distance, computed blockwise in O(m^2)."""
    P = cloud.points
    m = P.shape[0]
    if m == 1:
        return 0.0
    P = P - P.mean(axis=0)
    sq = np.einsum("ij,ij->i", P, P)
    slack = 1e-9 * (4.0 * sq.max() + 1.0)
    best = 0.0
    for s in range(0, m, block):
        blk = P[s : s + block]
        d2 = sq[s : s + block, None] + sq[None, :] - 2.0 * blk @ P.T
        # the Gram form loses digits, so recompute every near-winner directly
        ii, jj = np.nonzero(d2 >= d2.max() - slack)
        diff = blk[ii] - P[jj]
        best = max(best, float(np.sqrt(np.einsum("ij,ij->i", diff, diff).max())))
    return best
