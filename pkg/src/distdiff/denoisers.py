"""Closed-form denoisers and an error-injecting wrapper.

A denoiser maps ``(x, sigma)`` to a noise estimate ``epsilon``; the implied
clean point is ``x - sigma * epsilon``. The plain functions compute one
output; the small classes bind the data a sampler needs so that they can be
called as ``denoiser(x, sigma)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import PointCloud, TargetSet, NonUniqueProjectionError

INJECTION_MODES = ("random-orthogonal", "adversarial", "overshoot", "fixed-vector", "direction")


@dataclass(frozen=True)
class ErrorModel:
    """Relative-error budget ``eta`` valid while sqrt(n)*sigma is within a factor ``nu`` of the distance."""

    eta: float
    nu: float

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if not self.nu >= 1.0:
            raise ValueError(f"nu must be >= 1, got {self.nu}")

    def in_band(self, dist: float, sigma: float, n: int) -> bool:
        s = np.sqrt(n) * sigma
        return dist / self.nu <= s <= self.nu * dist


@dataclass(frozen=True, eq=False)
class DenoiseOutput:
    x: np.ndarray
    sigma: float
    epsilon: np.ndarray
    weights: Optional[np.ndarray] = None

    @property
    def x0_hat(self) -> np.ndarray:
        return self.x - self.sigma * self.epsilon


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")


def softmax_weights(x, sigma: float, cloud: PointCloud) -> np.ndarray:
    """Posterior weights of each data point given ``x`` at noise level ``sigma``.

    Max-shifted, so exponents below about -745 underflow to an exact zero.
    """
    _check_sigma(sigma)
    a = -cloud.sq_distances(x) / (2.0 * sigma * sigma)
    w = np.exp(a - a.max())
    return w / w.sum()


def ideal_denoise(x, sigma: float, cloud: PointCloud) -> DenoiseOutput:
    x = np.asarray(x, dtype=float)
    w = softmax_weights(x, sigma, cloud)
    eps = (x - w @ cloud.points) / sigma
    return DenoiseOutput(x, sigma, eps, w)


def exact_projection_denoise(x, sigma: float, target: TargetSet) -> DenoiseOutput:
    _check_sigma(sigma)
    x = np.asarray(x, dtype=float)
    res = target.project(x)
    if res.tie:
        raise NonUniqueProjectionError("exact-projection denoiser needs a unique projection")
    return DenoiseOutput(x, sigma, (x - res.nearest) / sigma)


def oracle_denoise(x, sigma: float, x0) -> DenoiseOutput:
    _check_sigma(sigma)
    x = np.asarray(x, dtype=float)
    return DenoiseOutput(x, sigma, (x - np.asarray(x0, dtype=float)) / sigma)


def convex_mean_denoise(x, sigma: float, cloud: PointCloud) -> DenoiseOutput:
    _check_sigma(sigma)
    x = np.asarray(x, dtype=float)
    return DenoiseOutput(x, sigma, (x - cloud.mean) / sigma)


def _unit(v):
    nv = np.linalg.norm(v)
    return v / nv if nv > 0 else v


def inject_error(inner: DenoiseOutput, eta: float, dist: float, mode: str = "random-orthogonal",
                 rng: Optional[np.random.Generator] = None, direction=None) -> DenoiseOutput:
    """Perturb ``inner`` so that ``|sigma*eps' - sigma*eps| == eta * dist``.

    random-orthogonal
        uniform direction orthogonal to ``inner.epsilon``.
    adversarial
        along ``-inner.epsilon``, against the descent step: every step is
        shortened as much as the budget allows (worst case for convergence).
    overshoot
        along ``+inner.epsilon``: every step is lengthened by the full budget.
    fixed-vector
        along the supplied unit ``direction``.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    if dist < 0:
        raise ValueError("dist must be nonnegative")
    if mode not in INJECTION_MODES[:4]:
        raise ValueError(f"unknown injection mode {mode!r}")
    if eta == 0.0 or dist == 0.0:
        return inner
    eps = inner.epsilon
    if mode == "fixed-vector":
        if direction is None:
            raise ValueError("fixed-vector mode needs a direction")
        u = _unit(np.asarray(direction, dtype=float))
    elif mode in ("adversarial", "overshoot") and np.linalg.norm(eps) > 0:
        u = _unit(eps) if mode == "overshoot" else -_unit(eps)
    else:
        if rng is None:
            raise ValueError(f"{mode} mode needs an rng")
        g = rng.standard_normal(eps.shape)
        if mode == "random-orthogonal" and np.linalg.norm(eps) > 0:
            e = _unit(eps)
            g = g - (g @ e) * e
        u = _unit(g)
    new_eps = eps + (eta * dist / inner.sigma) * u
    return DenoiseOutput(inner.x, inner.sigma, new_eps, inner.weights)


def relative_projection_error(x, sigma: float, epsilon, target: TargetSet) -> float:
    """``|x - sigma*eps - proj(x)| / dist(x)``, the ratio bounded by eta in the error model."""
    x = np.asarray(x, dtype=float)
    res = target.project(x)
    if res.distance == 0.0:
        raise ValueError("relative projection error is undefined on the set")
    return float(np.linalg.norm(x - sigma * np.asarray(epsilon) - res.nearest) / res.distance)


def direction_error_eta(eta: float, nu: float, n: int) -> float:
    """Relative-error constant implied by a bound ``|eps - sqrt(n) grad dist| <= eta``."""
    return eta * nu / np.sqrt(n) + max(nu - 1.0, 1.0 - 1.0 / nu)


# -- callable denoisers -------------------------------------------------------


class IdealDenoiser:
    def __init__(self, cloud: PointCloud):
        self.cloud = cloud

    def __call__(self, x, sigma):
        return ideal_denoise(x, sigma, self.cloud)


class ExactProjectionDenoiser:
    def __init__(self, target: TargetSet):
        self.target = target

    def __call__(self, x, sigma):
        return exact_projection_denoise(x, sigma, self.target)


class OracleDenoiser:
    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float)

    def __call__(self, x, sigma):
        return oracle_denoise(x, sigma, self.x0)


class ConvexMeanDenoiser:
    def __init__(self, cloud: PointCloud):
        self.cloud = cloud

    def __call__(self, x, sigma):
        return convex_mean_denoise(x, sigma, self.cloud)


class ErrorInjectedDenoiser:
    """Wraps a denoiser and spends an error budget of ``eta * dist(x)`` every call.

    ``mode="direction"`` ignores the inner output and returns
    ``sqrt(n) * grad dist(x) + eta * u`` for a random unit ``u``, i.e. an
    absolute error of ``eta`` on the unit-gradient scale. Each trajectory
    should own its ``rng``.
    """

    def __init__(self, inner, target: TargetSet, eta: float, mode: str = "random-orthogonal",
                 rng: Optional[np.random.Generator] = None, direction=None):
        if mode not in INJECTION_MODES:
            raise ValueError(f"unknown injection mode {mode!r}; choose from {INJECTION_MODES}")
        # direction mode measures eta on the sqrt(n)-scaled gradient, so it may exceed 1
        if eta < 0 or (mode != "direction" and eta >= 1.0):
            raise ValueError(f"eta must lie in [0, 1), got {eta}")
        self.inner = inner
        self.target = target
        self.eta = eta
        self.mode = mode
        self.rng = rng
        self.direction = direction

    def __call__(self, x, sigma):
        x = np.asarray(x, dtype=float)
        if self.mode == "direction":
            _check_sigma(sigma)
            res = self.target.project(x)
            if res.tie:
                raise NonUniqueProjectionError("direction-error denoiser needs a unique projection")
            grad = _unit(x - res.nearest)
            u = _unit(self.rng.standard_normal(x.shape))
            return DenoiseOutput(x, sigma, np.sqrt(x.size) * grad + self.eta * u)
        out = self.inner(x, sigma)
        return inject_error(out, self.eta, self.target.distance(x), self.mode, self.rng, self.direction)
