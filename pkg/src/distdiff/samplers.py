"""DDIM, DDPM and gradient-estimation sampling in sigma coordinates.

All updates use ``x_{t-1} = x_t + (sigma_{t-1} - sigma_t) * eps`` or a
variant of it. The gradient-estimation sampler replaces ``eps`` by the
extrapolation ``gamma * eps_t + (1 - gamma) * eps_{t+1}``, reusing the cached
output of the previous step, so every sampler costs exactly N denoiser calls.

The ``*_z`` functions implement the original alphabar-coordinate updates and
exist to test the change of variables ``x = z / sqrt(alphabar)``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from .geometry import TargetSet, NonUniqueProjectionError
from .schedules import NoiseSchedule

SAMPLER_KINDS = ("ddim", "ddpm", "ge")


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream addressed by ``(seed, *key)``; creation order does not matter."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "ddim"
    gamma: float = 2.0
    terminal_full_step: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler {self.kind!r}; choose from {SAMPLER_KINDS}")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")


def _check_order(sigma_t, sigma_prev):
    if not sigma_prev < sigma_t:
        raise ValueError(f"need sigma_prev < sigma_t, got {sigma_prev} >= {sigma_t}")


def ddim_step(x_t, sigma_t: float, sigma_prev: float, eps) -> np.ndarray:
    _check_order(sigma_t, sigma_prev)
    return np.asarray(x_t) + (sigma_prev - sigma_t) * np.asarray(eps)


def ddpm_coefficients(sigma_t: float, sigma_prev: float) -> tuple[float, float]:
    """``(sigma_t', noise_scale)`` with sigma_t' = sigma_prev^2 / sigma_t."""
    _check_order(sigma_t, sigma_prev)
    s_p = sigma_prev * sigma_prev / sigma_t
    # sigma_prev^2 - s_p^2 = sigma_prev^2 (1 - r^2), r = sigma_prev / sigma_t
    r = sigma_prev / sigma_t
    return s_p, sigma_prev * math.sqrt((1.0 - r) * (1.0 + r))


def ddpm_step(x_t, sigma_t: float, sigma_prev: float, eps, w) -> np.ndarray:
    s_p, scale = ddpm_coefficients(sigma_t, sigma_prev)
    return np.asarray(x_t) + (s_p - sigma_t) * np.asarray(eps) + scale * np.asarray(w)


def ge_direction(eps_t, eps_next, gamma: float) -> np.ndarray:
    return gamma * np.asarray(eps_t) + (1.0 - gamma) * np.asarray(eps_next)


def ge_step(x_t, sigma_t: float, sigma_prev: float, eps_t, eps_next, gamma: float = 2.0) -> np.ndarray:
    return ddim_step(x_t, sigma_t, sigma_prev, ge_direction(eps_t, eps_next, gamma))


def ddim_step_z(z_t, ab_t: float, ab_prev: float, eps) -> np.ndarray:
    """Original-coordinate DDIM: estimate z0, then re-noise to alphabar_{t-1}."""
    if not 0 < ab_t <= ab_prev < 1:
        raise ValueError("need 0 < alphabar_t <= alphabar_{t-1} < 1")
    eps = np.asarray(eps)
    z0 = (np.asarray(z_t) - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
    return math.sqrt(ab_prev) * z0 + math.sqrt(1.0 - ab_prev) * eps


def ddpm_step_z(z_t, ab_t: float, ab_prev: float, eps, w) -> np.ndarray:
    """Original-coordinate DDPM posterior sample given the z0 estimate."""
    if not 0 < ab_t <= ab_prev < 1:
        raise ValueError("need 0 < alphabar_t <= alphabar_{t-1} < 1")
    z_t = np.asarray(z_t)
    a_t = ab_t / ab_prev
    z0 = (z_t - math.sqrt(1.0 - ab_t) * np.asarray(eps)) / math.sqrt(ab_t)
    c0 = math.sqrt(ab_prev) * (1.0 - a_t) / (1.0 - ab_t)
    ct = math.sqrt(a_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    cw = math.sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - a_t))
    return c0 * z0 + ct * z_t + cw * np.asarray(w)


def gamma_from_weights(a: float, b: float, c: float) -> float:
    """Extrapolation weight minimizing the W-weighted error of two consecutive outputs.

    ``W = [[a I, b I], [b I, c I]]`` must be positive definite.
    """
    if not (a > 0 and c > 0 and a * c - b * b > 0):
        raise ValueError(f"W is not positive definite: a={a}, b={b}, c={c}")
    return (a + b) / (a + c + 2.0 * b)


def init_xN(sigma_N: float, n: int, rng: np.random.Generator, mode: str = "gaussian",
            target: Optional[TargetSet] = None, direction=None) -> np.ndarray:
    """Starting point.

    ``gaussian`` returns ``sigma_N * N(0, I)``. ``exact-distance`` returns a
    point at distance exactly ``sqrt(n) * sigma_N`` from ``target``: it
    projects a far-away probe ``g`` to ``p`` and walks back from ``p``
    towards ``g``. Points of the segment [p, g] keep ``p`` as their
    projection, so the distance is exact.
    """
    if not sigma_N > 0:
        raise ValueError("sigma_N must be positive")
    if mode == "gaussian":
        return sigma_N * rng.standard_normal(n)
    if mode != "exact-distance":
        raise ValueError(f"unknown init mode {mode!r}")
    if target is None:
        raise ValueError("exact-distance init needs a target set")
    D = math.sqrt(n) * sigma_N
    u = rng.standard_normal(n) if direction is None else np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    anchor = getattr(target, "center", None)
    if anchor is None:
        anchor = target.points.mean(axis=0)
    R = 2.0 * (D + target.diameter + np.linalg.norm(anchor)) + 1.0
    for _ in range(60):
        g = anchor + R * u
        res = target.project(g)
        if res.tie:
            raise NonUniqueProjectionError("probe point has a tied projection")
        gap = g - res.nearest
        if np.linalg.norm(gap) >= D:
            return res.nearest + D * gap / np.linalg.norm(gap)
        R *= 2.0
    raise RuntimeError("could not place an exact-distance start point")


@dataclass(eq=False)
class StepRecord:
    t: int
    sigma: float
    x: np.ndarray
    epsilon: Optional[np.ndarray]
    distance: float
    rel_proj_error: float
    ratio: float


@dataclass(eq=False)
class Trajectory:
    records: list  # StepRecord, t = N first
    final: np.ndarray
    n_evals: int
    fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, with_x: bool = False) -> str:
        head = ["t", "sigma", "distance", "rel_proj_error", "ratio"]
        n = self.records[0].x.size
        if with_x:
            head += [f"x{j}" for j in range(n)]
        lines = [",".join(head)]
        for r in self.records:
            vals = [str(r.t)] + [f"{v:.17g}" for v in (r.sigma, r.distance, r.rel_proj_error, r.ratio)]
            if with_x:
                vals += [f"{v:.17g}" for v in r.x]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        """Full state for replay; floats are written with round-trip precision."""
        def enc(a):
            return None if a is None else [float(v) for v in a]
        doc = dict(
            fingerprint=self.fingerprint,
            n_evals=self.n_evals,
            final=enc(self.final),
            records=[dict(t=r.t, sigma=r.sigma, x=enc(r.x), epsilon=enc(r.epsilon), distance=r.distance,
                          rel_proj_error=r.rel_proj_error, ratio=r.ratio) for r in self.records],
        )
        return json.dumps(doc, sort_keys=True, allow_nan=True)


def _instrument(t, sigma, x, eps, target, n):
    if target is None:
        return StepRecord(t, sigma, x, eps, math.nan, math.nan, math.nan)
    res = target.project(x)
    d = res.distance
    rel = math.nan
    if eps is not None and d > 0:
        rel = float(np.linalg.norm(x - sigma * eps - res.nearest) / d)
    ratio = math.sqrt(n) * sigma / d if d > 0 else math.inf
    return StepRecord(t, float(sigma), x, eps, d, rel, ratio)


def fingerprint(spec: SamplerSpec, schedule: NoiseSchedule) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(asdict(spec), sort_keys=True).encode())
    h.update(schedule.sigmas.tobytes())
    return h.hexdigest()[:16]


def run(spec: SamplerSpec, schedule: NoiseSchedule, denoiser: Callable, x_N, target: Optional[TargetSet] = None,
        rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Run one trajectory from ``x_N`` and record every step.

    ``denoiser(x, sigma)`` must return an object with an ``epsilon``
    attribute. ``target`` is used only for instrumentation. ``rng`` feeds
    the DDPM noise; by default it is derived from ``spec.seed``.
    """
    sig = schedule.sigmas
    N = schedule.n_steps
    x = np.array(x_N, dtype=float)
    n = x.size
    if spec.kind == "ddpm" and rng is None:
        rng = child_rng(spec.seed)
    records = []
    prev_eps = None
    eps_bar = None
    n_evals = 0
    for t in range(N, 0, -1):
        try:
            eps = np.asarray(denoiser(x, sig[t]).epsilon, dtype=float)
        except NonUniqueProjectionError as exc:
            raise NonUniqueProjectionError(f"step t={t}: {exc}") from exc
        n_evals += 1
        records.append(_instrument(t, sig[t], x, eps, target, n))
        if spec.kind == "ge" and prev_eps is not None:
            eps_bar = ge_direction(eps, prev_eps, spec.gamma)
        else:
            eps_bar = eps
        if spec.kind == "ddpm":
            x_next = ddpm_step(x, sig[t], sig[t - 1], eps_bar, rng.standard_normal(n))
        else:
            x_next = ddim_step(x, sig[t], sig[t - 1], eps_bar)
        if t == 1:
            x_hat0 = x - sig[1] * eps_bar
        prev_eps = eps
        x = x_next
    records.append(_instrument(0, sig[0], x, None, target, n))
    final = x_hat0 if spec.terminal_full_step else x
    return Trajectory(records, final, n_evals, fingerprint(spec, schedule))
