"""Numerical checks of the theory: concentration, tail bounds, trajectory bounds.

Every function returns a plain report object; nothing here raises on a
failed check. Randomness comes from explicit seeds so reruns are identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .denoisers import ErrorModel, softmax_weights
from .geometry import PointCloud, Sphere
from .samplers import SamplerSpec, Trajectory, child_rng, init_xN, run
from .schedules import BoundEnvelope, NoiseSchedule


# -- concentration around a manifold -------------------------------------------


@dataclass(frozen=True)
class ConcentrationParams:
    manifold: Sphere
    sigma: float
    t: float
    trials: int = 10_000
    seed: int = 0


@dataclass
class ConcentrationReport:
    skipped: bool
    reason: str = ""
    kappa: float = math.nan
    dist_lower: float = math.nan  # sigma (sqrt(n-d) - sqrt(d) - 2t)
    dist_upper: float = math.nan
    proj_factor: float = math.nan  # C(t) (sqrt(d)+t) / (sqrt(n-d) - sqrt(d) - 2t)
    freq_distance: float = math.nan
    freq_projection: float = math.nan
    freq_both: float = math.nan
    mean_proj_ratio: float = math.nan  # mean |proj(x_sigma) - x0| / dist(x_sigma)
    mean_proj_error: float = math.nan  # mean |proj(x_sigma) - x0|

    def row(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def concentration_hypotheses(manifold: Sphere, sigma: float, t: float):
    n, d = manifold.dim, manifold.intrinsic_dim
    kappa = math.sqrt((math.sqrt(d) + t) ** 2 + (math.sqrt(n - d) + t) ** 2)
    gap = math.sqrt(n - d) - math.sqrt(d) - 2 * t
    problems = []
    if not manifold.reach > sigma * kappa:
        problems.append(f"reach {manifold.reach:.6g} <= sigma*kappa {sigma * kappa:.6g}")
    if not gap > 0:
        problems.append(f"sqrt(n-d) - sqrt(d) - 2t = {gap:.6g} <= 0")
    return kappa, gap, problems


def concentration_experiment(p: ConcentrationParams, batch: int = 2000) -> ConcentrationReport:
    """Monte Carlo of the oracle-denoising concentration statement.

    Base points are uniform on the sphere; ``x = x0 + sigma * N(0, I)`` is
    projected analytically.
    """
    M = p.manifold
    kappa, gap, problems = concentration_hypotheses(M, p.sigma, p.t)
    if problems:
        return ConcentrationReport(True, "hypothesis not met: " + "; ".join(problems), kappa)
    n, d = M.dim, M.intrinsic_dim
    C = M.reach / (M.reach - p.sigma * kappa)
    lo = p.sigma * gap
    hi = p.sigma * (math.sqrt(n - d) + math.sqrt(d) + 2 * p.t)
    factor = C * (math.sqrt(d) + p.t) / gap
    ok_d = ok_p = ok_b = 0
    ratio_sum = err_sum = 0.0
    for k, start in enumerate(range(0, p.trials, batch)):
        rng = child_rng(p.seed, k)
        m = min(batch, p.trials - start)
        x0 = M.sample(m, rng)
        x = x0 + p.sigma * rng.standard_normal((m, n))
        dist = M.distance(x)
        err = np.linalg.norm(M.project_points(x) - x0, axis=1)
        in_d = (lo <= dist) & (dist <= hi)
        in_p = err <= factor * dist
        ok_d += int(in_d.sum())
        ok_p += int(in_p.sum())
        ok_b += int((in_d & in_p).sum())
        ratio_sum += float((err / dist).sum())
        err_sum += float(err.sum())
    T = p.trials
    return ConcentrationReport(False, "", kappa, lo, hi, factor, ok_d / T, ok_p / T, ok_b / T, ratio_sum / T, err_sum / T)


# -- ideal denoiser tail bound --------------------------------------------------


@dataclass(frozen=True, eq=False)
class TailBoundParams:
    cloud: PointCloud
    x: np.ndarray
    sigma: float
    alpha: float
    eta: float


def alpha_threshold(dist: float, sigma: float, m: int, eta: float) -> float:
    """Smallest alpha for which the far-point tail of the ideal denoiser is at most eta * dist."""
    return 1.0 + 2.0 * sigma * sigma / (dist * dist) * (1.0 / math.e + math.log(m / eta))


@dataclass
class TailBoundReport:
    skipped: bool
    reason: str = ""
    dist: float = math.nan
    alpha_min: float = math.nan
    tail: float = math.nan  # |sum_{far} w (x* - x0)|
    tail_bound: float = math.nan  # eta * dist
    near_term: float = math.nan  # |sum_{near} w (x* - x0)|
    c_x_alpha: float = math.nan  # sup_{near} |x0 - x*|
    total_error: float = math.nan  # |x* - sum w x0|
    decomposition_residual: float = math.nan
    n_near: int = 0

    @property
    def holds(self) -> bool:
        return (not self.skipped) and self.tail <= self.tail_bound

    def row(self) -> dict:
        d = dict(self.__dict__)
        d["holds"] = self.holds
        return d


def tail_bound_check(p: TailBoundParams) -> TailBoundReport:
    K = p.cloud
    x = np.asarray(p.x, dtype=float)
    res = K.project(x)
    if res.tie:
        return TailBoundReport(True, f"projection tie at index {res.index}", res.distance)
    if res.distance == 0.0:
        return TailBoundReport(True, "query lies on the set", 0.0)
    dist = res.distance
    a_min = alpha_threshold(dist, p.sigma, len(K), p.eta)
    if p.alpha < a_min:
        return TailBoundReport(True, f"alpha {p.alpha:.6g} below threshold {a_min:.6g} (margin {p.alpha - a_min:.3g})",
                               dist, a_min)
    w = softmax_weights(x, p.sigma, K)
    d = np.sqrt(K.sq_distances(x))
    radius = p.alpha * dist
    near = d <= radius
    diff = res.nearest - K.points  # x* - x0
    wd = w[:, None] * diff
    near_vec = wd[near].sum(axis=0)
    # the tail is summed by brute force over the far set, independently of the full sum
    tail_vec = np.zeros_like(x)
    for i in np.nonzero(~near)[0]:
        tail_vec += w[i] * diff[i]
    full_vec = wd.sum(axis=0)
    c = float(np.linalg.norm(diff[near], axis=1).max())
    return TailBoundReport(
        False, "", dist, a_min,
        float(np.linalg.norm(tail_vec)), p.eta * dist,
        float(np.linalg.norm(near_vec)), c,
        float(np.linalg.norm(full_vec)),
        float(np.linalg.norm(full_vec - near_vec - tail_vec)),
        int(near.sum()),
    )


# -- trajectory diagnostics ----------------------------------------------------


def cosine_matrix(traj: Trajectory) -> np.ndarray:
    """Pairwise cosine similarity of the denoiser outputs along a trajectory.

    Rows follow the records (t = N first). Entries involving a zero output
    are NaN.
    """
    E = np.array([r.epsilon for r in traj.records if r.epsilon is not None])
    norms = np.linalg.norm(E, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        U = E / norms[:, None]
        M = np.clip(U @ U.T, -1.0, 1.0)
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, np.where(norms > 0, 1.0, np.nan))
    return M


@dataclass
class TrajectoryVerdict:
    ok: bool
    worst_step_error: float  # max_t |sigma_t eps_t - grad f(x_t)| / dist(x_t)
    worst_ratio_margin: float  # min over t of min(nu - ratio, ratio - 1/nu)
    worst_lower_margin: float  # min over s of dist(x_s)/dist(x_N) - L
    worst_upper_margin: float  # min over s of U - dist(x_s)/dist(x_N)
    first_failure: Optional[int] = None
    failures: list = field(default_factory=list)


def verify_trajectory(traj: Trajectory, model: ErrorModel, envelope: BoundEnvelope,
                      rtol: float = 1e-9) -> TrajectoryVerdict:
    """Check per step: the relative gradient error, the sigma/distance ratio band, and the envelope."""
    recs = traj.records  # t = N .. 0
    dN = recs[0].distance
    worst_err = 0.0
    worst_ratio = math.inf
    worst_lo = worst_up = math.inf
    failures = []
    for r in recs:
        s = r.t
        if r.epsilon is not None and r.distance > 0:
            worst_err = max(worst_err, r.rel_proj_error)
            if r.rel_proj_error > model.eta + rtol * max(model.eta, 1.0):
                failures.append((s, "gradient error"))
        ratio_margin = min(model.nu - r.ratio, r.ratio - 1.0 / model.nu)
        worst_ratio = min(worst_ratio, ratio_margin)
        if ratio_margin < -rtol * model.nu:
            failures.append((s, "ratio band"))
        q = r.distance / dN
        lo_m = q - envelope.lower[s]
        up_m = envelope.upper[s] - q
        worst_lo = min(worst_lo, lo_m)
        worst_up = min(worst_up, up_m)
        if lo_m < -rtol * max(abs(envelope.lower[s]), 1e-300) or up_m < -rtol * envelope.upper[s]:
            failures.append((s, "envelope"))
    first = max((s for s, _ in failures), default=None)
    return TrajectoryVerdict(not failures, worst_err, worst_ratio, worst_lo, worst_up, first, failures)


def error_model_fit(trajectories: Sequence[Trajectory]) -> tuple[float, float]:
    """Empirical ``(eta_hat, nu_hat)``: worst relative error and worst sigma/distance mismatch.

    nu_hat covers every step, so every step is in band for it and eta_hat is
    the maximum over all evaluated steps.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    eta_hat, nu_hat = 0.0, 1.0
    for tr in trajectories:
        for r in tr.records:
            if r.distance > 0 and math.isfinite(r.ratio):
                nu_hat = max(nu_hat, r.ratio, 1.0 / r.ratio)
                if r.epsilon is not None:
                    eta_hat = max(eta_hat, r.rel_proj_error)
    return eta_hat, nu_hat


# -- gamma sweep -----------------------------------------------------------------


@dataclass
class SweepRow:
    n_steps: int
    gamma: float
    mean_terminal_distance: float
    mean_terminal_rel_error: float
    trials: int


def gamma_sweep(target, make_denoiser: Callable[[int], Callable], schedule_for: Callable[[int], NoiseSchedule],
                gammas: Sequence[float], n_steps_list: Sequence[int], trials: int, seed: int,
                init: str = "gaussian", terminal_full_step: bool = True) -> list[SweepRow]:
    """Mean terminal distance to ``target`` for every (N, gamma) pair.

    ``make_denoiser(trial)`` builds a fresh denoiser per trial so that any
    injected error has its own stream; starting points depend only on
    ``(seed, trial)``, so every gamma sees the same starts. The terminal
    relative error is ``|final - proj(x_1)| / dist(x_1)``.
    """
    rows = []
    for N in n_steps_list:
        sched = schedule_for(N)
        starts = [init_xN(sched.sigmas[-1], target.dim, child_rng(seed, i, 0), init, target)
                  for i in range(trials)]
        for g in gammas:
            spec = SamplerSpec("ge", float(g), terminal_full_step, seed)
            dists, rels = [], []
            for i in range(trials):
                tr = run(spec, sched, make_denoiser(i), starts[i], target)
                dists.append(target.distance(tr.final))
                x1 = tr.records[-2].x
                p1 = target.project(x1)
                rels.append(np.linalg.norm(tr.final - p1.nearest) / p1.distance if p1.distance > 0 else math.nan)
            rows.append(SweepRow(N, float(g), float(np.mean(dists)), float(np.nanmean(rels)), trials))
    return rows
