"""Invariant suites behind ``distdiff verify``.

Each suite returns a list of :class:`Check` rows. The report is JSON with
sorted keys and no timings, so two runs with the same seed are
byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import ConcentrationParams, concentration_experiment, cosine_matrix, tail_bound_check, verify_trajectory
from .denoisers import (ConvexMeanDenoiser, ErrorInjectedDenoiser, ErrorModel, ExactProjectionDenoiser,
                        IdealDenoiser, ideal_denoise)
from .geometry import PointCloud, Sphere, diameter, grad_half_sq_distance, smoothed_sq_distance
from .samplers import (SamplerSpec, child_rng, ddim_step, ddim_step_z, ddpm_coefficients, ddpm_step_z, init_xN,
                       run)
from .schedules import (NoiseSchedule, alphabar_to_sigma, beta_star, bound_envelope, build_constant_beta,
                        build_loglinear, is_admissible, limit_ratios, finite_ratios)

SUITES = ("geometry", "denoiser", "sampler", "schedule", "concentration", "tail-bound", "appendix-a")


@dataclass
class Check:
    suite: str
    key: str
    passed: bool
    value: float
    limit: float
    detail: str = ""


def _check(suite, key, value, limit, detail="", le=True) -> Check:
    ok = bool(value <= limit) if le else bool(value >= limit)
    return Check(suite, key, ok, float(value), float(limit), detail)


def fd_grad(f, x, h=1e-5):
    """Central finite differences."""
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# -- reusable measurements --------------------------------------------------------


def exact_distance_deviation(target, seeds, n_steps=50, seed=0, sigma_max=None, sigma_min=None,
                             corrupt: float = 1.0) -> float:
    """max_t |dist(x_t) / (sqrt(n) sigma_t) - 1| for DDIM with exact projections from an exact-distance start.

    ``corrupt != 1`` scales one intermediate sigma used by the sampler while
    the comparison keeps the nominal schedule (a fault-injection drill).
    """
    n = target.dim
    diam = target.diameter
    smax = sigma_max if sigma_max is not None else 50.0 * diam / math.sqrt(n)
    smin = sigma_min if sigma_min is not None else 0.01 * diam / math.sqrt(n)
    sched = build_loglinear(smax, smin, n_steps)
    used = sched
    if corrupt != 1.0:
        s = sched.sigmas.copy()
        k = n_steps // 2
        s[k] = np.clip(s[k] * corrupt, 0.5 * (s[k - 1] + s[k]), 0.5 * (s[k] + s[k + 1]))
        used = NoiseSchedule(s, "corrupted")
    worst = 0.0
    spec = SamplerSpec("ddim", terminal_full_step=False, seed=seed)
    for i in range(seeds):
        x_N = init_xN(sched.sigmas[-1], n, child_rng(seed, i, 0), "exact-distance", target)
        tr = run(spec, used, ExactProjectionDenoiser(target), x_N, target)
        for r in tr.records:
            worst = max(worst, abs(r.distance / (math.sqrt(n) * sched.sigmas[r.t]) - 1.0))
    return worst


def bracketing_violations(target, etas, modes, seeds, n_steps=20, seed=0, rtol=1e-9):
    """Count iterates outside ``[L_t, U_t]`` for DDIM with injected error; returns (violations, checked, worst)."""
    n = target.dim
    diam = target.diameter
    sched = build_loglinear(20.0 * diam / math.sqrt(n), 0.05 * diam / math.sqrt(n), n_steps)
    bad = checked = 0
    worst = math.inf
    for eta in etas:
        env = bound_envelope(sched, eta)
        for mi, mode in enumerate(modes):
            for i in range(seeds):
                x_N = init_xN(sched.sigmas[-1], n, child_rng(seed, i, 0), "exact-distance", target)
                den = ErrorInjectedDenoiser(ExactProjectionDenoiser(target), target, eta, mode,
                                            child_rng(seed, i, 1, mi))
                tr = run(SamplerSpec("ddim", terminal_full_step=False), sched, den, x_N, target)
                dN = tr.records[0].distance
                for r in tr.records[1:]:
                    q = r.distance / dN
                    lo, up = env.lower[r.t], env.upper[r.t]
                    m = min((q - lo) / max(abs(lo), 1e-300), (up - q) / up)
                    worst = min(worst, m)
                    checked += 1
                    if m < -rtol:
                        bad += 1
    return bad, checked, worst


def boundary_cases(count, seed=0):
    """Random (eta, nu, N) with the admissibility verdict at beta* and just above it."""
    rng = child_rng(seed, 7)
    out = []
    for _ in range(count):
        eta = float(rng.uniform(0.01, 0.9))
        nu = float(rng.uniform(1.05, 5.0))
        N = int(rng.integers(2, 500))
        b = beta_star(eta, nu, N)
        at = is_admissible(np.full(N, b), eta, nu)
        above = is_admissible(np.full(N, b * (1 + 1e-3)), eta, nu)
        out.append((eta, nu, N, at.admissible, above.admissible))
    return out


def ideal_gradient_errors(count, seed=0):
    """Relative error of sigma * eps* against a finite-difference gradient of half the smoothed squared distance."""
    rng = child_rng(seed, 6)
    errs = []
    for _ in range(count):
        n = int(rng.integers(1, 17))
        m = int(rng.integers(1, 51))
        cloud = PointCloud(rng.standard_normal((m, n)))
        x = rng.standard_normal(n) * rng.uniform(0.5, 2.0)
        sigma = float(math.exp(rng.uniform(math.log(0.3), math.log(3.0))))
        f = lambda y: 0.5 * smoothed_sq_distance(y, cloud, sigma)  # noqa: E731
        g = fd_grad(f, x, 1e-5 * max(1.0, sigma))
        se = sigma * ideal_denoise(x, sigma, cloud).epsilon
        errs.append(float(np.linalg.norm(se - g) / max(np.linalg.norm(g), 1e-12)))
    return errs


def large_noise_violations(cloud: PointCloud, scales, queries, seed=0):
    """Convex-mean denoiser against the bound nu * diam / (sqrt(n) sigma), nu from the measured ratio."""
    n = cloud.dim
    diam = cloud.diameter
    den = ConvexMeanDenoiser(cloud)
    bad = total = 0
    worst = math.inf
    for si, s in enumerate(scales):
        sigma = s * diam / math.sqrt(n)
        rng = child_rng(seed, 8, si)
        for _ in range(queries):
            x = cloud.mean + sigma * rng.standard_normal(n)
            res = cloud.project(x)
            if res.tie or res.distance == 0:
                continue
            out = den(x, sigma)
            err = np.linalg.norm(out.x0_hat - res.nearest) / res.distance
            ratio = math.sqrt(n) * sigma / res.distance
            nu = max(ratio, 1.0 / ratio)
            bound = nu * diam / (math.sqrt(n) * sigma)
            worst = min(worst, bound - err)
            total += 1
            bad += err > bound
    return bad, total, worst


def coordinate_change_deviation(grids, seed=0, n=8, N=20):
    """Worst relative gap between z-coordinate and x-coordinate trajectories over random alphabar grids.

    Both updates see the same eps (the exact-projection direction of the
    current x-iterate) and, for DDPM, the same normal draws.
    """
    rng = child_rng(seed, 9)
    worst = 0.0
    for g in range(grids):
        cloud = PointCloud(rng.standard_normal((10, n)))
        ab = np.sort(rng.uniform(1e-4, 0.999, N + 1))[::-1]  # decreasing in t
        sig = alphabar_to_sigma(ab)
        den = ExactProjectionDenoiser(cloud)
        for kind in ("ddim", "ddpm"):
            noise = child_rng(seed, 10, g).standard_normal((N + 1, n))
            x = sig[N] * rng.standard_normal(n)
            z = math.sqrt(ab[N]) * x
            for t in range(N, 0, -1):
                eps = den(x, sig[t]).epsilon
                if kind == "ddim":
                    x_new = ddim_step(x, sig[t], sig[t - 1], eps)
                    z = ddim_step_z(z, ab[t], ab[t - 1], eps)
                else:
                    s_p, scale = ddpm_coefficients(sig[t], sig[t - 1])
                    x_new = x + (s_p - sig[t]) * eps + scale * noise[t]
                    z = ddpm_step_z(z, ab[t], ab[t - 1], eps, noise[t])
                x = x_new
                rel = np.linalg.norm(z / math.sqrt(ab[t - 1]) - x) / max(np.linalg.norm(x), 1e-300)
                worst = max(worst, float(rel))
    return worst


# -- suites -------------------------------------------------------------------------


def suite_geometry(seed):
    S = "geometry"
    rng = child_rng(seed, 1)
    out = []
    K = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0]]))
    x = np.array([0.3, 0.4])
    exact = K.distance(x) ** 2
    gaps = [smoothed_sq_distance(x, K, s) - exact for s in (1.0, 0.1, 0.01)]
    out.append(_check(S, "smoothed-distance-monotone-limit", float(max(np.diff(np.abs(gaps)))), 0.0,
                      "gap to min squared distance shrinks as sigma -> 0"))
    out.append(_check(S, "smoothed-distance-lower", float(max(gaps)), 1e-12, "smoothed <= exact squared distance"))
    worst = 0.0
    for _ in range(20):
        cloud = PointCloud(rng.standard_normal((30, 5)))
        y = rng.standard_normal(5)
        g = fd_grad(lambda z: 0.5 * cloud.distance(z) ** 2, y, 1e-6)
        worst = max(worst, float(np.linalg.norm(g - grad_half_sq_distance(y, cloud))))
    out.append(_check(S, "half-sq-distance-gradient", worst, 1e-6, "x - proj(x) vs finite differences"))
    sph = Sphere.coordinate(6, 2, 1.5)
    pts = sph.sample(20000, child_rng(seed, 2))
    ys = 2.0 * child_rng(seed, 3).standard_normal((10, 6))
    gap = max(abs(np.sqrt(((pts - y) ** 2).sum(1)).min() - sph.distance(y)) for y in ys)
    out.append(_check(S, "sphere-distance-analytic", float(gap), 0.2, "analytic vs dense sample minimum (from above)"))
    cloud = PointCloud(rng.standard_normal((200, 4)))
    brute = max(np.linalg.norm(a - b) for a in cloud.points for b in cloud.points)
    out.append(_check(S, "diameter-brute-force", abs(diameter(cloud) - brute), 1e-12))
    return out


def suite_denoiser(seed):
    S = "denoiser"
    out = []
    errs = ideal_gradient_errors(100, seed)
    out.append(_check(S, "ideal-denoiser-gradient-identity", max(errs), 1e-5))
    rng = child_rng(seed, 4)
    cloud = PointCloud(rng.standard_normal((40, 8)))
    worst = 0.0
    for k, mode in enumerate(("random-orthogonal", "adversarial", "overshoot")):
        den = ErrorInjectedDenoiser(ExactProjectionDenoiser(cloud), cloud, 0.1, mode, child_rng(seed, 5, k))
        for _ in range(20):
            x = 3.0 * rng.standard_normal(8)
            o = den(x, 1.0)
            p = cloud.project(x)
            worst = max(worst, abs(np.linalg.norm(o.x0_hat - p.nearest) / p.distance - 0.1))
    out.append(_check(S, "injected-error-exact-budget", worst, 1e-9))
    bad, total, _ = large_noise_violations(cloud, (10.0, 100.0), 200, seed)
    out.append(_check(S, "large-noise-convex-mean-bound", bad, 0, f"{total} queries"))
    e = ideal_denoise(np.array([1.0, 2.0]), 0.5, PointCloud(np.array([[0.0, 0.0]])))
    out.append(_check(S, "singleton-ideal-is-projection", float(np.linalg.norm(e.x0_hat)), 1e-15))
    return out


def suite_sampler(seed, corrupt: float = 1.0):
    S = "sampler"
    out = []
    rng = child_rng(seed, 11)
    cloud = PointCloud(rng.standard_normal((100, 32)))
    sph = Sphere.coordinate(64, 10, 1.0)
    for name, tgt in (("cloud", cloud), ("sphere", sph)):
        dev = exact_distance_deviation(tgt, 10, 50, seed, corrupt=corrupt)
        out.append(_check(S, f"ddim-exact-distance-{name}", dev, 1e-9, "max |dist/(sqrt(n) sigma) - 1|"))
    small = PointCloud(rng.standard_normal((30, 6)))
    bad, checked, _ = bracketing_violations(small, (0.05, 0.1, 0.3), ("random-orthogonal", "adversarial"), 5,
                                            seed=seed)
    out.append(_check(S, "error-bracketing", bad, 0, f"{checked} iterates"))
    sched = build_loglinear(10.0, 0.01, 10)
    x_N = init_xN(10.0, 6, child_rng(seed, 12), "gaussian")
    a = run(SamplerSpec("ddim"), sched, IdealDenoiser(small), x_N, small)
    b = run(SamplerSpec("ge", gamma=1.0), sched, IdealDenoiser(small), x_N, small)
    out.append(_check(S, "ge-gamma-one-is-ddim", float(np.abs(a.final - b.final).max()), 0.0))
    c = run(SamplerSpec("ge", gamma=2.0), sched, IdealDenoiser(small), x_N, small)
    out.append(_check(S, "ge-evaluation-count", abs(c.n_evals - sched.n_steps), 0))
    env = bound_envelope(sched, 0.0)
    den = ExactProjectionDenoiser(small)
    tr = run(SamplerSpec("ddim", terminal_full_step=False), sched, den,
             init_xN(10.0, 6, child_rng(seed, 13), "exact-distance", small), small)
    v = verify_trajectory(tr, ErrorModel(0.0, 1.0 + 1e-9), env)
    out.append(_check(S, "zero-error-envelope", float(not v.ok), 0.0))
    M = cosine_matrix(tr)
    out.append(_check(S, "cosine-matrix-symmetric", float(np.nanmax(np.abs(M - M.T))), 1e-12))
    return out


def suite_schedule(seed):
    S = "schedule"
    out = []
    b = beta_star(0.1, 2.0, 50)
    r = 1.0 - b
    # closed form eta / (eta + 1 - 2^(-1/50)) = 0.8789872...; it prints as 0.879 at three digits
    out.append(Check(S, "beta-star-example", round(r, 3) == 0.879, r, 0.879, "1 - beta* at three decimals"))
    cases = boundary_cases(50, seed)
    wrong = sum((not at) or above for *_, at, above in cases)
    out.append(_check(S, "admissibility-boundary", wrong, 0, "admissible at beta*, not at beta*(1+1e-3)"))
    worst = 0.0
    for eta, nu in ((0.1, 2.0), (0.2, 4.0), (0.5, 1.5)):
        lim = limit_ratios(eta, nu)
        fin = finite_ratios(eta, nu, 100_000)
        worst = max(worst, abs(fin[0] - lim[0]) / lim[0], abs(fin[1] - lim[1]) / lim[1])
    out.append(_check(S, "limit-ratios", worst, 0.01, "relative gap at N = 1e5"))
    sched = build_constant_beta(10.0, beta_star(0.1, 2.0, 20), 20)
    out.append(Check(S, "constant-beta-at-boundary-admissible", is_admissible(sched, 0.1, 2.0).admissible, 1.0, 1.0))
    return out


def suite_concentration(seed):
    S = "concentration"
    n = 1000
    M = Sphere.circle(n, 1.0)
    sigma = 0.1 * M.reach / math.sqrt(n)
    rep = concentration_experiment(ConcentrationParams(M, sigma, 3.0, 10_000, seed))
    out = [_check(S, "distance-bound-frequency", rep.freq_distance, 0.95, le=False),
           _check(S, "projection-bound-frequency", rep.freq_projection, 0.95, le=False)]
    skip = concentration_experiment(ConcentrationParams(Sphere.circle(2, 1.0), 0.01, 1.0, 10, seed))
    out.append(Check(S, "hypothesis-skip", skip.skipped, float(skip.skipped), 1.0, skip.reason))
    return out


def suite_tail_bound(seed):
    from .runner import constructed_tail_cases

    S = "tail-bound"
    reps = [tail_bound_check(c) for c in constructed_tail_cases(20, 50, 8, 0.1, seed)]
    ran = [r for r in reps if not r.skipped]
    out = [_check(S, "tail-cases-evaluated", len(ran), 20, le=False),
           _check(S, "tail-sum-bound", sum(not r.holds for r in ran), 0),
           _check(S, "tail-decomposition", max((r.decomposition_residual for r in ran), default=0.0), 1e-12)]
    single = tail_bound_check_singleton(seed)
    out.append(_check(S, "singleton-empty-tail", single, 0.0))
    return out


def tail_bound_check_singleton(seed):
    from .analysis import TailBoundParams, alpha_threshold

    K = PointCloud(np.array([[1.0, 2.0, 3.0]]))
    x = np.array([1.5, 2.0, 3.0])
    a = alpha_threshold(0.5, 1.0, 1, 0.1)
    return tail_bound_check(TailBoundParams(K, x, 1.0, a, 0.1)).tail


def suite_coordinates(seed):
    return [_check("appendix-a", "z-x-coordinate-equivalence", coordinate_change_deviation(20, seed), 1e-9)]


def run_suites(names, seed: int, corrupt: float = 1.0) -> dict:
    funcs = {"geometry": suite_geometry, "denoiser": suite_denoiser, "schedule": suite_schedule,
             "concentration": suite_concentration, "tail-bound": suite_tail_bound, "appendix-a": suite_coordinates,
             "sampler": lambda s: suite_sampler(s, corrupt)}
    checks = []
    for name in names:
        if name not in funcs:
            raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
        checks.extend(funcs[name](seed))
    failed = [c for c in checks if not c.passed]
    return dict(seed=seed, suites=list(names), passed=not failed, n_checks=len(checks), n_failed=len(failed),
                first_failure=asdict(failed[0]) if failed else None, checks=[asdict(c) for c in checks])


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1) + "\n"
