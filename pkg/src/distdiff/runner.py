"""Run configuration and the experiment orchestration behind the CLI.

A config is an INI file with one section per ingredient::

    [run]         seed, trials, with_x, dump_state
    [dataset]     kind (+ n, m, kind params) | kind = csv + path | kind = sphere/circle
    [schedule]    kind = loglinear|ddim-anchored|edm|ddim|ddim-offset|constant-beta|explicit (+ params)
    [sampler]     kind = ddim|ddpm|ge, gamma, terminal_full_step
    [denoiser]    kind = ideal|exact-projection|oracle|convex-mean, error_eta, error_mode, error_direction
    [error_model] eta, nu
    [init]        mode = gaussian|exact-distance

Experiment commands read their own extra section (``[concentration]``,
``[gamma_sweep]``, ``[tail_bound]``). Overrides use ``section.key=value``.
A run writes ``manifest.ini``, which is itself a config reproducing the run.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (ConcentrationParams, TailBoundParams, alpha_threshold, concentration_experiment,
                       error_model_fit, gamma_sweep, tail_bound_check)
from .datasets import DatasetGenSpec, generate
from .denoisers import (ConvexMeanDenoiser, ErrorInjectedDenoiser, ErrorModel, ExactProjectionDenoiser,
                        IdealDenoiser, OracleDenoiser)
from .geometry import PointCloud, Sphere
from .samplers import SamplerSpec, child_rng, init_xN, run
from .schedules import (NoiseSchedule, build_constant_beta, build_ddim_linear, build_edm, build_loglinear,
                        is_admissible)

SECTIONS = ("run", "dataset", "schedule", "sampler", "denoiser", "error_model", "init")


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    """Floats with 17 significant digits, everything else via str."""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


@dataclass
class RunConfig:
    sections: dict  # section -> {key: raw string}

    @classmethod
    def from_text(cls, text: str = "", overrides=(), seed: Optional[int] = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        sections = {s: dict(cp[s]) for s in cp.sections() if s != "manifest"}
        for ov in overrides:
            key, sep, value = ov.partition("=")
            sec, dot, k = key.strip().partition(".")
            if not sep or not dot or not k:
                raise ConfigError(f"override {ov!r} must look like section.key=value")
            sections.setdefault(sec, {})[k] = value.strip()
        if seed is not None:
            sections.setdefault("run", {})["seed"] = str(seed)
        return cls(sections)

    @classmethod
    def from_file(cls, path, overrides=(), seed=None) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, overrides, seed)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def get(self, sec, key, typ=str, default=None, required=False):
        raw = self.section(sec).get(key)
        if raw is None or raw == "":
            if required:
                raise ConfigError(f"{sec}.{key}: required")
            return default
        try:
            if typ is bool:
                if raw.lower() in ("1", "true", "yes", "on"):
                    return True
                if raw.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            if typ == "floats":
                return [float(v) for v in raw.replace(",", " ").split()]
            if typ == "ints":
                return [int(v) for v in raw.replace(",", " ").split()]
            return typ(raw)
        except ValueError as exc:
            raise ConfigError(f"{sec}.{key}: cannot parse {raw!r}") from exc

    @property
    def seed(self) -> int:
        return self.get("run", "seed", int, required=True)

    def to_ini(self, extra: Optional[dict] = None) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for sec in sorted(self.sections):
            cp[sec] = {k: self.sections[sec][k] for k in sorted(self.sections[sec])}
        if extra:
            cp["manifest"] = {k: str(v) for k, v in sorted(extra.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# -- resolution ----------------------------------------------------------------


_DATA_PARAMS = {"radius": float, "d": int, "centers": int, "spread": float, "scale": float,
                "separation": float, "spacing": float}


def build_target(cfg: RunConfig):
    kind = cfg.get("dataset", "kind", required=True)
    if kind == "csv":
        path = cfg.get("dataset", "path", required=True)
        try:
            return PointCloud.load_csv(path, cfg.get("dataset", "skip_header", bool, False))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"dataset.path: {exc}") from exc
    n = cfg.get("dataset", "n", int, required=True)
    if kind in ("sphere", "circle"):
        radius = cfg.get("dataset", "radius", float, 1.0)
        try:
            if kind == "circle":
                return Sphere.circle(n, radius)
            return Sphere.coordinate(n, cfg.get("dataset", "d", int, n - 1), radius)
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from exc
    params = {k: cfg.get("dataset", k, t) for k, t in _DATA_PARAMS.items() if k in cfg.section("dataset")}
    try:
        spec = DatasetGenSpec(kind, n, cfg.get("dataset", "m", int, required=True),
                              cfg.get("dataset", "seed", int, cfg.seed), params)
        return generate(spec)
    except ValueError as exc:
        raise ConfigError(f"dataset: {exc}") from exc


def build_schedule(cfg: RunConfig, n_steps: Optional[int] = None) -> NoiseSchedule:
    g = lambda k, t=float, d=None, r=False: cfg.get("schedule", k, t, d, r)  # noqa: E731
    kind = g("kind", str, "loglinear")
    N = n_steps if n_steps is not None else g("n_steps", int, None, kind != "explicit")
    try:
        if kind == "loglinear":
            return build_loglinear(g("sigma_max", r=True), g("sigma_min", r=True), N, g("sigma_1"))
        if kind == "ddim-anchored":
            # geometric from sigma_max to sigma_1 = sqrt(sigma_1 of the N-step DDIM grid), then sigma_min
            s1 = math.sqrt(build_ddim_linear(N).sigmas[1])
            return build_loglinear(g("sigma_max", d=40.0), g("sigma_min", d=0.01), N, s1)
        if kind == "edm":
            return build_edm(g("sigma_max", d=80.0), g("sigma_min", d=0.002), g("rho", d=7.0), N)
        if kind in ("ddim", "ddim-offset"):
            return build_ddim_linear(N, g("beta_start", d=1e-4), g("beta_end", d=0.02), g("t_train", int, 1000),
                                     g("offset_sigma", r=kind == "ddim-offset"), g("sigma_min", d=0.002))
        if kind == "constant-beta":
            return build_constant_beta(g("sigma_max", r=True), g("beta", r=True), N)
        if kind == "explicit":
            return NoiseSchedule.from_descending(g("sigmas", "floats", r=True))
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from exc
    raise ConfigError(f"schedule.kind: unknown schedule {kind!r}")


def build_sampler(cfg: RunConfig) -> SamplerSpec:
    try:
        return SamplerSpec(cfg.get("sampler", "kind", str, "ddim"), cfg.get("sampler", "gamma", float, 2.0),
                           cfg.get("sampler", "terminal_full_step", bool, True), cfg.seed)
    except ValueError as exc:
        raise ConfigError(f"sampler: {exc}") from exc


def build_error_model(cfg: RunConfig) -> ErrorModel:
    try:
        return ErrorModel(cfg.get("error_model", "eta", float, 0.1), cfg.get("error_model", "nu", float, 2.0))
    except ValueError as exc:
        raise ConfigError(f"error_model: {exc}") from exc


def build_denoiser(cfg: RunConfig, target, x_N, rng: np.random.Generator):
    kind = cfg.get("denoiser", "kind", str, "ideal")
    if kind in ("ideal", "convex-mean") and not isinstance(target, PointCloud):
        raise ConfigError(f"denoiser.kind: {kind} needs a point-cloud data set")
    if kind == "ideal":
        den = IdealDenoiser(target)
    elif kind == "convex-mean":
        den = ConvexMeanDenoiser(target)
    elif kind == "exact-projection":
        den = ExactProjectionDenoiser(target)
    elif kind == "oracle":
        den = OracleDenoiser(target.project(x_N).nearest)
    else:
        raise ConfigError(f"denoiser.kind: unknown denoiser {kind!r}")
    eta = cfg.get("denoiser", "error_eta", float, 0.0)
    if eta > 0:
        try:
            den = ErrorInjectedDenoiser(den, target, eta, cfg.get("denoiser", "error_mode", str, "random-orthogonal"),
                                        rng, cfg.get("denoiser", "error_direction", "floats"))
        except ValueError as exc:
            raise ConfigError(f"denoiser: {exc}") from exc
    return den


def resolve(cfg: RunConfig):
    """Build every ingredient once, so config errors surface before any work."""
    target = build_target(cfg)
    schedule = build_schedule(cfg)
    spec = build_sampler(cfg)
    model = build_error_model(cfg)
    init = cfg.get("init", "mode", str, "gaussian")
    if init not in ("gaussian", "exact-distance"):
        raise ConfigError(f"init.mode: unknown mode {init!r}")
    trials = cfg.get("run", "trials", int, 1)
    if trials < 1:
        raise ConfigError("run.trials: must be >= 1")
    # probe the denoiser section with a throwaway start point
    build_denoiser(cfg, target, np.ones(target.dim), child_rng(0))
    return target, schedule, spec, model, init, trials


# -- commands --------------------------------------------------------------------


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow([fmt(v) for v in r.values()])
    return buf.getvalue()


def manifest_text(cfg: RunConfig, command: str) -> str:
    return cfg.to_ini({"command": command, "version": __version__})


def cmd_generate(cfg: RunConfig, out: Path) -> PointCloud:
    cloud = build_target(cfg)
    if not isinstance(cloud, PointCloud):
        raise ConfigError("dataset.kind: generate needs a point-cloud generator")
    path = out if out.suffix == ".csv" else out / "dataset.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    cloud.save_csv(path)
    _write(path.with_suffix(".manifest.ini"), manifest_text(cfg, "generate"))
    return cloud


def _one_trial(cfg, target, schedule, spec, init, i):
    seed = cfg.seed
    x_N = init_xN(schedule.sigmas[-1], target.dim, child_rng(seed, i, 0), init, target)
    den = build_denoiser(cfg, target, x_N, child_rng(seed, i, 1))
    trial_spec = SamplerSpec(spec.kind, spec.gamma, spec.terminal_full_step, seed)
    return run(trial_spec, schedule, den, x_N, target, child_rng(seed, i, 2))


def sample_trials(cfg: RunConfig, threads: int = 1):
    target, schedule, spec, model, init, trials = resolve(cfg)
    work = lambda i: _one_trial(cfg, target, schedule, spec, init, i)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(work, range(trials)))
    else:
        trajs = [work(i) for i in range(trials)]
    return target, schedule, trajs


def summarize(target, trajs) -> dict:
    term = np.array([target.distance(tr.final) for tr in trajs])
    dev = max(abs(r.distance / (math.sqrt(target.dim) * r.sigma) - 1.0) for tr in trajs for r in tr.records)
    eta_hat, nu_hat = error_model_fit(trajs)
    return dict(trials=len(trajs), mean_terminal_distance=float(term.mean()),
                max_terminal_distance=float(term.max()), eta_hat=eta_hat, nu_hat=nu_hat,
                max_abs_dist_ratio_dev=float(dev), evals_per_trial=trajs[0].n_evals)


def cmd_sample(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    target, schedule, trajs = sample_trials(cfg, threads)
    with_x = cfg.get("run", "with_x", bool, False)
    dump = cfg.get("run", "dump_state", bool, False)
    for i, tr in enumerate(trajs):
        _write(out / "trajectories" / f"traj_{i:04d}.csv", tr.to_csv(with_x))
        if dump:
            _write(out / "trajectories" / f"traj_{i:04d}.json", tr.to_json())
    summary = summarize(target, trajs)
    _write(out / "summary.csv", _rows_to_csv([summary]))
    _write(out / "schedule.csv", schedule.to_csv())
    _write(out / "manifest.ini", manifest_text(cfg, "sample"))
    return summary


def cmd_schedule(cfg: RunConfig, action: str) -> str:
    model = build_error_model(cfg)
    if action == "beta-star":
        from .schedules import beta_star
        N = cfg.get("schedule", "n_steps", int, required=True)
        try:
            b = beta_star(model.eta, model.nu, N)
        except ValueError as exc:
            raise ConfigError(f"error_model: {exc}") from exc
        return _rows_to_csv([dict(eta=model.eta, nu=model.nu, n_steps=N, beta_star=b, sigma_ratio=1.0 - b)]) + \
            f"# sigma_(t-1)/sigma_t >= {1.0 - b:.6g}\n"
    if action == "limits":
        from .schedules import limit_ratios
        try:
            a, b = limit_ratios(model.eta, model.nu)
        except ValueError as exc:
            raise ConfigError(f"error_model: {exc}") from exc
        return _rows_to_csv([dict(eta=model.eta, nu=model.nu, sigma_ratio_limit=a, distance_ratio_limit=b)]) + \
            f"# limits: {a:.9g} {b:.9g}\n"
    schedule = build_schedule(cfg)
    if action == "build":
        return schedule.to_csv()
    if action == "check":
        rep = is_admissible(schedule, model.eta, model.nu, cfg.get("schedule", "tol", float, 1e-12))
        rows = [dict(t=t, lower_margin=rep.lower_margin[t - 1], upper_margin=rep.upper_margin[t - 1])
                for t in range(schedule.n_steps, 0, -1)]
        verdict = "admissible" if rep.admissible else f"inadmissible: {rep.reason}"
        return _rows_to_csv(rows) + f"# {verdict}; minimum margin {rep.min_margin:.3g}\n"
    raise ConfigError(f"unknown schedule action {action!r}")


def cmd_concentration(cfg: RunConfig, out: Path) -> dict:
    g = lambda k, t=float, d=None: cfg.get("concentration", k, t, d)  # noqa: E731
    n, d = g("n", int, 1000), g("d", int, 1)
    try:
        M = Sphere.coordinate(n, d, g("radius", float, 1.0))
    except ValueError as exc:
        raise ConfigError(f"concentration: {exc}") from exc
    sigma = g("sigma")
    if sigma is None:
        sigma = g("sigma_sqrt_n_over_reach", float, 0.1) * M.reach / math.sqrt(n)
    rep = concentration_experiment(ConcentrationParams(M, sigma, g("t", float, 3.0), g("trials", int, 10_000), cfg.seed))
    row = dict(n=n, d=d, sigma=sigma, **rep.row())
    _write(out / "concentration.csv", _rows_to_csv([row]))
    _write(out / "manifest.ini", manifest_text(cfg, "concentration"))
    return row


def cmd_gamma_sweep(cfg: RunConfig, out: Path) -> list[dict]:
    target = build_target(cfg)
    if cfg.get("denoiser", "kind", str, "ideal") == "oracle":
        raise ConfigError("denoiser.kind: the oracle denoiser is tied to one start point; not usable in a sweep")
    gammas = cfg.get("gamma_sweep", "gammas", "floats", [1.0, 1.5, 2.0, 2.5, 3.0])
    Ns = cfg.get("gamma_sweep", "n_steps", "ints", [5, 10, 20])
    trials = cfg.get("gamma_sweep", "trials", int, 20)
    init = cfg.get("init", "mode", str, "gaussian")
    seed = cfg.seed
    for N in Ns:
        build_schedule(cfg, N)
    build_denoiser(cfg, target, None, child_rng(0))
    rows = gamma_sweep(target, lambda i: build_denoiser(cfg, target, None, child_rng(seed, i, 1)),
                       lambda N: build_schedule(cfg, N), gammas, Ns, trials, seed, init,
                       cfg.get("sampler", "terminal_full_step", bool, True))
    dict_rows = [r.__dict__ for r in rows]
    _write(out / "gamma_sweep.csv", _rows_to_csv(dict_rows))
    _write(out / "manifest.ini", manifest_text(cfg, "gamma-sweep"))
    return dict_rows


def constructed_tail_cases(count: int, m: int, n: int, eta: float, seed: int):
    """Random clouds with a query near one point and alpha at the threshold (padded by 1e-12 against roundoff)."""
    cases = []
    for k in range(count):
        rng = child_rng(seed, k)
        pts = rng.standard_normal((m, n))
        x = pts[0] + 0.1 * rng.standard_normal(n) / math.sqrt(n)
        cloud = PointCloud(pts)
        dist = cloud.distance(x)
        sigma = float(dist * rng.uniform(0.2, 2.0))
        alpha = alpha_threshold(dist, sigma, m, eta) * (1 + 1e-12)
        cases.append(TailBoundParams(cloud, x, sigma, alpha, eta))
    return cases


def cmd_tail_bound(cfg: RunConfig, out: Path) -> list[dict]:
    g = lambda k, t=int, d=None: cfg.get("tail_bound", k, t, d)  # noqa: E731
    cases = constructed_tail_cases(g("clouds", int, 20), g("m", int, 50), g("n", int, 8), g("eta", float, 0.1), cfg.seed)
    rows = [dict(case=i, sigma=c.sigma, alpha=c.alpha, **tail_bound_check(c).row()) for i, c in enumerate(cases)]
    _write(out / "tail_bound.csv", _rows_to_csv(rows))
    _write(out / "manifest.ini", manifest_text(cfg, "tail-bound"))
    return rows


def fault_factor() -> float:
    """Step-size corruption factor for fault-injection drills (env DISTDIFF_CORRUPT_BETA)."""
    raw = os.environ.get("DISTDIFF_CORRUPT_BETA", "")
    return float(raw) if raw else 1.0
