"""Noise schedules, admissibility and distance envelopes.

``NoiseSchedule.sigmas[t]`` is the noise level at step ``t`` for
``t = 0..N``; sampling runs from ``t = N`` down to ``0``. The step size of
step ``t`` is ``beta_t = 1 - sigma_{t-1} / sigma_t``.

Every long product here is evaluated as a sum of logarithms so that N up to
1e6 neither underflows nor accumulates rounding in the products.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    sigmas: np.ndarray
    name: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.array(self.sigmas, dtype=float).ravel()
        if s.size < 2:
            raise ValueError("a schedule needs at least sigma_0 and sigma_1")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("all sigmas must be finite and positive (sigma_0 = 0 is not allowed)")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sigmas must be strictly decreasing from t = N to t = 0")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def from_descending(cls, sigmas_desc, **kw) -> "NoiseSchedule":
        """Build from a list written in sampling order, sigma_N first."""
        return cls(np.asarray(sigmas_desc, dtype=float)[::-1], **kw)

    @property
    def n_steps(self) -> int:
        return self.sigmas.size - 1

    @property
    def betas(self) -> np.ndarray:
        """``betas[t]`` for t = 1..N; ``betas[0]`` is NaN."""
        b = np.empty_like(self.sigmas)
        b[0] = np.nan
        b[1:] = 1.0 - self.sigmas[:-1] / self.sigmas[1:]
        return b

    def descending(self) -> np.ndarray:
        return self.sigmas[::-1].copy()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sigma", "beta"])
        betas = self.betas
        for t in range(self.n_steps, -1, -1):
            w.writerow([t, f"{self.sigmas[t]:.17g}", "" if t == 0 else f"{betas[t]:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "NoiseSchedule":
        rows = list(csv.DictReader(io.StringIO(text)))
        by_t = {int(r["t"]): float(r["sigma"]) for r in rows}
        N = max(by_t)
        if sorted(by_t) != list(range(N + 1)):
            raise ValueError("schedule CSV must list every t from 0 to N")
        return cls(np.array([by_t[t] for t in range(N + 1)]))


# -- builders ------------------------------------------------------------------


def build_loglinear(sigma_max: float, sigma_min: float, n_steps: int,
                    sigma_1: Optional[float] = None) -> NoiseSchedule:
    """Geometric schedule from ``sigma_max`` (t = N) down to ``sigma_min`` (t = 0).

    With ``sigma_1`` the geometric part ends at t = 1 and the last step jumps
    to ``sigma_min``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    params = dict(sigma_max=sigma_max, sigma_min=sigma_min, n_steps=n_steps)
    if sigma_1 is None:
        k = np.arange(n_steps + 1) / n_steps
        s = np.exp(np.log(sigma_min) + k * (np.log(sigma_max) - np.log(sigma_min)))
        s[0], s[-1] = sigma_min, sigma_max
    else:
        if not sigma_min < sigma_1 <= sigma_max or (n_steps == 1 and sigma_1 != sigma_max):
            raise ValueError("need sigma_min < sigma_1 <= sigma_max (and sigma_1 = sigma_max when N = 1)")
        params["sigma_1"] = sigma_1
        s = np.empty(n_steps + 1)
        s[0] = sigma_min
        if n_steps == 1:
            s[1] = sigma_max
        else:
            k = np.arange(n_steps) / (n_steps - 1)
            s[1:] = np.exp(np.log(sigma_1) + k * (np.log(sigma_max) - np.log(sigma_1)))
            s[1], s[-1] = sigma_1, sigma_max
    return NoiseSchedule(s, "loglinear", params)


def build_constant_beta(sigma_max: float, beta: float, n_steps: int) -> NoiseSchedule:
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    t = np.arange(n_steps + 1)
    s = sigma_max * np.exp((n_steps - t) * math.log1p(-beta))
    return NoiseSchedule(s, "constant_beta", dict(sigma_max=sigma_max, beta=beta, n_steps=n_steps))


def build_edm(sigma_max: float = 80.0, sigma_min: float = 0.002, rho: float = 7.0,
              n_steps: int = 10) -> NoiseSchedule:
    """Karras et al. rho-schedule; i = 0 is sigma_max and maps to t = N."""
    if not 0 < sigma_min < sigma_max or rho <= 0 or n_steps < 1:
        raise ValueError("invalid EDM parameters")
    i = np.arange(n_steps + 1)
    a, b = sigma_max ** (1 / rho), sigma_min ** (1 / rho)
    s = (a + i / n_steps * (b - a)) ** rho
    s[0], s[-1] = sigma_max, sigma_min
    return NoiseSchedule(s[::-1].copy(), "edm", dict(sigma_max=sigma_max, sigma_min=sigma_min, rho=rho, n_steps=n_steps))


def linear_alphabars(beta_start: float = 1e-4, beta_end: float = 0.02, t_train: int = 1000) -> np.ndarray:
    """Cumulative products of ``1 - beta`` on the discrete linear variance grid; entry k-1 is train step k."""
    if not 0 < beta_start < beta_end < 1 or t_train < 1:
        raise ValueError("need 0 < beta_start < beta_end < 1 and t_train >= 1")
    return np.cumprod(1.0 - np.linspace(beta_start, beta_end, t_train))


def build_ddim_linear(n_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02,
                      t_train: int = 1000, offset_sigma: Optional[float] = None,
                      sigma_min: float = 0.002) -> NoiseSchedule:
    """Evenly spaced subsampling of the training noise levels.

    Step t uses train step ``round(t * K / N)`` where K is the top of the
    grid (or, with ``offset_sigma``, the largest train step whose sigma does
    not exceed it). sigma_0 is ``sigma_min`` because the training grid never
    reaches zero noise.
    """
    sig = alphabar_to_sigma(linear_alphabars(beta_start, beta_end, t_train))
    K = t_train
    if offset_sigma is not None:
        below = np.nonzero(sig <= offset_sigma)[0]
        if below.size == 0:
            raise ValueError(f"no training sigma is <= {offset_sigma}")
        K = int(below[-1]) + 1
    if not 1 <= n_steps <= K:
        raise ValueError(f"n_steps must lie in [1, {K}]")
    k = np.rint(np.arange(1, n_steps + 1) * K / n_steps).astype(int)
    s = np.concatenate([[sigma_min], sig[k - 1]])
    params = dict(n_steps=n_steps, beta_start=beta_start, beta_end=beta_end, t_train=t_train,
                  sigma_min=sigma_min)
    if offset_sigma is not None:
        params["offset_sigma"] = offset_sigma
    return NoiseSchedule(s, "ddim_offset" if offset_sigma is not None else "ddim", params)


# -- coordinate conversion -----------------------------------------------------


def sigma_to_alphabar(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    out = 1.0 / (1.0 + sigma * sigma)
    return float(out) if out.ndim == 0 else out


def alphabar_to_sigma(alphabar):
    a = np.asarray(alphabar, dtype=float)
    if np.any((a <= 0) | (a >= 1)):
        raise ValueError("alphabar must lie in (0, 1)")
    out = np.sqrt((1.0 - a) / a)
    return float(out) if out.ndim == 0 else out


# -- step-size theory ----------------------------------------------------------


def beta_star(eta: float, nu: float, n_steps: int) -> float:
    """Largest constant step size whose geometric schedule is (eta, nu)-admissible."""
    if not eta > 0:
        raise ValueError("beta_star needs eta > 0")
    if nu < 1 or n_steps < 1:
        raise ValueError("need nu >= 1 and n_steps >= 1")
    c = -math.expm1(-math.log(nu) / n_steps)
    return c / (eta + c)


def limit_ratios(eta: float, nu: float) -> tuple[float, float]:
    """N -> infinity limits of sigma_0/sigma_N and of the distance upper bound at beta_star."""
    if not eta > 0 or nu < 1:
        raise ValueError("need eta > 0 and nu >= 1")
    return nu ** (-1.0 / eta), nu ** ((eta - 1.0) / eta)


def finite_ratios(eta: float, nu: float, n_steps: int) -> tuple[float, float]:
    """``(1 - b)^N`` and ``(1 + (eta - 1) b)^N`` at ``b = beta_star(eta, nu, N)``."""
    b = beta_star(eta, nu, n_steps)
    return math.exp(n_steps * math.log1p(-b)), math.exp(n_steps * math.log1p((eta - 1.0) * b))


@dataclass(frozen=True, eq=False)
class BoundEnvelope:
    """Per-iterate bounds on ``dist(x_s) / dist(x_N)``.

    ``lower[s]`` and ``upper[s]`` bound the iterate at step ``s`` for
    ``s = 0..N``; ``lower[N] = upper[N] = 1``. ``vacuous_below`` is the
    largest ``s`` whose lower bound used a nonpositive factor (so the lower
    bound is trivially true there and below), or None.
    """

    lower: np.ndarray
    upper: np.ndarray
    vacuous_below: Optional[int] = None


def _betas_of(schedule) -> np.ndarray:
    """Betas for t = 1..N as a length-N array indexed t-1."""
    if isinstance(schedule, NoiseSchedule):
        return schedule.betas[1:]
    b = np.asarray(schedule, dtype=float).ravel()
    if np.any((b < 0) | (b > 1)):
        raise ValueError("betas must lie in [0, 1]")
    return b


def _signed_suffix_products(factors: np.ndarray):
    """Suffix products ``prod_{i >= t} f_i`` via logs, with sign tracking."""
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(factors))
    rev_logs = np.cumsum(logs[::-1])[::-1]
    neg = np.cumsum((factors < 0)[::-1])[::-1] % 2
    zero = np.cumsum((factors == 0)[::-1])[::-1] > 0
    vals = np.where(zero, 0.0, np.where(neg == 1, -1.0, 1.0) * np.exp(rev_logs))
    return vals, rev_logs


def _suffix_sums(v: np.ndarray) -> np.ndarray:
    """``out[t] = sum(v[t:])`` with Neumaier compensation."""
    out = np.empty_like(v)
    total = comp = 0.0
    for i in range(v.size - 1, -1, -1):
        x = float(v[i])
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
        out[i] = total + comp
    return out


def bound_envelope(schedule, eta: float) -> BoundEnvelope:
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    b = _betas_of(schedule)
    lo_f = 1.0 - b * (eta + 1.0)
    up_f = 1.0 + b * (eta - 1.0)
    lo, _ = _signed_suffix_products(lo_f)
    up, _ = _signed_suffix_products(up_f)
    # index t-1 of the suffix product is the bound on iterate s = t - 1
    lower = np.append(lo, 1.0)
    upper = np.append(up, 1.0)
    bad = np.nonzero(lo_f <= 0)[0]
    return BoundEnvelope(lower, upper, int(bad[-1]) if bad.size else None)


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    admissible: bool
    lower_margin: np.ndarray  # log prod(1-beta) - (log U - log nu), index t-1
    upper_margin: np.ndarray  # log nu + log L - log prod(1-beta), index t-1
    reason: str = ""

    @property
    def min_margin(self) -> float:
        return float(min(self.lower_margin.min(), self.upper_margin.min()))

    @property
    def first_failure(self) -> Optional[int]:
        """Largest failing t (the first one met while sampling), or None."""
        bad = np.nonzero((self.lower_margin < 0) | (self.upper_margin < 0) | ~np.isfinite(self.upper_margin))[0]
        return int(bad[-1]) + 1 if bad.size else None


def is_admissible(schedule: Union[NoiseSchedule, Sequence[float]], eta: float, nu: float,
                  tol: float = 1e-12) -> AdmissibilityReport:
    """Check ``U_t / nu <= prod_{i>=t}(1 - beta_i) <= nu * L_t`` for every t, in log space.

    ``schedule`` may also be a raw sequence of betas for t = 1..N, which
    allows the degenerate constant-sigma case (all betas zero).
    """
    if not 0 <= eta < 1 or nu < 1:
        raise ValueError("need 0 <= eta < 1 and nu >= 1")
    b = _betas_of(schedule)
    log_nu = math.log(nu)
    lo_f = 1.0 - b * (eta + 1.0)
    # P/U and L/P are products of 1 -+ r_i with r_i = beta_i eta / (1 - beta_i); summing
    # their log1p terms (compensated) keeps the margin at the boundary near machine precision
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(lo_f > 0, b * eta / (1.0 - b), np.nan)
        lower_margin = log_nu - _suffix_sums(np.log1p(r))
        upper_margin = log_nu + _suffix_sums(np.log1p(-r))
    reason = ""
    if np.any(lo_f <= 0):
        t = int(np.nonzero(lo_f <= 0)[0][-1]) + 1
        reason = f"factor 1 - beta_t (eta + 1) <= 0 at t = {t}"
        upper_margin = np.where(np.isnan(upper_margin), -np.inf, upper_margin)
        lower_margin = np.where(np.isnan(lower_margin), -np.inf, lower_margin)
    ok = bool(np.all(lower_margin >= -tol) and np.all(upper_margin >= -tol)) and not reason
    if not ok and not reason:
        t = int(np.nonzero((lower_margin < -tol) | (upper_margin < -tol))[0][-1]) + 1
        side = "upper" if upper_margin[t - 1] < -tol else "lower"
        reason = f"{side} inequality violated at t = {t}"
    return AdmissibilityReport(ok, lower_margin, upper_margin, reason)
