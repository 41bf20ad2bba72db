"""
Reflected Brownian motion: the common heavy-traffic limit of Qtilde and What.
"""

import logging
import math
from typing import Tuple

import numpy as np
from scipy import stats

from models.paths import GridPath
from models.rbm import RbmParams
from models.system import HeavyTrafficParams
from services import dist_service
from services.htseq_service import interarrival_std_limit

logger = logging.getLogger(__name__)


def reflect(path, w0: float) -> np.ndarray:
    """One-dimensional Skorokhod map: w0 + path plus the minimal nondecreasing regulator keeping it >= 0."""
    if w0 < 0:
        raise ValueError(f"reflect: w0 must be nonnegative, got {w0}")
    x = np.asarray(path, dtype=float)
    regulator = np.maximum.accumulate(np.maximum(0.0, -w0 - x))
    return np.maximum(w0 + x + regulator, 0.0)


def _grid(p: RbmParams, horizon: float) -> Tuple[np.ndarray, int]:
    if horizon <= 0:
        raise ValueError(f"simulate_rbm: horizon must be positive, got {horizon}")
    n = max(1, int(round(horizon / p.step)))
    return np.linspace(0.0, horizon, n + 1), n


def _bridge_minimum(dx: np.ndarray, variance: float, h: float, u: np.ndarray) -> np.ndarray:
    # minimum of a Brownian bridge from 0 to dx over a cell of length h
    return 0.5 * (dx - np.sqrt(dx * dx - 2.0 * variance * h * np.log(u)))


def simulate_rbm(p: RbmParams, horizon: float, seed: int) -> GridPath:
    times, n = _grid(p, horizon)
    h = horizon / n
    rng = np.random.default_rng(seed)
    dx = p.drift * h + math.sqrt(p.variance * h) * rng.standard_normal(n)

    if p.scheme == "euler":
        values = reflect(np.concatenate(([0.0], np.cumsum(dx))), p.w0)
    else:
        u = 1.0 - rng.random(n)
        m = _bridge_minimum(dx, p.variance, h, u)
        values = np.empty(n + 1)
        values[0] = w = p.w0
        for k in range(n):
            w = w + dx[k] + max(0.0, -(w + m[k]))
            values[k + 1] = w
    return GridPath(times=times, values=values)


def simulate_rbm_terminal(p: RbmParams, horizon: float, n: int, seed: int) -> np.ndarray:
    """W*(horizon) for n independent paths, advanced cell by cell across all paths at once."""
    if n < 1:
        raise ValueError(f"simulate_rbm_terminal: n must be positive, got {n}")
    _, steps = _grid(p, horizon)
    h = horizon / steps
    sd = math.sqrt(p.variance * h)
    rng = np.random.default_rng(seed)
    w = np.full(n, p.w0, dtype=float)
    for _ in range(steps):
        dx = p.drift * h + sd * rng.standard_normal(n)
        if p.scheme == "euler":
            w = np.maximum(w + dx, 0.0)
        else:
            m = _bridge_minimum(dx, p.variance, h, 1.0 - rng.random(n))
            w = w + dx + np.maximum(0.0, -(w + m))
    logger.debug(f"[RBM] {n} paths to t={horizon:g} ({p.scheme}, {steps} steps)")
    return w


def marginal_cdf(p: RbmParams, t: float, w: float) -> float:
    """P(W*(t) <= w) for RBM started at 0."""
    if p.w0 != 0:
        raise ValueError("marginal_cdf: only w0 = 0 is supported")
    if t <= 0:
        raise ValueError(f"marginal_cdf: t must be positive, got {t}")
    if w < 0:
        return 0.0
    sigma = math.sqrt(p.variance)
    scale = sigma * math.sqrt(t)
    k = p.drift
    first = stats.norm.cdf((w - k * t) / scale)
    # exp(2 k w / sigma^2) * Phi(.) evaluated in log space
    second = math.exp(2.0 * k * w / p.variance + stats.norm.logcdf((-w - k * t) / scale))
    return float(min(1.0, max(0.0, first - second)))


def system_variance(p: HeavyTrafficParams) -> Tuple[float, float]:
    """(lambda (sigma_a^2 + sigma_s^2), lambda^3 sigma_a^2) with lambda = 1/E[v]."""
    lam = 1.0 / dist_service.mean(p.dist)
    sigma_a = interarrival_std_limit(p)
    sigma_s2 = dist_service.variance(p.dist)
    return lam * (sigma_a * sigma_a + sigma_s2), lam ** 3 * sigma_a * sigma_a


def rbm_params(p: HeavyTrafficParams, step: float = 1e-3, scheme: str = "euler") -> RbmParams:
    variance, _ = system_variance(p)
    return RbmParams(drift=p.kappa, variance=variance, w0=p.w0, step=step, scheme=scheme)
