"""
Processing-time laws and the reciprocal tail first moment S(x) = 1/E[v 1{v > x}].

Only the Weibull family ships (exponential is alpha == 1). Moments are
closed form through the regularized incomplete gamma functions.
"""

import logging
import math
import sys
from typing import Callable, Dict, Tuple, Union

import numpy as np
from scipy import optimize, special

from models.dist import ProcTimeDist

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MAX_BISECTION_ITERATIONS = 200
MAX_BRACKET_EXPONENT = 1000
# Below this Q(a, z) loses precision; ln Gamma(a, z) switches to its asymptotic series.
LOG_SPACE_FLOOR = 1e-280
MAX_LOG_FLOAT = math.log(sys.float_info.max)


class SInversionError(RuntimeError):
    """S^{-1} could not be bracketed or did not converge."""


def mean(d: ProcTimeDist) -> float:
    return special.gamma(1.0 + 1.0 / d.alpha) / d.beta


def second_moment(d: ProcTimeDist) -> float:
    return special.gamma(1.0 + 2.0 / d.alpha) / (d.beta * d.beta)


def variance(d: ProcTimeDist) -> float:
    m = mean(d)
    return second_moment(d) - m * m


def _z(d: ProcTimeDist, x: ArrayLike) -> ArrayLike:
    return np.power(d.beta * np.asarray(x, dtype=float), d.alpha)


def tail(d: ProcTimeDist, x: ArrayLike) -> ArrayLike:
    """P(v > x)."""
    out = np.exp(-_z(d, x))
    return float(out) if np.ndim(out) == 0 else out


def cdf(d: ProcTimeDist, x: ArrayLike) -> ArrayLike:
    out = -np.expm1(-_z(d, np.maximum(x, 0.0)))
    return float(out) if np.ndim(out) == 0 else out


def tail_first_moment(d: ProcTimeDist, x: ArrayLike) -> ArrayLike:
    """E[v 1{v > x}] = mean * Q(1 + 1/alpha, (beta x)^alpha)."""
    out = mean(d) * special.gammaincc(1.0 + 1.0 / d.alpha, _z(d, x))
    return float(out) if np.ndim(out) == 0 else out


def log_tail_first_moment(d: ProcTimeDist, x: float) -> float:
    """ln E[v 1{v > x}], finite well past the point where the moment underflows."""
    a = 1.0 + 1.0 / d.alpha
    z = float(_z(d, x))
    if not math.isfinite(z):
        return -math.inf
    q = special.gammaincc(a, z)
    if q > LOG_SPACE_FLOOR:
        return math.log(mean(d)) + math.log(q)
    # Gamma(a, z) ~ z^(a-1) e^(-z) sum_k (a-1)...(a-k) / z^k
    term = series = 1.0
    for k in range(1, 5):
        term *= (a - k) / z
        series += term
    return (a - 1.0) * math.log(z) - z + math.log(series) - math.log(d.beta)


def truncated_first_moment(d: ProcTimeDist, x: ArrayLike) -> ArrayLike:
    """E[v 1{v <= x}] = mean * P(1 + 1/alpha, (beta x)^alpha)."""
    out = mean(d) * special.gammainc(1.0 + 1.0 / d.alpha, _z(d, x))
    return float(out) if np.ndim(out) == 0 else out


def truncated_second_moment(d: ProcTimeDist, x: ArrayLike) -> ArrayLike:
    """E[v^2 1{v <= x}]."""
    out = second_moment(d) * special.gammainc(1.0 + 2.0 / d.alpha, _z(d, x))
    return float(out) if np.ndim(out) == 0 else out


def sample(d: ProcTimeDist, u: ArrayLike) -> ArrayLike:
    """Inverse-CDF transform of uniform variates u in (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("sample: uniform variates must lie strictly inside (0, 1)")
    out = np.power(-np.log1p(-u), 1.0 / d.alpha) / d.beta
    return float(out) if np.ndim(out) == 0 else out


def weibull_scale(d: ProcTimeDist, r: float) -> float:
    """(ln r)^{1/alpha} / beta, the explicit Weibull stand-in for S^{-1}(r)."""
    return math.log(r) ** (1.0 / d.alpha) / d.beta


class SFunction:
    """
    S(x) = 1/E[v 1{v > x}] and its generalized inverse inf{x >= 0: S(x) > y}.
    Bracket values S(2^k) are cached per instance.
    """

    def __init__(self, dist: ProcTimeDist, inversion_tolerance: float = 1e-10):
        self.dist = dist
        self.inversion_tolerance = inversion_tolerance
        self._log_s0 = -math.log(mean(dist))
        self._bracket_cache: Dict[int, float] = {}

    @property
    def s0(self) -> float:
        return 1.0 / mean(self.dist)

    def log_value(self, x: float) -> float:
        return -log_tail_first_moment(self.dist, x)

    def value(self, x: float) -> float:
        m = tail_first_moment(self.dist, x)
        if m > LOG_SPACE_FLOOR:
            return 1.0 / m
        lv = self.log_value(x)
        return math.inf if lv >= MAX_LOG_FLOAT else math.exp(lv)

    def _log_bracket(self, k: int) -> float:
        if k not in self._bracket_cache:
            self._bracket_cache[k] = self.log_value(math.ldexp(1.0, k))
        return self._bracket_cache[k]

    def _bracket(self, log_y: float) -> Tuple[float, float]:
        k = 0
        while self._log_bracket(k) <= log_y:
            k += 1
            if k > MAX_BRACKET_EXPONENT:
                raise SInversionError(f"could not bracket S^-1 at ln(y)={log_y}")
        if math.isinf(self._log_bracket(k)):
            raise SInversionError(f"ln S overflows at 2^{k} before reaching ln(y)={log_y}")
        lo = 0.0 if k == 0 else math.ldexp(1.0, k - 1)
        return lo, math.ldexp(1.0, k)

    def _crossing(self, log_y: float, reached: Callable[[float], bool]) -> float:
        lo, hi = self._bracket(log_y)
        xtol = 0.25 * self.inversion_tolerance
        rtol = 0.25 * self.inversion_tolerance
        try:
            root = optimize.bisect(
                lambda x: self.log_value(x) - log_y, lo, hi,
                xtol=xtol, rtol=rtol, maxiter=MAX_BISECTION_ITERATIONS,
            )
        except (RuntimeError, ValueError) as e:
            logger.error(f"[SInverse] bisection failed on [{lo}, {hi}] for ln(y)={log_y}: {e}")
            raise SInversionError(str(e)) from e

        # bisection lands within xtol + rtol*|root| of the crossing; step past it so S(x) >= y
        step = xtol + rtol * abs(root)
        x = min(root + step, hi)
        for _ in range(8):
            if reached(x):
                return x
            x = min(x + step, hi)
        return hi

    def inverse(self, y: float) -> float:
        if y <= 0:
            raise ValueError(f"s_inverse: y must be positive, got {y}")
        log_y = math.log(y)
        if log_y <= self._log_s0:
            return 0.0
        return self._crossing(log_y, lambda x: self.value(x) >= y)

    def inverse_log(self, log_y: float) -> float:
        """S^-1(e^log_y), for targets past the float range of y itself."""
        if math.isnan(log_y):
            raise ValueError("s_inverse: ln(y) is NaN")
        if log_y <= self._log_s0:
            return 0.0
        return self._crossing(log_y, lambda x: self.log_value(x) >= log_y)


def s_value(sf: SFunction, x: float) -> float:
    return sf.value(x)


def s_inverse(sf: SFunction, y: float) -> float:
    return sf.inverse(y)


def svrate_statistic(f: Callable[[float], float], c: float, y: float) -> float:
    """(f(c y)/f(y) - 1) ln f(y); tends to 0 under the slow-variation rate condition."""
    if c <= 1:
        raise ValueError(f"svrate_statistic: c must exceed 1, got {c}")
    fy = f(y)
    if fy <= 1:
        raise ValueError(f"svrate_statistic: f(y) must exceed 1, got {fy}")
    return (f(c * y) / fy - 1.0) * math.log(fy)


def rapid_variation_ratio(g: Callable[[float], float], eps: float, x: float) -> float:
    """g((1+eps) x)/g(x): diverges for index +inf, vanishes for index -inf."""
    return g((1.0 + eps) * x) / g(x)


def rate_ratio(sf: SFunction, delta: float, y: float) -> float:
    """S^{-1}((S^{-1}(y))^delta * y) / S^{-1}(y)."""
    c = sf.inverse(y)
    if c <= 0:
        raise ValueError(f"rate_ratio: S^-1({y}) is 0, ratio undefined")
    return sf.inverse(c ** delta * y) / c
