"""
The r-indexed heavy-traffic sequence: arrival rates, correction factor c^r,
thresholds l^r_eps < c^r < u^r_eps, arrival primitives and initial states.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from models.system import HeavyTrafficParams, InterarrivalSpec, SystemConfig, Thresholds
from services import dist_service
from services.dist_service import SFunction
from services.srpt_engine import JobSet

logger = logging.getLogger(__name__)

_TINY_UNIFORM = np.nextafter(0.0, 1.0)


def make_system(p: HeavyTrafficParams, r: float, sf: Optional[SFunction] = None) -> SystemConfig:
    """lambda^r = (1 + kappa/r)/E[v], so r(rho^r - 1) = kappa at every r."""
    if r <= 1:
        raise ValueError(f"make_system: r must exceed 1, got {r}")
    excess = p.kappa / r
    rho = 1.0 + excess
    if rho <= 0:
        raise ValueError(f"make_system: 1 + kappa/r = {rho} gives a nonpositive arrival rate")
    sf = sf or SFunction(p.dist)
    m = dist_service.mean(p.dist)
    lam = rho / m
    return SystemConfig(
        r=r,
        kappa=p.kappa,
        mean_size=m,
        lambda_r=lam,
        rho_r=rho,
        excess_load=excess,
        c_r=sf.inverse(r),
        sigma_a_r=p.interarrival.coefficient_of_variation / lam,
    )


def interarrival_std_limit(p: HeavyTrafficParams) -> float:
    """sigma_a, the limit of sigma_a^r (lambda^r -> 1/E[v])."""
    return p.interarrival.coefficient_of_variation * dist_service.mean(p.dist)


def thresholds(cfg: SystemConfig, sf: SFunction, eps: float) -> Thresholds:
    if eps <= 0:
        raise ValueError(f"thresholds: eps must be positive, got {eps}")
    if cfg.c_r <= 0:
        raise ValueError("thresholds: c^r is 0 at this r (r <= S(0))")
    power = 2.0 + eps
    l = sf.inverse(cfg.r * cfg.c_r ** (-power))
    u = sf.inverse(cfg.r * cfg.c_r ** power)
    if l == 0.0:
        logger.warning(f"[HTSeq] l collapses to 0 at r={cfg.r:g}, eps={eps:g}")
    return Thresholds(epsilon=eps, l=l, u=u)


def ratio_diagnostic(cfg: SystemConfig, sf: SFunction, eps: float) -> Optional[Tuple[float, float]]:
    """(c/l, c/u); None when l = 0 at this r."""
    th = thresholds(cfg, sf, eps)
    if th.l <= 0:
        return None
    return cfg.c_r / th.l, cfg.c_r / th.u


def interarrival_sampler(spec: InterarrivalSpec, cfg: SystemConfig, u) -> np.ndarray:
    """
    Transform uniforms into interarrival times with mean 1/lambda^r.
    The trailing axis of u carries spec.variates_per_draw variates (optional for exponential).
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("interarrival_sampler: uniform variates must lie strictly inside (0, 1)")
    lam = cfg.lambda_r
    if spec.kind == "exponential":
        out = -np.log1p(-u) / lam
        if out.ndim and spec.variates_per_draw == 1 and out.shape[-1:] == (1,):
            out = out[..., 0]
    elif spec.kind == "erlang":
        if u.shape[-1:] != (spec.k,):
            raise ValueError(f"interarrival_sampler: Erlang({spec.k}) needs {spec.k} variates per draw")
        out = -np.log1p(-u).sum(axis=-1) / (spec.k * lam)
    else:
        if u.shape[-1:] != (2,):
            raise ValueError("interarrival_sampler: hyperexponential needs 2 variates per draw")
        p, rel1, rel2 = spec.hyperexponential_phases()
        rate = np.where(u[..., 0] < p, rel1 * lam, rel2 * lam)
        out = -np.log1p(-u[..., 1]) / rate
    return float(out) if np.ndim(out) == 0 else out


def _uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    u[u == 0.0] = _TINY_UNIFORM
    return u


def arrival_stream(p: HeavyTrafficParams, cfg: SystemConfig, horizon: float,
                   arrival_seed: int, size_seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Arrival epochs in (0, horizon] and their processing times. E(0) = 0."""
    spec = p.interarrival
    rng = np.random.default_rng(arrival_seed)
    block = max(64, int(cfg.lambda_r * horizon * 1.1) + 64)
    chunks = []
    t = 0.0
    while t <= horizon:
        gaps = interarrival_sampler(spec, cfg, _uniforms(rng, (block, spec.variates_per_draw)))
        epochs = t + np.cumsum(gaps)
        chunks.append(epochs)
        t = float(epochs[-1])
    times = np.concatenate(chunks) if chunks else np.empty(0)
    times = times[times <= horizon]
    size_rng = np.random.default_rng(size_seed)
    sizes = dist_service.sample(p.dist, _uniforms(size_rng, times.shape[0])) if times.size else np.empty(0)
    return times, np.asarray(sizes, dtype=float).reshape(-1)


def initial_condition(p: HeavyTrafficParams, cfg: SystemConfig) -> JobSet:
    """floor(w0 r / c^r) jobs of size exactly c^r, so Qtilde(0) == What(0)."""
    jobs = JobSet()
    if p.w0 <= 0:
        return jobs
    if cfg.c_r <= 0:
        raise ValueError("initial_condition: w0 > 0 needs c^r > 0")
    n = int(math.floor(p.w0 * cfg.r / cfg.c_r))
    for _ in range(n):
        jobs.add(cfg.c_r)
    logger.debug(f"[HTSeq] initial condition: {n} jobs of size {cfg.c_r:.6g} at r={cfg.r:g}")
    return jobs
