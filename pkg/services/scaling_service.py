"""
Diffusion-scaled views of a physical path: time compressed by r^2, space by r,
queue length additionally multiplied by c^r.
"""

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from models.dist import ProcTimeDist
from models.paths import RawPath, RegionMasses, ScaledPath, ScaledThresholdSeries
from models.system import SystemConfig, Thresholds
from services import dist_service

logger = logging.getLogger(__name__)

GRID_TOLERANCE = 1e-12


def _scale_series(raw: RawPath, x: float, cfg: SystemConfig, dist: ProcTimeDist) -> ScaledThresholdSeries:
    ser = raw.series(x)
    r, c = cfg.r, cfg.c_r
    rho_x = cfg.lambda_r * dist_service.truncated_first_moment(dist, x)
    return ScaledThresholdSeries(
        x=x,
        rho_x=rho_x,
        count=ser.count_in,
        count_tilde=(c * ser.count_in) / r,
        work_hat=ser.work_in / r,
        weighted_tilde=(c * ser.weighted_in) / r,
        vhat=(ser.vx - rho_x * raw.times) / r,
        vhat_tau_minus=(ser.vx_tau_minus - rho_x * ser.tau) / r,
        theta=(raw.times - ser.tau) / cfg.physical_scale,
        arrivals_since_tau_tilde=(c * (raw.e - ser.e_tau_minus)) / r,
        work_hat_initial=ser.work_initial / r,
        count_tilde_initial=(c * ser.count_initial) / r,
    )


def scale_path(raw: RawPath, cfg: SystemConfig, th: Thresholds, dist: ProcTimeDist,
               grid: Optional[np.ndarray] = None) -> ScaledPath:
    """
    Build the scaled processes from a physical path observed at r^2 * grid.
    Every threshold tracked in raw is scaled; l and u must be among them.
    """
    r, c = cfg.r, cfg.c_r
    if grid is None:
        times = raw.times / cfg.physical_scale
    else:
        times = np.asarray(grid, dtype=float)
        expected = cfg.physical_scale * times
        if times.shape != raw.times.shape or np.any(
                np.abs(raw.times - expected) > GRID_TOLERANCE * np.maximum(1.0, np.abs(expected))):
            raise ValueError(f"scale_path: raw grid does not equal r^2 * grid at r={r:g}")
    for x in (th.l, th.u):
        if x not in raw.thresholds:
            raise ValueError(f"scale_path: threshold {x!r} is not tracked in the raw path")

    q = raw.q
    return ScaledPath(
        r=r,
        c_r=c,
        times=times,
        q=q,
        qhat=q / r,
        what=raw.w / r,
        qtilde=(c * q) / r,
        qweibull=(dist_service.weibull_scale(dist, r) * q) / r,
        ehat=(raw.e - cfg.lambda_r * raw.times) / r,
        l=th.l,
        u=th.u,
        epsilon=th.epsilon,
        thresholds={x: _scale_series(raw, x, cfg, dist) for x in raw.thresholds},
    )


def region_masses(sp: ScaledPath, t: float) -> RegionMasses:
    """Counts and works of [0, l], (l, u] and (u, inf) at grid time t."""
    i = sp.grid_index(t)
    lo, hi = sp.series(sp.l), sp.series(sp.u)
    c, r = sp.c_r, sp.r
    n_lo, n_u, n = int(lo.count[i]), int(hi.count[i]), int(sp.q[i])
    return RegionMasses(
        count_lo_tilde=float(lo.count_tilde[i]),
        weighted_lo_tilde=float(lo.weighted_tilde[i]),
        work_lo_tilde=float(c * lo.work_hat[i]),
        count_mid_tilde=(c * (n_u - n_lo)) / r,
        work_mid_hat=max(0.0, float(hi.work_hat[i] - lo.work_hat[i])),
        count_hi_tilde=(c * (n - n_u)) / r,
        work_hi_hat=max(0.0, float(sp.what[i] - hi.work_hat[i])),
    )


def squeeze_check(sp: ScaledPath, t: float) -> Tuple[float, float, float]:
    """(c/u * work_mid, count_mid, c/l * work_mid); lhs <= mid <= rhs on every path."""
    if sp.l <= 0:
        raise ValueError(f"squeeze_check: l = 0 at r={sp.r:g}, unavailable")
    m = region_masses(sp, t)
    return sp.c_r / sp.u * m.work_mid_hat, m.count_mid_tilde, sp.c_r / sp.l * m.work_mid_hat


def gap_statistic(sp: ScaledPath, which: str = "qtilde") -> float:
    """sup over the grid of |Qtilde - What| (or the Weibull restatement with which='qweibull')."""
    if which not in ("qtilde", "qweibull"):
        raise ValueError(f"gap_statistic: unknown column {which!r}")
    col = getattr(sp, which)
    if col.size == 0:
        return 0.0
    return float(np.max(np.abs(col - sp.what)))


def rep_work_below_x2_check(sp: ScaledPath, t: float, x: float) -> float:
    """
    Slack of the scaled bound
        work_hat(t) <= work_hat(0) + Vhat(t) - Vhat(tau-) + (rho_x - 1) r theta(t) + x/r.
    Nonnegative (up to rounding) on every SRPT path.
    """
    ser = sp.series(x)
    i = sp.grid_index(t)
    bound = (ser.work_hat_initial + (ser.vhat[i] - ser.vhat_tau_minus[i])
             + (ser.rho_x - 1.0) * sp.r * ser.theta[i] + x / sp.r)
    return float(bound - ser.work_hat[i])


def queue_rep_check(sp: ScaledPath, t: float, x: float) -> float:
    """Slack of count_tilde(t) <= count_tilde(0) + c (E(t) - E(tau-))/r + c/r."""
    ser = sp.series(x)
    i = sp.grid_index(t)
    bound = ser.count_tilde_initial + ser.arrivals_since_tau_tilde[i] + sp.c_r / sp.r
    return float(bound - ser.count_tilde[i])


def path_table(sp: ScaledPath, fixed_x: Optional[float] = None) -> Dict[str, np.ndarray]:
    """Wide per-grid-point columns for CSV output."""
    lo = sp.series(sp.l)
    n = len(sp.times)
    masses = [region_masses(sp, t) for t in sp.times]
    table = {
        "t": sp.times,
        "qhat": sp.qhat,
        "what": sp.what,
        "qtilde": sp.qtilde,
        "qweibull": sp.qweibull,
        "ehat": sp.ehat,
        "vhat_l": lo.vhat,
        "work_lo_tilde": np.array([m.work_lo_tilde for m in masses]),
        "count_lo_tilde": lo.count_tilde,
        "work_hi_hat": np.array([m.work_hi_hat for m in masses]),
        "theta_l": lo.theta,
    }
    if fixed_x is not None:
        table["theta_x"] = sp.series(fixed_x).theta
    else:
        table["theta_x"] = np.full(n, np.nan)
    return table


def sup_over_grid(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    return float(np.max(arr)) if arr.size else 0.0
