"""
Trend and goodness-of-fit machinery: "=> 0" statements become medians that
must shrink across r, limit laws become KS distances.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from backend.utils.seeding import ARRIVAL_STREAM, SIZE_STREAM, derive_seed
from models.paths import ScaledPath
from models.rbm import RbmParams
from models.stats import ReplicationEnsemble, ReplicationSummary, TrendReport
from models.system import HeavyTrafficParams, SystemConfig, Thresholds
from services import dist_service, rbm_service, scaling_service
from services.htseq_service import arrival_stream

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.05


def ks_two_sample(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample: both samples must be nonempty")
    return float(stats.ks_2samp(a, b).statistic)


def ks_vs_cdf(samples, cdf: Callable[[float], float]) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("ks_vs_cdf: samples must be nonempty")
    vectorized = np.vectorize(cdf, otypes=[float])
    return float(stats.kstest(samples, vectorized).statistic)


def summarize(sp: ScaledPath, replication: int, thresholds: Dict[float, Thresholds],
              fixed_x: Sequence[float] = ()) -> ReplicationSummary:
    """Reduce one scaled replication to the sup-over-grid statistics the trends consume."""
    c, r = sp.c_r, sp.r
    summary = ReplicationSummary(
        replication=replication,
        gap=scaling_service.gap_statistic(sp),
        gap_weibull=scaling_service.gap_statistic(sp, which="qweibull"),
        terminal_qtilde=float(sp.qtilde[-1]),
        terminal_what=float(sp.what[-1]),
        terminal_qweibull=float(sp.qweibull[-1]),
    )
    for eps, th in thresholds.items():
        hi = sp.series(th.u)
        summary.sup_above_u[eps] = scaling_service.sup_over_grid(np.maximum(sp.what - hi.work_hat, 0.0))
        if not th.available:
            summary.sup_below_l[eps] = None
            summary.sup_theta_eps[eps] = None
            continue
        lo = sp.series(th.l)
        summary.sup_below_l[eps] = scaling_service.sup_over_grid(lo.weighted_tilde)
        summary.sup_theta_eps[eps] = c ** (2.0 + eps) * scaling_service.sup_over_grid(lo.theta)
    for x in fixed_x:
        ser = sp.series(x)
        summary.sup_theta_x[x] = c * r * scaling_service.sup_over_grid(ser.theta)
        summary.sup_near_origin[x] = scaling_service.sup_over_grid(ser.count_tilde)
    return summary


def _check_ensembles(ensembles: Sequence[ReplicationEnsemble]) -> None:
    if not ensembles:
        raise ValueError("trend: no ensembles supplied")
    rs = [e.r for e in ensembles]
    if any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError(f"trend: r values not increasing: {rs}")
    if len({e.signature for e in ensembles}) != 1:
        raise ValueError("trend: ensembles disagree on kappa, dist, interarrival or horizon")
    if len(ensembles) < 3:
        logger.warning(f"[Stats] trend over {len(ensembles)} r-values; at least 3 are needed for a meaningful ordering")


def monotone_decreasing(medians: Sequence[Optional[float]], margin: float) -> Optional[bool]:
    """Each available median <= previous available median * (1 - margin).

    None when fewer than two medians are available: there is nothing to order.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    available = [m for m in medians if m is not None]
    if len(available) < 2:
        return None
    return all(b <= a * (1.0 - margin) for a, b in zip(available, available[1:]))


def _trend(statistic: str, ensembles: Sequence[ReplicationEnsemble],
           extract: Callable[[ReplicationSummary], Optional[float]], margin: float) -> TrendReport:
    _check_ensembles(ensembles)
    medians: List[Optional[float]] = []
    means: List[Optional[float]] = []
    unavailable: List[float] = []
    for ens in ensembles:
        values = [v for v in (extract(s) for s in ens.summaries) if v is not None]
        if not values:
            medians.append(None)
            means.append(None)
            unavailable.append(ens.r)
            logger.warning(f"[Stats] {statistic} unavailable at r={ens.r:g}")
            continue
        ordered = np.sort(np.asarray(values, dtype=float))
        medians.append(float(np.median(ordered)))
        means.append(math.fsum(ordered) / ordered.size)
    available = [m for m in medians if m is not None]
    return TrendReport(
        statistic=statistic,
        r=[e.r for e in ensembles],
        median=medians,
        mean=means,
        monotone_decreasing=monotone_decreasing(medians, margin),
        margin=margin,
        final_value=available[-1] if available else None,
        unavailable=unavailable,
    )


def _terminal_ks(ens: ReplicationEnsemble) -> Optional[float]:
    if ens.w0 != 0 or ens.rbm_variance is None or not ens.summaries:
        return None
    p = RbmParams(drift=ens.kappa, variance=ens.rbm_variance, w0=0.0)
    return ks_vs_cdf([s.terminal_qtilde for s in ens.summaries],
                     lambda w: rbm_service.marginal_cdf(p, ens.horizon, w))


def theorem_trend(ensembles: Sequence[ReplicationEnsemble], margin: float = DEFAULT_MARGIN,
                  which: str = "qtilde", rbm_terminal: Optional[Sequence[float]] = None) -> TrendReport:
    """
    Median sup |Qtilde - What| across r, plus the per-r KS of Qtilde(T) against the RBM marginal.

    rbm_terminal, when given, holds simulated W*(T) values; each r then also gets the
    two-sample KS of Qtilde(T) against them, which works for any w0.
    """
    if which == "qtilde":
        report = _trend("gap", ensembles, lambda s: s.gap, margin)
    elif which == "qweibull":
        report = _trend("gap_weibull", ensembles, lambda s: s.gap_weibull, margin)
    else:
        raise ValueError(f"theorem_trend: unknown column {which!r}")
    report.ks_terminal = [_terminal_ks(e) for e in ensembles]
    if rbm_terminal is not None:
        report.ks_terminal_simulated = [
            ks_two_sample([s.terminal_qtilde for s in e.summaries], rbm_terminal) if e.summaries else None
            for e in ensembles
        ]
    return report


def _require_key(ensembles: Sequence[ReplicationEnsemble], field: str, key: float) -> None:
    for ens in ensembles:
        for s in ens.summaries:
            if key not in getattr(s, field):
                raise ValueError(f"{key!r} is not tracked ({field}) at r={ens.r:g}")


def lemma_theta_trend(ensembles: Sequence[ReplicationEnsemble], mode: str, value: float,
                      margin: float = 0.0) -> TrendReport:
    """
    mode="fixed_x": median sup c^r r theta(., x); mode="eps": median sup (c^r)^(2+eps) theta(., l_eps).
    """
    if mode == "fixed_x":
        _require_key(ensembles, "sup_theta_x", value)
        return _trend(f"theta_x={value:g}", ensembles, lambda s: s.sup_theta_x[value], margin)
    if mode == "eps":
        _require_key(ensembles, "sup_theta_eps", value)
        return _trend(f"theta_eps={value:g}", ensembles, lambda s: s.sup_theta_eps[value], margin)
    raise ValueError(f"lemma_theta_trend: unknown mode {mode!r}")


def region_mass_trend(ensembles: Sequence[ReplicationEnsemble], region: str, value: float,
                      margin: float = 0.0) -> TrendReport:
    """region: below_l and above_u take eps, near_origin takes a fixed x."""
    fields = {"below_l": "sup_below_l", "above_u": "sup_above_u", "near_origin": "sup_near_origin"}
    if region not in fields:
        raise ValueError(f"region_mass_trend: unknown region {region!r}")
    field = fields[region]
    _require_key(ensembles, field, value)
    return _trend(f"{region}={value:g}", ensembles, lambda s: getattr(s, field)[value], margin)


def _replication_streams(p: HeavyTrafficParams, cfg: SystemConfig, t: float, seed: int, i: int):
    return arrival_stream(p, cfg, cfg.physical_scale * t,
                          derive_seed(seed, i, ARRIVAL_STREAM), derive_seed(seed, i, SIZE_STREAM))


def fclt_variance_check(p: HeavyTrafficParams, cfg: SystemConfig, x: float, t: float, n: int,
                        seed: int) -> Tuple[float, float]:
    """
    Sample variance of Vhat_x(t) over n replications, and the Brownian prediction
    t (lambda Var(v 1{v<=x}) + E[v 1{v<=x}]^2 lambda^3 sigma_a^2).
    """
    if n < 2:
        raise ValueError(f"fclt_variance_check: n must be at least 2, got {n}")
    d = p.dist
    lam = cfg.lambda_r
    m1 = dist_service.truncated_first_moment(d, x)
    m2 = dist_service.truncated_second_moment(d, x)
    rho_x = lam * m1
    horizon = cfg.physical_scale * t
    samples = np.empty(n)
    for i in range(n):
        _, sizes = _replication_streams(p, cfg, t, seed, i)
        vx = math.fsum(sizes[sizes <= x])
        samples[i] = (vx - rho_x * horizon) / cfg.r
    predicted = t * (lam * (m2 - m1 * m1) + m1 * m1 * lam ** 3 * cfg.sigma_a_r ** 2)
    sample_var = float(np.var(samples, ddof=1))
    logger.info(f"[Stats] Vhat_{x:g}({t:g}) variance {sample_var:.6g} vs predicted {predicted:.6g} (n={n})")
    return sample_var, float(predicted)


def arrival_fclt_check(p: HeavyTrafficParams, cfg: SystemConfig, t: float, n: int,
                       seed: int) -> Tuple[float, float]:
    """Sample variance of Ehat(t) against lambda^3 sigma_a^2 t."""
    if n < 2:
        raise ValueError(f"arrival_fclt_check: n must be at least 2, got {n}")
    lam = cfg.lambda_r
    horizon = cfg.physical_scale * t
    samples = np.empty(n)
    for i in range(n):
        times, _ = _replication_streams(p, cfg, t, seed, i)
        samples[i] = (times.size - lam * horizon) / cfg.r
    predicted = lam ** 3 * cfg.sigma_a_r ** 2 * t
    sample_var = float(np.var(samples, ddof=1))
    logger.info(f"[Stats] Ehat({t:g}) variance {sample_var:.6g} vs predicted {predicted:.6g} (n={n})")
    return sample_var, float(predicted)
