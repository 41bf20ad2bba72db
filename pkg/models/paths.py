from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional

import numpy as np


class DisciplineKind(str, Enum):
    SRPT = "srpt"
    FIFO = "fifo"


class EventRecord(NamedTuple):
    time: float
    kind: str            # arrival, completion, crossing, grid
    job_seq: int         # -1 for grid observations
    residual_after: float
    q: int
    w: float


@dataclass
class ThresholdSeries:
    """Grid samples of the region [0, x] of residual processing times (physical time)."""
    x: float
    count_in: np.ndarray
    work_in: np.ndarray
    weighted_in: np.ndarray   # sum of max(1, v) over residuals v <= x
    vx: np.ndarray            # cumulative truncated load V_x
    tau: np.ndarray           # last instant [0, x] was empty (t itself while empty)
    work_tau: np.ndarray      # work in [0, x] just after tau
    count_tau: np.ndarray
    vx_tau: np.ndarray
    vx_tau_minus: np.ndarray
    e_tau_minus: np.ndarray
    work_initial: float
    count_initial: int


@dataclass
class RawPath:
    discipline: DisciplineKind
    times: np.ndarray
    q: np.ndarray
    w: np.ndarray
    e: np.ndarray             # arrival count
    busy: np.ndarray          # cumulative busy time
    arrived_work: np.ndarray  # cumulative arrived work
    thresholds: Dict[float, ThresholdSeries] = field(default_factory=dict)
    events: Optional[List[EventRecord]] = None

    def series(self, x: float) -> ThresholdSeries:
        try:
            return self.thresholds[x]
        except KeyError:
            raise KeyError(f"threshold {x!r} is not tracked (tracked: {sorted(self.thresholds)})") from None

    def grid_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t))
        if idx >= len(self.times) or self.times[idx] != t:
            raise ValueError(f"time {t!r} is not a grid point")
        return idx

    @property
    def theta(self) -> Dict[float, np.ndarray]:
        return {x: self.times - s.tau for x, s in self.thresholds.items()}


@dataclass
class ScaledThresholdSeries:
    x: float
    rho_x: float
    count: np.ndarray           # raw count in [0,x]
    count_tilde: np.ndarray     # <1_[0,x], Ztilde>
    work_hat: np.ndarray        # <chi 1_[0,x], Zhat>
    weighted_tilde: np.ndarray  # <(1 v chi) 1_[0,x], Ztilde>
    vhat: np.ndarray
    vhat_tau_minus: np.ndarray
    theta: np.ndarray           # scaled time
    arrivals_since_tau_tilde: np.ndarray  # c^r (E(t) - E(tau-)) / r
    work_hat_initial: float
    count_tilde_initial: float


@dataclass
class ScaledPath:
    r: float
    c_r: float
    times: np.ndarray
    q: np.ndarray             # raw queue length
    qhat: np.ndarray
    what: np.ndarray
    qtilde: np.ndarray
    qweibull: np.ndarray
    ehat: np.ndarray
    l: float
    u: float
    epsilon: float
    thresholds: Dict[float, ScaledThresholdSeries] = field(default_factory=dict)

    def series(self, x: float) -> ScaledThresholdSeries:
        try:
            return self.thresholds[x]
        except KeyError:
            raise KeyError(f"threshold {x!r} is not tracked (tracked: {sorted(self.thresholds)})") from None

    def grid_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9:
            raise ValueError(f"time {t!r} is not a grid point")
        return idx


@dataclass
class RegionMasses:
    count_lo_tilde: float
    weighted_lo_tilde: float
    work_lo_tilde: float
    count_mid_tilde: float
    work_mid_hat: float
    count_hi_tilde: float
    work_hi_hat: float


@dataclass
class GridPath:
    times: np.ndarray
    values: np.ndarray
