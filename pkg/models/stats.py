from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


@dataclass
class ReplicationSummary:
    """Sup-over-grid and terminal statistics of one scaled replication."""
    replication: int
    gap: float
    gap_weibull: float
    terminal_qtilde: float
    terminal_what: float
    terminal_qweibull: float
    sup_below_l: Dict[float, Optional[float]] = field(default_factory=dict)   # eps -> sup <(1 v chi)1_[0,l], Ztilde>
    sup_above_u: Dict[float, Optional[float]] = field(default_factory=dict)   # eps -> sup <chi 1_(u,inf), Zhat>
    sup_theta_eps: Dict[float, Optional[float]] = field(default_factory=dict) # eps -> (c^r)^(2+eps) sup theta(., l)
    sup_theta_x: Dict[float, float] = field(default_factory=dict)             # x -> c^r r sup theta(., x)
    sup_near_origin: Dict[float, float] = field(default_factory=dict)         # x -> sup <1_[0,x], Ztilde>


@dataclass
class ReplicationEnsemble:
    r: float
    signature: Tuple  # (kappa, dist, interarrival, horizon): must agree across a trend
    summaries: List[ReplicationSummary] = field(default_factory=list)
    c_r: float = 0.0
    rbm_variance: Optional[float] = None
    w0: float = 0.0
    kappa: float = 0.0
    horizon: float = 1.0

    @property
    def n(self) -> int:
        return len(self.summaries)


class TrendReport(BaseModel):
    statistic: str
    r: List[float]
    median: List[Optional[float]]
    mean: List[Optional[float]] = Field(default_factory=list)
    monotone_decreasing: Optional[bool]
    margin: float = Field(ge=0)
    final_value: Optional[float] = None
    unavailable: List[float] = Field(default_factory=list)
    ks_terminal: List[Optional[float]] = Field(default_factory=list)
    ks_terminal_simulated: List[Optional[float]] = Field(default_factory=list)
