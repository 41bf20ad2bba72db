import math
from typing import Literal
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dist import ProcTimeDist


class InterarrivalSpec(BaseModel):
    """Renewal interarrival family, scaled so the mean is 1/lambda^r."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["exponential", "erlang", "hyperexponential"] = "exponential"
    k: int = Field(1, ge=1)      # Erlang stages
    cv: float = Field(1.0, ge=1) # Hyperexponential target coefficient of variation

    @property
    def coefficient_of_variation(self) -> float:
        if self.kind == "erlang":
            return 1.0 / math.sqrt(self.k)
        if self.kind == "hyperexponential":
            return self.cv
        return 1.0

    @property
    def variates_per_draw(self) -> int:
        if self.kind == "erlang":
            return self.k
        if self.kind == "hyperexponential":
            return 2
        return 1

    def hyperexponential_phases(self):
        """Balanced-means two-phase fit: (p, relative rate 1, relative rate 2)."""
        c2 = self.cv * self.cv
        p = 0.5 * (1.0 + math.sqrt((c2 - 1.0) / (c2 + 1.0)))
        return p, 2.0 * p, 2.0 * (1.0 - p)


class HeavyTrafficParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: float = 0.0                  # limiting drift r(rho^r - 1)
    interarrival: InterarrivalSpec = InterarrivalSpec()
    dist: ProcTimeDist = ProcTimeDist()
    w0: float = Field(0.0, ge=0)         # scaled initial workload


class SystemConfig(BaseModel):
    """One member of the r-indexed heavy-traffic sequence."""
    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=1)
    kappa: float
    mean_size: float
    lambda_r: float
    rho_r: float
    excess_load: float # rho^r - 1, kept separately so r * excess_load == kappa to rounding
    c_r: float = Field(ge=0)
    sigma_a_r: float = Field(gt=0)

    @property
    def physical_scale(self) -> float:
        return self.r * self.r


class Thresholds(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0)
    l: float = Field(ge=0)
    u: float = Field(ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.l > self.u:
            raise ValueError(f"lower threshold {self.l} exceeds upper threshold {self.u}")
        return self

    @property
    def available(self) -> bool:
        return self.l > 0
