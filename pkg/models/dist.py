from typing import Literal
from pydantic import BaseModel, ConfigDict, Field


class ProcTimeDist(BaseModel):
    """Weibull processing-time law, tail exp(-(beta*x)**alpha). Exponential is alpha == 1."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["weibull"] = "weibull"
    alpha: float = Field(1.0, gt=0) # shape
    beta: float = Field(1.0, gt=0)  # rate, 1/time

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "ProcTimeDist":
        return cls(alpha=1.0, beta=rate)

    def label(self) -> str:
        if self.alpha == 1.0:
            return f"Exp({self.beta:g})"
        return f"Weibull(alpha={self.alpha:g}, beta={self.beta:g})"
