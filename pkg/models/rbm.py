from typing import Literal
from pydantic import BaseModel, ConfigDict, Field


class RbmParams(BaseModel):
    """Reflected Brownian motion: drift kappa, variance lambda*(sigma_a^2 + sigma_s^2)."""
    model_config = ConfigDict(frozen=True)

    drift: float = 0.0
    variance: float = Field(1.0, gt=0) # per unit scaled time
    w0: float = Field(0.0, ge=0)
    step: float = Field(1e-3, gt=0)
    scheme: Literal["euler", "bridge"] = "euler"
