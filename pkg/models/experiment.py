from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .dist import ProcTimeDist
from .system import HeavyTrafficParams, InterarrivalSpec


class HeavyTrafficSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: float = 0.0
    w0: float = Field(0.0, ge=0)
    interarrival: InterarrivalSpec = InterarrivalSpec()
    r_values: List[float]

    @field_validator("r_values")
    @classmethod
    def _increasing(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("r_values must not be empty")
        if any(r <= 1 for r in values):
            raise ValueError("r_values must all exceed 1")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("r_values not increasing")
        return values


class ExperimentConfig(BaseModel):
    """Schema of an experiment JSON file. Validated before any simulation starts."""
    model_config = ConfigDict(frozen=True)

    dist: ProcTimeDist = ProcTimeDist()
    heavy_traffic: HeavyTrafficSpec
    epsilon: List[float] = Field(default_factory=lambda: [1.0])
    fixed_x: List[float] = Field(default_factory=lambda: [1.0])
    grid_step: float = Field(0.01, gt=0)
    horizon: float = Field(1.0, gt=0)
    replications: int = Field(300, ge=1)
    base_seed: int = Field(0, ge=0)
    output_dir: str = "out"
    pipeline: Literal["theorem", "pathwise", "fclt"] = "theorem"
    trend_margin: float = Field(0.05, ge=0)
    rbm_step: float = Field(1e-3, gt=0)
    rbm_paths: int = Field(10000, ge=1)
    fclt_x: float = Field(1.0, ge=0)
    event_log: bool = False

    @field_validator("epsilon")
    @classmethod
    def _positive_eps(cls, values: List[float]) -> List[float]:
        if any(e <= 0 for e in values):
            raise ValueError("epsilon values must be positive")
        return values

    @field_validator("fixed_x")
    @classmethod
    def _nonneg_x(cls, values: List[float]) -> List[float]:
        if any(x < 0 for x in values):
            raise ValueError("fixed_x values must be nonnegative")
        return values

    @model_validator(mode="after")
    def _grid_divides_horizon(self):
        steps = self.horizon / self.grid_step
        if abs(steps - round(steps)) * self.grid_step > 1e-12:
            raise ValueError(f"grid_step {self.grid_step} does not divide horizon {self.horizon}")
        return self

    @property
    def params(self) -> HeavyTrafficParams:
        ht = self.heavy_traffic
        return HeavyTrafficParams(kappa=ht.kappa, interarrival=ht.interarrival, dist=self.dist, w0=ht.w0)

    def scaled_grid(self) -> np.ndarray:
        steps = int(round(self.horizon / self.grid_step))
        return np.linspace(0.0, self.horizon, steps + 1)
