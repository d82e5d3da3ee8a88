"""
PDE-residual weight schedule.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class PinoSchedule:
    """λ(s): linear ramp from 0 over ``ramp_fraction`` of training, then flat at ``max_weight``."""
    max_weight: float
    total_steps: int
    ramp_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.max_weight < 0:
            raise ValueError(f"max_weight must be >= 0, got {self.max_weight}")
        if not 0.0 <= self.ramp_fraction <= 1.0:
            raise ValueError(f"ramp_fraction must be in [0, 1], got {self.ramp_fraction}")

    @property
    def ramp_steps(self) -> float:
        return self.ramp_fraction * self.total_steps

    def weight(self, step: int) -> float:
        if self.max_weight == 0.0:
            return 0.0
        if self.ramp_steps <= 0:
            return self.max_weight if step > 0 else 0.0
        return self.max_weight * min(1.0, max(0, step) / self.ramp_steps)

    def __call__(self, step: int) -> float:
        return self.weight(step)
