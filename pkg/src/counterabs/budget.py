"""Resource budgets shared by the exploration engines."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass


class BudgetExceeded(RuntimeError):
    """Exploration stopped because a resource limit was hit.

    This is never a verdict: the property is neither proved nor refuted.
    """


@dataclass
class Budget:
    max_states: int = 1_000_000
    max_seconds: float = 60.0
    max_population: int = 8

    @classmethod
    def from_env(cls, **overrides) -> "Budget":
        """Defaults, overridden by COUNTERABS_MAX_STATES / _MAX_SECONDS /
        _MAX_POPULATION, then by explicit keyword arguments."""
        b = cls()
        env = os.environ
        if "COUNTERABS_MAX_STATES" in env:
            b.max_states = int(env["COUNTERABS_MAX_STATES"])
        if "COUNTERABS_MAX_SECONDS" in env:
            b.max_seconds = float(env["COUNTERABS_MAX_SECONDS"])
        if "COUNTERABS_MAX_POPULATION" in env:
            b.max_population = int(env["COUNTERABS_MAX_POPULATION"])
        for key, value in overrides.items():
            if value is not None:
                setattr(b, key, value)
        return b

    def meter(self) -> "Meter":
        return Meter(self)


class Meter:
    def __init__(self, budget: Budget):
        self.budget = budget
        self.start = time.perf_counter()

    @property
    def millis(self) -> int:
        return int((time.perf_counter() - self.start) * 1000)

    def check(self, states: int) -> None:
        if states > self.budget.max_states:
            raise BudgetExceeded(f"state budget of {self.budget.max_states} exceeded")
        if time.perf_counter() - self.start > self.budget.max_seconds:
            raise BudgetExceeded(f"time budget of {self.budget.max_seconds}s exceeded")
