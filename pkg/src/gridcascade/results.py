"""Cascade outcome records shared by the static and dynamic engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .grid import Line

SETTLED = "settled"
HORIZON_EXHAUSTED = "horizon-exhausted"
ISLANDED_UNBALANCED = "islanded-unbalanced"
OUTCOMES = (SETTLED, HORIZON_EXHAUSTED, ISLANDED_UNBALANCED)


@dataclass(frozen=True)
class Trip:
    line: Line
    time: float  # simulated seconds, or iteration index for static cascades
    reason: str = "overload"


@dataclass(eq=False)
class CascadeReport:
    """What happened after removing ``initial_fault``.

    ``n_c`` counts lines lost after (and excluding) the initial fault.
    """

    initial_fault: Line
    tripped: list[Trip]
    outcome: str
    final_angles: np.ndarray
    final_velocities: Optional[np.ndarray] = None
    final_time: float = 0.0
    settling_time: Optional[float] = None
    operating_lines: tuple[Line, ...] = ()
    islands: list[list[int]] = field(default_factory=list)
    trajectory: Any = None

    @property
    def n_c(self) -> int:
        return len(self.tripped)

    @property
    def tripped_lines(self) -> list[Line]:
        return [t.line for t in self.tripped]

    @property
    def first_trip(self) -> Optional[Line]:
        return self.tripped[0].line if self.tripped else None

    def signature(self) -> tuple:
        """Hashable summary used for bit-identity checks."""
        return (
            self.initial_fault,
            tuple((t.line, t.time, t.reason) for t in self.tripped),
            self.outcome,
            self.final_time,
            self.final_angles.tobytes(),
            None if self.final_velocities is None else self.final_velocities.tobytes(),
        )
