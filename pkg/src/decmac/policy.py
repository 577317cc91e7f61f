"""Per-user power-control policies sampled on the user's own fading grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fading import FadingGrid

# relative slack on the budget check
BUDGET_RTOL = 1e-6
MONOTONE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PowerPolicy:
    """Power ``powers[k]`` used when the user's gain is ``grid.gains[k]``.

    ``lam`` is the Lagrange multiplier of the user's average-power
    constraint. A user with a zero budget is *silent*: all powers are zero
    and ``lam`` is ``math.inf``.
    """

    grid: FadingGrid
    powers: np.ndarray
    lam: float = math.nan
    p_avg: float = math.inf
    silent: bool = False

    def __post_init__(self):
        powers = np.array(self.powers, dtype=np.float64)
        if powers.ndim != 1 or powers.shape[0] != self.grid.size:
            raise ValueError(
                f"policy has {powers.size} powers but its grid has {self.grid.size} atoms"
            )
        if not np.all(np.isfinite(powers)) or np.any(powers < 0):
            raise ValueError("powers must be finite and nonnegative")
        if self.p_avg < 0:
            raise ValueError(f"budget must be nonnegative, got {self.p_avg}")
        avg = float(self.grid.probs @ powers)
        if avg > self.p_avg * (1.0 + BUDGET_RTOL) + 1e-12:
            raise ValueError(f"average power {avg:.12g} exceeds budget {self.p_avg:.12g}")
        powers.setflags(write=False)
        object.__setattr__(self, "powers", powers)

    @classmethod
    def constant(cls, grid: FadingGrid, p_avg: float) -> "PowerPolicy":
        return cls(grid, np.full(grid.size, float(p_avg)), p_avg=float(p_avg))

    @classmethod
    def zero(cls, grid: FadingGrid) -> "PowerPolicy":
        return cls(grid, np.zeros(grid.size), lam=math.inf, p_avg=0.0, silent=True)

    @classmethod
    def two_level(cls, grid: FadingGrid, p_avg: float) -> "PowerPolicy":
        """Zero below the median gain, constant above, spending the whole budget."""
        cdf_before = np.cumsum(grid.probs) - grid.probs
        on = cdf_before >= 0.5 - 1e-12
        if not np.any(on):
            on[-1] = True
        level = p_avg / grid.probs[on].sum()
        return cls(grid, np.where(on, level, 0.0), p_avg=float(p_avg))

    @property
    def terms(self) -> np.ndarray:
        """Received powers ``v_k * P(v_k)``."""
        return self.grid.gains * self.powers

    def replace(self, **changes) -> "PowerPolicy":
        fields = dict(grid=self.grid, powers=self.powers, lam=self.lam,
                      p_avg=self.p_avg, silent=self.silent)
        fields.update(changes)
        return PowerPolicy(**fields)


def average_power(policy: PowerPolicy) -> float:
    if policy.powers.shape[0] != policy.grid.size:
        raise ValueError("policy and grid lengths differ")
    return float(policy.grid.probs @ policy.powers)


def check_monotone(policy) -> tuple[bool, int | None]:
    """Check that the positive part of a policy is nondecreasing in gain.

    Accepts a :class:`PowerPolicy` or a bare sequence of powers ordered by
    increasing gain. Returns ``(ok, index)`` where ``index`` is the first
    position whose power falls below the previous positive power.
    """
    powers = policy.powers if isinstance(policy, PowerPolicy) else np.asarray(policy, float)
    last = None
    for k, p in enumerate(powers):
        if p <= 0:
            continue
        if last is not None and p - last < -MONOTONE_TOL:
            return False, k
        last = p
    return True, None


def has_single_threshold(policy) -> bool:
    """True if the policy is zero up to some gain and positive after it."""
    powers = policy.powers if isinstance(policy, PowerPolicy) else np.asarray(policy, float)
    positive = powers > 0
    if not positive.any():
        return True
    first = int(np.argmax(positive))
    return bool(positive[first:].all())
