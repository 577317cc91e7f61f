"""Reference solutions for checking the alternating solver.

``waterfilling_single_user`` solves the one-user problem through its scalar
water-level equation and ``brute_force_discrete`` searches a power lattice
exhaustively on tiny discrete instances; neither touches the inversion or
multiplier code. ``constant_power_rate`` is the rate of the trivial
feasible policy, i.e. the solver's starting point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fading import FadingGrid
from .interference import DEFAULT_MAX_ATOMS
from .policy import PowerPolicy
from .solver import sum_rate

MAX_USERS = 3
MAX_ATOMS_PER_USER = 3
MAX_TOTAL_ATOMS = 8
MAX_LATTICE_ROWS = 20_000_000


def waterfilling_single_user(grid: FadingGrid, p_avg: float) -> tuple[PowerPolicy, float]:
    """Classical waterfilling ``P(v) = (1/lam - 1/v)+`` meeting ``E P = p_avg``.

    Returns the policy (carrying ``lam``) and its ergodic rate in nats.
    """
    if not p_avg >= 0:
        raise ValueError(f"budget must be nonnegative, got {p_avg}")
    gains, probs = grid.gains, grid.probs
    usable = gains > 0
    if p_avg == 0 or not usable.any():
        return PowerPolicy.zero(grid).replace(p_avg=float(p_avg)), 0.0

    def spent(lam):
        return float(probs[usable] @ np.maximum(1.0 / lam - 1.0 / gains[usable], 0.0))

    # at hi nothing is spent; at lo every usable atom gets at least p_avg / P(V > 0)
    hi = float(gains.max())
    lo = 1.0 / (p_avg / probs[usable].sum() + 1.0 / gains[usable].min())
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if spent(mid) > p_avg:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    # pick the end of the bracket whose spend is closest to the budget
    lam = min((lo, hi), key=lambda x: abs(spent(x) - p_avg))
    powers = np.zeros(grid.size)
    powers[usable] = np.maximum(1.0 / lam - 1.0 / gains[usable], 0.0)
    capacity = float(probs @ np.log1p(gains * powers))
    return PowerPolicy(grid, powers, lam=lam, p_avg=float(p_avg)), capacity


@dataclass(frozen=True)
class BruteForceSpec:
    grids: tuple[FadingGrid, ...]
    power_step: float = 0.01
    power_max: float = 2.0

    def __post_init__(self):
        grids = tuple(self.grids)
        object.__setattr__(self, "grids", grids)
        if not 1 <= len(grids) <= MAX_USERS:
            raise ValueError(f"brute force handles 1..{MAX_USERS} users, got {len(grids)}")
        if any(g.size > MAX_ATOMS_PER_USER for g in grids):
            raise ValueError(f"brute force handles at most {MAX_ATOMS_PER_USER} atoms per user")
        if sum(g.size for g in grids) > MAX_TOTAL_ATOMS:
            raise ValueError(f"brute force handles at most {MAX_TOTAL_ATOMS} atoms in total")
        if not (self.power_step > 0 and self.power_max > 0):
            raise ValueError("power_step and power_max must be positive")


def _frontier(grid: FadingGrid, budget: float, step: float, n_levels: int) -> np.ndarray:
    """All lattice power vectors that are feasible and cannot be raised.

    The rate grows in every power with a positive gain, so a vector where
    one such atom could go up a step without breaking the budget is never
    the unique best and is dropped. Zero-gain atoms stay at zero.
    """
    live = grid.gains > 0
    probs = grid.probs[live]
    slack = 1e-12 * max(1.0, budget)
    levels = np.arange(n_levels)
    # grow feasible vectors one atom at a time so the full cube is never built
    combos = np.zeros((1, 0), dtype=np.int64)
    spend = np.zeros(1)
    for p in probs:
        if combos.shape[0] * n_levels > MAX_LATTICE_ROWS:
            raise ValueError("power lattice too fine for exhaustive search; raise power_step")
        spend = (spend[:, None] + step * p * levels[None, :]).ravel()
        combos = np.hstack([np.repeat(combos, n_levels, axis=0),
                            np.tile(levels, combos.shape[0])[:, None]])
        feasible = spend <= budget + slack
        combos, spend = combos[feasible], spend[feasible]
    raisable = (combos < n_levels - 1) & (spend[:, None] + step * probs[None, :] <= budget + slack)
    combos = combos[~raisable.any(axis=1)]
    out = np.zeros((combos.shape[0], grid.size))
    out[:, live] = combos * step
    return out


def brute_force_discrete(
    spec: BruteForceSpec,
    budgets: Sequence[float],
    max_evaluations: float = 5e8,
) -> tuple[list[PowerPolicy], float]:
    """Best lattice policies by exhaustive search; returns ``(policies, rate)``.

    Every combination of per-user frontier vectors is scored with the exact
    expectation over all joint fading states. ``max_evaluations`` bounds the
    number of (combination, joint state) pairs scored.
    """
    budgets = [float(b) for b in budgets]
    if len(budgets) != len(spec.grids):
        raise ValueError("need one budget per user")
    if any(b < 0 for b in budgets):
        raise ValueError("budgets must be nonnegative")
    if spec.power_max < max(budgets) - 1e-12:
        raise ValueError("power_max must be at least every budget")
    n_levels = int(math.floor(spec.power_max / spec.power_step + 1e-9)) + 1
    frontiers = [_frontier(g, b, spec.power_step, n_levels) for g, b in zip(spec.grids, budgets)]
    n_states = math.prod(g.size for g in spec.grids)
    n_combos = math.prod(f.shape[0] for f in frontiers)
    if n_combos * n_states > max_evaluations:
        raise ValueError(
            f"search needs {n_combos * n_states:.3g} evaluations, above {max_evaluations:.3g}"
        )

    # received power of each frontier vector at each of the user's atoms
    terms = [f * g.gains[None, :] for f, g in zip(frontiers, spec.grids)]
    K = len(terms)
    best_rate, best_idx = -math.inf, None
    chunk = max(1, int(2e6 // max(1, n_combos // frontiers[0].shape[0])))
    for start in range(0, frontiers[0].shape[0], chunk):
        head = terms[0][start:start + chunk]
        rate = 0.0
        for state in itertools.product(*(range(g.size) for g in spec.grids)):
            prob = math.prod(g.probs[k] for g, k in zip(spec.grids, state))
            total = head[:, state[0]].reshape((-1,) + (1,) * (K - 1))
            for i in range(1, K):
                shape = [1] * K
                shape[i] = -1
                total = total + terms[i][:, state[i]].reshape(shape)
            rate = rate + prob * np.log1p(total)
        rate = np.asarray(rate)
        flat = int(np.argmax(rate))
        if rate.flat[flat] > best_rate:
            best_rate = float(rate.flat[flat])
            idx = np.unravel_index(flat, rate.shape)
            best_idx = (idx[0] + start,) + tuple(idx[1:])

    policies = [
        PowerPolicy(g, f[i], p_avg=b)
        for g, f, i, b in zip(spec.grids, frontiers, best_idx, budgets)
    ]
    return policies, best_rate


def lattice_gap_bound(spec: BruteForceSpec) -> float:
    """Upper bound on (true optimum - lattice optimum), in nats.

    Rounding every power of the optimal policy down to the lattice keeps it
    feasible and, since d/dP log(1 + s) <= v, loses at most
    ``step * sum_i E[V_i]``.
    """
    return spec.power_step * sum(float(g.probs @ g.gains) for g in spec.grids)


def constant_power_rate(grids: Sequence[FadingGrid], budgets: Sequence[float],
                        max_atoms: int = DEFAULT_MAX_ATOMS) -> float:
    """Sum-rate when every user transmits its budget regardless of fading."""
    policies = [PowerPolicy.constant(g, b) for g, b in zip(grids, budgets)]
    return sum_rate(policies, max_atoms)
