"""Alternating maximization of the ergodic sum-rate over decentralized policies.

Each sweep visits the users in index order. User ``j`` gets the best response
to the others' current policies: at gain ``v`` its power is
``f_j^{-1}(lam_j / v) / v``, and ``lam_j`` is tuned until the policy spends
exactly its budget. Rates are in nats.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .fading import DEFAULT_N_BINS, FadingDistribution, FadingGrid, quantize
from .interference import (
    DEFAULT_MAX_ATOMS,
    NO_INTERFERENCE,
    InterferenceDistribution,
    build_interference,
)
from .policy import PowerPolicy

log = logging.getLogger(__name__)

LAMBDA_MODES = ("bisection", "paper-step")


class CalibrationError(RuntimeError):
    """The multiplier search could not meet the power budget."""

    def __init__(self, message: str, lam: float, achieved: float, target: float):
        super().__init__(f"{message} (lambda={lam:.6g}, power={achieved:.9g}, budget={target:.9g})")
        self.lam = lam
        self.achieved = achieved
        self.target = target


@dataclass(frozen=True)
class SolverConfig:
    n_bins: int = DEFAULT_N_BINS
    max_atoms: int = DEFAULT_MAX_ATOMS
    eps_rate: float = 1e-7
    eps_power: float = 1e-6
    kkt_tol: float = 1e-6
    delta: float = 0.01
    lambda_mode: str = "bisection"
    max_outer_iters: int = 500
    max_lambda_iters: int = 200

    def __post_init__(self):
        for name in ("eps_rate", "eps_power", "kkt_tol", "delta"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")
        for name in ("n_bins", "max_outer_iters", "max_lambda_iters"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if int(self.max_atoms) != self.max_atoms or self.max_atoms < 2:
            raise ValueError(f"max_atoms must be an integer >= 2, got {self.max_atoms!r}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ValueError(f"lambda_mode must be one of {LAMBDA_MODES}, got {self.lambda_mode!r}")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class SolveResult:
    policies: list[PowerPolicy]
    lambdas: list[float]
    rate_trajectory: list[float]
    capacity: float
    kkt_residual: float
    termination: str
    outer_iters: int

    @property
    def converged(self) -> bool:
        return self.termination == "converged"


# ---------------------------------------------------------------------------
# rate and best response
# ---------------------------------------------------------------------------


def sum_rate(policies: Sequence[PowerPolicy], max_atoms: int = DEFAULT_MAX_ATOMS) -> float:
    """Ergodic sum-rate ``E log(1 + sum_i V_i P_i(V_i))`` in nats.

    The last user's atoms are kept explicit and averaged against the
    convolution of the others, which is exact whenever that convolution
    fits in ``max_atoms``.
    """
    if len(policies) == 0:
        raise ValueError("need at least one policy")
    Y = build_interference(policies[:-1], max_atoms)
    last = policies[-1]
    return float(_kernels.expected_log(last.terms, last.grid.probs, Y.values, Y.probs))


def _response_powers(lam: float, grid: FadingGrid, Y: InterferenceDistribution) -> np.ndarray:
    powers = np.zeros(grid.size)
    usable = grid.gains > 0
    gains = grid.gains[usable]
    powers[usable] = _kernels.invert_f(lam / gains, Y.values, Y.probs) / gains
    return powers


def best_response(
    others: Sequence[PowerPolicy],
    lam: float,
    grid: FadingGrid,
    max_atoms: int = DEFAULT_MAX_ATOMS,
    interference: InterferenceDistribution | None = None,
) -> PowerPolicy:
    """Maximizer of ``R - lam * E P`` over one user's policy, others frozen.

    Zero-gain atoms and atoms with ``v * f(0) <= lam`` get zero power.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    Y = interference if interference is not None else build_interference(others, max_atoms)
    return PowerPolicy(grid, _response_powers(lam, grid, Y), lam=float(lam))


# ---------------------------------------------------------------------------
# multiplier calibration
# ---------------------------------------------------------------------------


class _PowerCurve:
    """Average power spent by the best response, as a function of lambda."""

    def __init__(self, grid: FadingGrid, Y: InterferenceDistribution):
        self.grid = grid
        self.Y = Y
        f0 = float(Y.probs @ (1.0 / (1.0 + Y.values)))
        # at or above this multiplier every atom is switched off
        self.lam_off = float(grid.gains.max()) * f0

    def powers(self, lam: float) -> np.ndarray:
        return _response_powers(lam, self.grid, self.Y)

    def __call__(self, lam: float) -> float:
        return float(self.grid.probs @ self.powers(lam))


def _bisection(curve: _PowerCurve, p_avg: float, lam0: float, config: SolverConfig) -> float:
    lam = lam0 if 0 < lam0 < curve.lam_off else 0.5 * curve.lam_off
    p = curve(lam)
    if p == p_avg:
        return lam
    lo = hi = lam
    for _ in range(config.max_lambda_iters):
        if p > p_avg:
            # spending too much; lam_off spends nothing, so doubling stops there
            lo, hi = hi, min(2.0 * hi, curve.lam_off)
            if curve(hi) <= p_avg:
                break
        else:
            hi, lo = lo, 0.5 * lo
            if curve(lo) >= p_avg:
                break
    else:
        raise CalibrationError("could not bracket the multiplier", lam, p, p_avg)
    return brentq(lambda x: curve(x) - p_avg, lo, hi,
                  xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=config.max_lambda_iters)


def _paper_step(curve: _PowerCurve, p_avg: float, lam0: float, config: SolverConfig) -> float:
    """Walk lambda in steps of delta until the budget is met within eps.

    The step is halved whenever the walk reverses direction, otherwise a
    fixed step would oscillate around the target forever.
    """
    tol = config.eps_power * max(p_avg, 1e-12)
    lam, step, last_dir = lam0, config.delta, 0
    for _ in range(config.max_lambda_iters):
        p = curve(lam)
        gap = p_avg - p
        if abs(gap) <= tol:
            return lam
        # spending too little -> lower lambda; too much -> raise it
        direction = -1 if gap > 0 else 1
        if last_dir and direction != last_dir:
            step *= 0.5
        last_dir = direction
        while lam + direction * step <= 0:
            step *= 0.5
        lam += direction * step
    raise CalibrationError("lambda walk did not reach the budget", lam, curve(lam), p_avg)


def calibrate_lambda(
    others: Sequence[PowerPolicy],
    grid: FadingGrid,
    p_avg: float,
    config: SolverConfig = SolverConfig(),
    lam0: float | None = None,
    interference: InterferenceDistribution | None = None,
) -> tuple[float, PowerPolicy]:
    """Find the multiplier whose best response spends exactly ``p_avg``.

    Returns ``(lam, policy)``. A zero budget, or a grid with no positive
    gain, yields a silent policy with ``lam = inf``.
    """
    if not p_avg >= 0:
        raise ValueError(f"budget must be nonnegative, got {p_avg}")
    if p_avg == 0 or not np.any(grid.gains > 0):
        return math.inf, PowerPolicy.zero(grid).replace(p_avg=float(p_avg))
    Y = interference if interference is not None else build_interference(others, config.max_atoms)
    curve = _PowerCurve(grid, Y)
    if config.lambda_mode == "bisection":
        lam = _bisection(curve, p_avg, 1.0 if lam0 is None or not math.isfinite(lam0) else lam0,
                         config)
    else:
        if lam0 is None or not math.isfinite(lam0):
            # interference-free multiplier as the starting point of the walk
            lam0 = _bisection(_PowerCurve(grid, NO_INTERFERENCE), p_avg, 1.0, config)
        lam = _paper_step(curve, p_avg, lam0, config)
    powers = curve.powers(lam)
    achieved = float(grid.probs @ powers)
    if abs(achieved - p_avg) > config.eps_power * max(p_avg, 1e-12):
        raise CalibrationError("budget not met", lam, achieved, p_avg)
    policy = PowerPolicy(grid, powers, lam=float(lam), p_avg=float(p_avg))
    return float(lam), policy


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


def kkt_residual(
    policies: Sequence[PowerPolicy],
    lambdas: Sequence[float] | None = None,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> float:
    """Largest relative violation of the stationarity conditions.

    On atoms with positive power, ``|v f_j(v P_j(v)) - lam_j| / lam_j``; on
    zero-power atoms, how far ``v f_j(0)`` exceeds ``lam_j``. Silent users
    are skipped.
    """
    if lambdas is None:
        lambdas = [p.lam for p in policies]
    worst = 0.0
    for j, (pol, lam) in enumerate(zip(policies, lambdas)):
        if pol.silent or not math.isfinite(lam):
            continue
        if not lam > 0:
            raise ValueError(f"user {j}: lambda must be positive, got {lam}")
        Y = build_interference([p for i, p in enumerate(policies) if i != j], max_atoms)
        gains = pol.grid.gains
        on = pol.powers > 0
        if np.any(on):
            lhs = gains[on] * _kernels.eval_f(pol.terms[on], Y.values, Y.probs)
            worst = max(worst, float(np.max(np.abs(lhs - lam))) / lam)
        off = ~on & (gains > 0)
        if np.any(off):
            f0 = float(Y.probs @ (1.0 / (1.0 + Y.values)))
            worst = max(worst, float(np.max(gains[off] * f0)) / lam - 1.0)
    return worst


def _initial_policies(grids, budgets, init):
    if isinstance(init, str):
        if init == "constant":
            return [PowerPolicy.constant(g, p) for g, p in zip(grids, budgets)]
        if init == "two-level":
            return [PowerPolicy.two_level(g, p) for g, p in zip(grids, budgets)]
        raise ValueError(f"unknown initialization {init!r}; use 'constant' or 'two-level'")
    policies = []
    for g, p, powers in zip(grids, budgets, init, strict=True):
        powers = powers.powers if isinstance(powers, PowerPolicy) else powers
        policies.append(PowerPolicy(g, powers, p_avg=p))
    return policies


def am_solve(
    problem: Sequence[tuple[FadingDistribution | FadingGrid, float]],
    config: SolverConfig = SolverConfig(),
    init="constant",
    lambdas: Sequence[float] | None = None,
) -> SolveResult:
    """Compute sum-rate optimal decentralized policies.

    ``problem`` lists one ``(fading, budget)`` pair per user; the fading can
    be a distribution (quantized with ``config.n_bins``) or a ready grid.
    ``init`` is ``"constant"``, ``"two-level"`` or a list of feasible power
    arrays. ``lambdas`` warm-starts the multiplier search.
    """
    if len(problem) == 0:
        raise ValueError("need at least one user")
    grids, budgets = [], []
    for fading, p_avg in problem:
        grids.append(fading if isinstance(fading, FadingGrid) else quantize(fading, config.n_bins))
        if not p_avg >= 0:
            raise ValueError(f"budgets must be nonnegative, got {p_avg}")
        budgets.append(float(p_avg))
    K = len(grids)

    policies = _initial_policies(grids, budgets, init)
    lams = [None] * K if lambdas is None else [float(x) for x in lambdas]
    trajectory = [sum_rate(policies, config.max_atoms)]
    termination = "max_iters"
    residual = math.nan
    n = 0
    for n in range(1, config.max_outer_iters + 1):
        for j in range(K):
            others = policies[:j] + policies[j + 1:]
            lams[j], policies[j] = calibrate_lambda(
                others, grids[j], budgets[j], config, lam0=lams[j])
        rate = sum_rate(policies, config.max_atoms)
        trajectory.append(rate)
        log.debug("sweep %d: R = %.12f, lambdas = %s", n, rate, lams)
        if rate - trajectory[-2] < config.eps_rate:
            # a flat rate alone can hide a first-order policy error
            residual = kkt_residual(policies, lams, config.max_atoms)
            if residual <= config.kkt_tol:
                termination = "converged"
                break
            log.debug("sweep %d: rate flat but KKT residual %.3g", n, residual)
    if termination != "converged":
        log.warning("no convergence after %d sweeps", n)
        residual = kkt_residual(policies, lams, config.max_atoms)
    return SolveResult(
        policies=policies,
        lambdas=[float(x) for x in lams],
        rate_trajectory=trajectory,
        capacity=trajectory[-1],
        kkt_residual=residual,
        termination=termination,
        outer_iters=n,
    )
