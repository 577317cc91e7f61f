"""Distribution of the interference a user sees, and the marginal integral f.

For user ``j`` the interference is ``Y_j = sum_{i != j} V_i P_i(V_i)``, a
sum of independent discrete terms. ``f(x) = E[1 / (1 + x + Y_j)]`` is the
expectation that appears in the stationarity condition of the sum-rate
problem, and ``x`` plays the role of the user's own received power.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .policy import PowerPolicy

DEFAULT_MAX_ATOMS = 512


@dataclass(frozen=True, eq=False)
class InterferenceDistribution:
    values: np.ndarray
    probs: np.ndarray
    exact: bool = True

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ValueError("values and probs must be nonempty 1-D arrays of equal length")
        if np.any(values < 0) or np.any(np.diff(values) < 0):
            raise ValueError("interference atoms must be nonnegative and sorted")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError("interference masses must be positive and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_atoms(cls, atoms, exact: bool = True) -> "InterferenceDistribution":
        atoms = sorted(atoms)
        return cls(np.array([a[0] for a in atoms]), np.array([a[1] for a in atoms]), exact)

    @property
    def size(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.probs @ self.values)

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))


NO_INTERFERENCE = InterferenceDistribution(np.zeros(1), np.ones(1))


def _merge(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort atoms and merge exactly equal values."""
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    uniq, start = np.unique(values, return_index=True)
    return uniq, np.add.reduceat(probs, start)


def rebin(values: np.ndarray, probs: np.ndarray, max_atoms: int):
    """Compress sorted atoms to at most ``max_atoms`` atoms.

    ``[0, max(values)]`` is cut into ``max_atoms // 2`` bins of equal width
    in ``log(1 + y)``. Each bin is replaced by the two-point rule matching
    its mass, mean, variance and third central moment (a single atom at the
    conditional mean when the bin has no spread). Mass and mean are exact;
    the error in ``E g(Y)`` scales with the fourth derivative of ``g``.
    """
    top = values[-1]
    if top <= 0:
        return np.zeros(1), np.array([probs.sum()])
    n_bins = max_atoms // 2
    scale = n_bins / np.log1p(top)
    idx = np.minimum((np.log1p(values) * scale).astype(np.int64), n_bins - 1)
    mass = np.bincount(idx, weights=probs, minlength=n_bins)
    keep = mass > 0
    safe = np.where(keep, mass, 1.0)
    mu = np.bincount(idx, weights=probs * values, minlength=n_bins) / safe
    dev = values - mu[idx]
    var = np.bincount(idx, weights=probs * dev * dev, minlength=n_bins) / safe
    m3 = np.bincount(idx, weights=probs * dev ** 3, minlength=n_bins) / safe

    mass, mu, var, m3 = mass[keep], mu[keep], var[keep], m3[keep]
    sigma = np.sqrt(np.maximum(var, 0.0))
    spread = sigma > 1e-12 * (1.0 + mu)
    # standardized nodes z1 < 0 < z2 with z1 * z2 = -1 and z1 + z2 = skewness
    half_skew = np.where(spread, 0.5 * m3 / np.where(spread, sigma, 1.0) ** 3, 0.0)
    root = np.sqrt(1.0 + half_skew * half_skew)
    z2 = np.where(half_skew >= 0, half_skew + root, -1.0 / (half_skew - root))
    z1 = -1.0 / z2
    w1 = z2 / (z2 - z1)

    lo_val = mu + sigma * z1
    hi_val = mu + sigma * z2
    out_vals = np.concatenate([np.where(spread, lo_val, mu), hi_val[spread]])
    out_probs = np.concatenate([np.where(spread, mass * w1, mass), (mass * (1.0 - w1))[spread]])
    out_vals = np.maximum(out_vals, 0.0)
    return _merge(out_vals, out_probs)


def convolve(a_vals, a_probs, b_vals, b_probs, max_atoms: int):
    """Distribution of the independent sum of two discrete variables.

    Returns ``(values, probs, exact)``; ``exact`` is False when the result
    had to be rebinned to respect ``max_atoms``.
    """
    values = np.add.outer(a_vals, b_vals).ravel()
    probs = np.multiply.outer(a_probs, b_probs).ravel()
    values, probs = _merge(values, probs)
    if values.size > max_atoms:
        values, probs = rebin(values, probs, max_atoms)
        return values, probs, False
    return values, probs, True


def term_distribution(policy: PowerPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Atoms of the received power ``V P(V)`` of one user."""
    return _merge(policy.terms, policy.grid.probs)


def build_interference(
    policies: Sequence[PowerPolicy], max_atoms: int = DEFAULT_MAX_ATOMS
) -> InterferenceDistribution:
    """Distribution of the summed received power of ``policies``.

    Convolves the per-user terms one at a time, rebinning whenever the atom
    count exceeds ``max_atoms``. An empty list gives a point mass at zero.
    """
    if max_atoms < 2:
        raise ValueError(f"max_atoms must be at least 2, got {max_atoms}")
    values, probs, exact = np.zeros(1), np.ones(1), True
    for pol in policies:
        t_vals, t_probs = term_distribution(pol)
        values, probs, step_exact = convolve(values, probs, t_vals, t_probs, max_atoms)
        exact = exact and step_exact
    return InterferenceDistribution(values, probs, exact)


def eval_f(x, Y: InterferenceDistribution):
    """``sum_m q_m / (1 + x + y_m)``; accepts a scalar or an array of ``x``."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("f is only defined for x >= 0")
    out = _kernels.eval_f(arr, Y.values, Y.probs)
    return float(out[0]) if np.ndim(x) == 0 else out


def invert_f(target, Y: InterferenceDistribution):
    """Unique ``x >= 0`` with ``f(x) = target``, or 0 when ``target >= f(0)``.

    ``f(x) <= 1 / (1 + x) < 1 / x`` so the root lies in ``[0, 1/target]``.
    Accepts a scalar or an array of targets.
    """
    arr = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if np.any(~(arr > 0)):
        raise ValueError("targets must be positive")
    out = _kernels.invert_f(arr, Y.values, Y.probs)
    return float(out[0]) if np.ndim(target) == 0 else out
