"""Per-user fading-power distributions and their finite quantizations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_N_BINS = 200

_KINDS = ("exponential", "deterministic", "discrete")


@dataclass(frozen=True)
class FadingDistribution:
    """Distribution of the power gain ``V = |H|^2`` of one user.

    Build instances with :meth:`exponential`, :meth:`deterministic` or
    :meth:`discrete` rather than calling the constructor.
    """

    kind: str
    mean: float = 1.0
    value: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown fading kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "exponential":
            if not (math.isfinite(self.mean) and self.mean > 0):
                raise ValueError(f"exponential mean must be positive, got {self.mean}")
        elif self.kind == "deterministic":
            if not (math.isfinite(self.value) and self.value >= 0):
                raise ValueError(f"deterministic value must be >= 0, got {self.value}")
        else:
            _check_atoms(self.atoms, tol=1e-12)

    @classmethod
    def exponential(cls, mean: float = 1.0) -> "FadingDistribution":
        """Rayleigh fading in amplitude, i.e. exponential power gain."""
        return cls("exponential", mean=float(mean))

    @classmethod
    def deterministic(cls, value: float) -> "FadingDistribution":
        return cls("deterministic", value=float(value))

    @classmethod
    def discrete(cls, atoms: Sequence[tuple[float, float]]) -> "FadingDistribution":
        return cls("discrete", atoms=tuple((float(g), float(p)) for g, p in atoms))

    def to_dict(self) -> dict:
        if self.kind == "exponential":
            return {"kind": "exponential", "mean": self.mean}
        if self.kind == "deterministic":
            return {"kind": "deterministic", "value": self.value}
        return {"kind": "discrete", "atoms": [list(a) for a in self.atoms]}


def _check_atoms(atoms, tol):
    if len(atoms) == 0:
        raise ValueError("discrete distribution needs at least one atom")
    gains = np.array([a[0] for a in atoms], dtype=float)
    probs = np.array([a[1] for a in atoms], dtype=float)
    if not np.all(np.isfinite(gains)) or np.any(gains < 0):
        raise ValueError("atom gains must be finite and nonnegative")
    if np.any(np.diff(gains) <= 0):
        raise ValueError("atom gains must be strictly increasing")
    if np.any(probs <= 0) or np.any(probs > 1):
        raise ValueError("atom probabilities must lie in (0, 1]")
    if abs(probs.sum() - 1.0) > tol:
        raise ValueError(f"atom probabilities sum to {probs.sum():.15g}, not 1")


@dataclass(frozen=True, eq=False)
class FadingGrid:
    """Finite set of gain atoms with probability masses."""

    gains: np.ndarray
    probs: np.ndarray
    source: FadingDistribution | None = field(default=None, repr=False)

    def __post_init__(self):
        gains = np.ascontiguousarray(self.gains, dtype=np.float64)
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if gains.ndim != 1 or gains.shape != probs.shape or gains.size == 0:
            raise ValueError("gains and probs must be nonempty 1-D arrays of equal length")
        _check_atoms(list(zip(gains, probs)), tol=1e-10)
        gains.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]]) -> "FadingGrid":
        atoms = list(atoms)
        return cls(np.array([a[0] for a in atoms]), np.array([a[1] for a in atoms]))

    @property
    def size(self) -> int:
        return self.gains.size

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.gains.tolist(), self.probs.tolist()))


def _exponential_grid(mean: float, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    # bin k covers quantiles [k/n, (k+1)/n); edges a_k = -mean * ln(1 - k/n)
    k = np.arange(n_bins + 1, dtype=np.float64)
    surv = 1.0 - k / n_bins  # survival function at each edge
    edges = -mean * np.log(surv[:-1])
    # partial first moment: int_a^b v e^{-v/m}/m dv = (a+m)e^{-a/m} - (b+m)e^{-b/m};
    # (a+m)e^{-a/m} = (a+m)*surv(a), and the last bin runs to infinity
    head = (edges + mean) * surv[:-1]
    tail = np.append(head[1:], 0.0)
    probs = np.full(n_bins, 1.0 / n_bins)
    gains = (head - tail) / probs
    return gains, probs


def quantize(dist: FadingDistribution, n_bins: int = DEFAULT_N_BINS) -> FadingGrid:
    """Quantize ``dist`` into ``n_bins`` equiprobable bins.

    Each continuous bin is represented by the conditional mean of the
    distribution on that bin, so the grid keeps the first moment. The last
    bin is open-ended: the whole tail is folded into it. Discrete
    distributions are passed through and deterministic ones give one atom;
    ``n_bins`` is ignored for both.
    """
    if int(n_bins) != n_bins or n_bins < 1:
        raise ValueError(f"n_bins must be a positive integer, got {n_bins}")
    n_bins = int(n_bins)
    if dist.kind == "deterministic":
        return FadingGrid(np.array([dist.value]), np.array([1.0]), source=dist)
    if dist.kind == "discrete":
        _check_atoms(dist.atoms, tol=1e-12)
        gains, probs = zip(*dist.atoms)
        return FadingGrid(np.array(gains), np.array(probs), source=dist)
    gains, probs = _exponential_grid(dist.mean, n_bins)
    return FadingGrid(gains, probs, source=dist)


def grid_mean(grid: FadingGrid) -> float:
    return float(np.dot(grid.probs, grid.gains))
