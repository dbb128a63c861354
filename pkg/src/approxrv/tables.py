"""Immutable table types produced by the fitting routines.

All tables are frozen dataclasses wrapping read-only numpy arrays, so
they can be shared freely across threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError

CONSTRUCTIONS = ("l1", "central", "interior", "rademacher")


def _frozen_array(a, shape=None) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ConstantTable:
    """Piecewise-constant quantile approximation on 2^q equal intervals."""

    q: int
    values: np.ndarray
    construction: str

    def __post_init__(self):
        if not 1 <= self.q <= 24:
            raise ConfigError(f"interval exponent q must be in [1, 24], got {self.q}")
        if self.construction not in CONSTRUCTIONS:
            raise ConfigError(f"unknown construction {self.construction!r}")
        object.__setattr__(self, "values", _frozen_array(self.values, (1 << self.q,)))

    @property
    def n_intervals(self) -> int:
        return 1 << self.q

    def breakpoints(self) -> np.ndarray:
        """Interval endpoints k / 2^q for k = 0 .. 2^q."""
        return np.linspace(0.0, 1.0, self.n_intervals + 1)


@dataclass(frozen=True)
class DyadicPolyTable:
    """Piecewise polynomial on geometrically decaying intervals of (0, 1/2).

    ``coeffs`` is coefficient-major: row j holds, for every interval, the
    coefficient of u^j.  Entry 0 belongs to u = 1/2 (all zeros for the
    rotationally symmetric Gaussian fit); entry k >= 1 covers
    [decay^k / 2, decay^{k-1} / 2), and the final entry absorbs the
    singular remainder (0, decay^{K-1} / 2).
    """

    degree: int
    n_intervals: int
    coeffs: np.ndarray
    decay: float = 0.5

    def __post_init__(self):
        if not 1 <= self.degree <= 5:
            raise ConfigError(f"polynomial degree must be in [1, 5], got {self.degree}")
        if not 2 <= self.n_intervals <= 40:
            raise ConfigError(f"interval count must be in [2, 40], got {self.n_intervals}")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError(f"decay rate must be in (0, 1), got {self.decay}")
        shape = (self.degree + 1, self.n_intervals + 1)
        object.__setattr__(self, "coeffs", _frozen_array(self.coeffs, shape))

    @cached_property
    def coeffs32(self) -> np.ndarray:
        out = self.coeffs.astype(np.float32)
        out.setflags(write=False)
        return out

    def interval_bounds(self, k: int) -> tuple[float, float]:
        """(lower, upper) of entry k's interval within (0, 1/2]."""
        if k == 0:
            return (0.5, 0.5)
        upper = 0.5 * self.decay ** (k - 1)
        lower = 0.0 if k == self.n_intervals else 0.5 * self.decay**k
        return (lower, upper)

    def breakpoints(self) -> np.ndarray:
        """Full-domain breakpoints including the mirrored upper half."""
        lower = [0.5 * self.decay**k for k in range(self.n_intervals)]
        pts = np.array([0.0] + lower[::-1])
        return np.concatenate([pts, (1.0 - pts)[::-1]])


@dataclass(frozen=True)
class NcChi2Table:
    """Family of half-domain dyadic tables indexed by sqrt(y) knots.

    Knot j sits at sqrt(y) = j / (n_knots - 1).  ``lower`` tables cover
    u in (0, 1/2], ``upper`` tables cover (1/2, 1) after the reflection
    v = 1 - u; the distribution is not symmetric, so the halves are
    independent fits.  Index 0 of both halves stores the mid-point value
    as a constant so u = 1/2 evaluates exactly.
    """

    nu: float
    n_knots: int
    degree: int
    n_intervals: int
    lower: tuple[DyadicPolyTable, ...] = field(repr=False)
    upper: tuple[DyadicPolyTable, ...] = field(repr=False)

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"nu must be > 0, got {self.nu}")
        if self.n_knots < 2:
            raise ConfigError(f"need at least 2 knots, got {self.n_knots}")
        for name, group in (("lower", self.lower), ("upper", self.upper)):
            if len(group) != self.n_knots:
                raise ConfigError(f"{name} must hold one table per knot")
            for t in group:
                if t.degree != self.degree or t.n_intervals != self.n_intervals:
                    raise ConfigError("knot tables must share degree and interval count")

    @property
    def sqrt_y_knots(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_knots)

    @property
    def y_knots(self) -> np.ndarray:
        return self.sqrt_y_knots**2

    @cached_property
    def lower_stack(self) -> np.ndarray:
        out = np.ascontiguousarray(np.stack([t.coeffs for t in self.lower]))
        out.setflags(write=False)
        return out

    @cached_property
    def upper_stack(self) -> np.ndarray:
        out = np.ascontiguousarray(np.stack([t.coeffs for t in self.upper]))
        out.setflags(write=False)
        return out

    @cached_property
    def eval_stacks(self) -> np.ndarray:
        """(2, n_knots, degree+1, K+1): upper tables at 0, lower at 1."""
        out = np.ascontiguousarray(np.stack([self.upper_stack, self.lower_stack]))
        out.setflags(write=False)
        return out
