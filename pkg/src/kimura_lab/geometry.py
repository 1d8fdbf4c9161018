"""State space, projection and the anisotropic distance.

The state space is the closed orthant product ``[0, inf)^n x R^m``. Points
are split into orthant coordinates ``x`` (where the dispersion degenerates
like sqrt(x_i)) and free coordinates ``y``. The spatial quasi-metric
measures orthant coordinates by ``|sqrt(s) - sqrt(t)|`` when both lie in
[0, 1] and by ``|s - t|`` otherwise, which makes it equivalent (here:
equal, c = 1) to the intrinsic metric of the degenerate diffusion. The
space-time distance adds ``sqrt(|t0 - t1|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "StatePoint",
    "RawPoint",
    "RegionIndex",
    "project",
    "region_of",
    "wf_coordinate_distance",
    "wf_distance",
    "spacetime_distance",
    "coordinate_distance_array",
    "pairwise_wf_distance",
]


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True).reshape(-1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StatePoint:
    """A point z = (x, y) of the state space, with x_i >= 0."""

    x: np.ndarray
    y: np.ndarray

    def __init__(self, x=(), y=()):
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))
        if self.n + self.m < 1:
            raise DimensionMismatchError("state point needs n + m >= 1")
        if self.n and float(self.x.min()) < 0.0:
            raise ValueError(f"orthant coordinates must be nonnegative, got {self.x}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[0]

    def coords(self) -> np.ndarray:
        """Concatenated (n + m,) coordinate vector."""
        return np.concatenate([self.x, self.y])


@dataclass(frozen=True)
class RawPoint:
    """An unconstrained point of the ambient space R^(n+m).

    Same (x, y) split as :class:`StatePoint` but without the sign
    constraint; represents pre-projection (e.g. pre-clamp) states.
    """

    x: np.ndarray
    y: np.ndarray

    def __init__(self, x=(), y=()):
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))
        if self.x.shape[0] + self.y.shape[0] < 1:
            raise DimensionMismatchError("raw point needs n + m >= 1")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[0]

    def coords(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


@dataclass(frozen=True)
class RegionIndex:
    """Subset I of the orthant indices {0, .., n-1} naming a boundary region.

    Index i belongs to I when x_i <= 1 (ties at 0 and 1 are assigned to I).
    Indices are 0-based.
    """

    members: frozenset = field(default_factory=frozenset)
    n: int = 0

    def __post_init__(self):
        if not all(isinstance(i, (int, np.integer)) and 0 <= i < self.n for i in self.members):
            raise ValueError(f"members {set(self.members)} not a subset of range({self.n})")

    @property
    def complement(self) -> frozenset:
        return frozenset(range(self.n)) - self.members


def project(p: RawPoint | StatePoint) -> StatePoint:
    """Nearest-point projection onto the state space.

    For this product geometry the Euclidean projection is the
    componentwise clamp x_i -> max(x_i, 0) with y unchanged; it fixes
    points that are already canonical.
    """
    return StatePoint(np.maximum(p.x, 0.0), p.y)


def region_of(z: StatePoint) -> RegionIndex:
    """Region membership of z: i in I iff x_i <= 1."""
    members = frozenset(int(i) for i in np.flatnonzero(z.x <= 1.0))
    return RegionIndex(members, z.n)


def coordinate_distance_array(s, t) -> np.ndarray:
    """Vectorized per-coordinate distance on [0, inf).

    |sqrt(s) - sqrt(t)| when max(s, t) <= 1, |s - t| otherwise.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if (s < 0).any() or (t < 0).any():
        raise ValueError("coordinate distance needs nonnegative arguments")
    near = np.maximum(s, t) <= 1.0
    return np.where(near, np.abs(np.sqrt(s) - np.sqrt(t)), np.abs(s - t))


def wf_coordinate_distance(s: float, t: float) -> float:
    """Scalar form of :func:`coordinate_distance_array`."""
    return float(coordinate_distance_array(s, t))


def wf_distance(z0: StatePoint, z1: StatePoint) -> float:
    """Spatial quasi-metric: the two-group expression of the intrinsic
    equivalence, taken with constant 1.

    Orthant coordinates with both values in [0, 1] contribute through the
    max of their sqrt-distances, the remaining orthant coordinates through
    the max of their plain distances, free coordinates through the max of
    |y0_l - y_l|; the three maxes are summed (an empty group contributes
    zero). Fails the triangle inequality across the x_i = 1 interface;
    only equivalence-class properties are relied on.
    """
    if z0.n != z1.n or z0.m != z1.m:
        raise DimensionMismatchError(
            f"points live on different spaces: ({z0.n},{z0.m}) vs ({z1.n},{z1.m})"
        )
    dx = 0.0
    if z0.n:
        near = np.maximum(z0.x, z1.x) <= 1.0
        sq = np.abs(np.sqrt(z0.x) - np.sqrt(z1.x))
        lin = np.abs(z0.x - z1.x)
        d_near = sq[near].max() if near.any() else 0.0
        d_far = lin[~near].max() if (~near).any() else 0.0
        dx = float(d_near + d_far)
    dy = float(np.abs(z0.y - z1.y).max()) if z0.m else 0.0
    return dx + dy


def spacetime_distance(p0: tuple[float, StatePoint], p1: tuple[float, StatePoint]) -> float:
    """wf_distance(z0, z1) + sqrt(|t0 - t1|)."""
    t0, z0 = p0
    t1, z1 = p1
    if t0 < 0 or t1 < 0:
        raise ValueError("times must be nonnegative")
    return wf_distance(z0, z1) + float(np.sqrt(abs(t0 - t1)))


def pairwise_wf_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All-pairs spatial distance for sample arrays x: (N, n), y: (N, m)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    npoints = x.shape[0]
    d_near = np.zeros((npoints, npoints))
    d_far = np.zeros((npoints, npoints))
    for j in range(x.shape[1]):
        col = x[:, j]
        near = np.maximum(col[:, None], col[None, :]) <= 1.0
        sq = np.abs(np.sqrt(col)[:, None] - np.sqrt(col)[None, :])
        lin = np.abs(col[:, None] - col[None, :])
        d_near = np.maximum(d_near, np.where(near, sq, 0.0))
        d_far = np.maximum(d_far, np.where(near, 0.0, lin))
    dy = np.zeros((npoints, npoints))
    for l in range(y.shape[1]):
        col = y[:, l]
        dy = np.maximum(dy, np.abs(col[:, None] - col[None, :]))
    return d_near + d_far + dy
