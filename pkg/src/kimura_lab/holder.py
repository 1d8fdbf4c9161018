"""Empirical anisotropic Hölder norms and the coefficient-regularity probe.

Seminorms are suprema of difference quotients over finite point sets, so
every estimate is a lower bound of the true norm; a verdict of PASS means
"no evidence of failure" backed by a refinement trend, never a proof.
Grids cluster geometrically toward x = 0 (where the metric degenerates)
and x = 1 (where it changes form).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DuplicatePointError
from .geometry import RegionIndex
from .model import CoefficientModel
from .report import FAIL, PASS, DiagnosticReport

__all__ = [
    "SampledFunction",
    "holder_seminorm",
    "holder_norm",
    "holder_2alpha_norm",
    "HolderGridSpec",
    "validate_coefficient_holder",
    "region_grid",
    "write_norms_csv",
]

_ROW_BLOCK = 512


@dataclass(frozen=True)
class SampledFunction:
    """Values of u on space-time sample points, with optional derivative oracles.

    Oracles follow the batched convention over the sample axis:
    time_derivative(t, x, y) -> (N,), gradient(t, x, y) -> (N, d),
    hessian(t, x, y) -> (N, d, d).
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    time_derivative: Optional[Callable] = None
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None

    def __post_init__(self):
        t = np.asarray(self.times, float)
        x = np.asarray(self.x, float).reshape(len(t), -1)
        y = np.asarray(self.y, float).reshape(len(t), -1)
        v = np.asarray(self.values, float).reshape(-1)
        if len(v) != len(t):
            raise ValueError("values and points must have matching length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def with_values(self, values: np.ndarray) -> "SampledFunction":
        return SampledFunction(self.times, self.x, self.y, values)

    @classmethod
    def from_function(cls, fn, times, x, y, **oracles) -> "SampledFunction":
        times = np.asarray(times, float)
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return cls(times, x, y, np.asarray(fn(x, y), float).reshape(-1), **oracles)


def _pair_blocks(fs: SampledFunction):
    """Yield (rho, |du|) for row blocks of the upper-triangular pair set."""
    N = len(fs.values)
    t = fs.times
    for i0 in range(0, N, _ROW_BLOCK):
        i1 = min(i0 + _ROW_BLOCK, N)
        rows = slice(i0, i1)
        d_near = np.zeros((i1 - i0, N))
        d_far = np.zeros((i1 - i0, N))
        for j in range(fs.n):
            col = fs.x[:, j]
            near = np.maximum(col[rows, None], col[None, :]) <= 1.0
            sq = np.abs(np.sqrt(col)[rows, None] - np.sqrt(col)[None, :])
            lin = np.abs(col[rows, None] - col[None, :])
            d_near = np.maximum(d_near, np.where(near, sq, 0.0))
            d_far = np.maximum(d_far, np.where(near, 0.0, lin))
        dy = np.zeros((i1 - i0, N))
        for l in range(fs.m):
            col = fs.y[:, l]
            dy = np.maximum(dy, np.abs(col[rows, None] - col[None, :]))
        rho = d_near + d_far + dy + np.sqrt(np.abs(t[rows, None] - t[None, :]))
        du = np.abs(fs.values[rows, None] - fs.values[None, :])
        # keep strictly upper-triangular pairs
        cols = np.arange(N)[None, :]
        mask = cols > np.arange(i0, i1)[:, None]
        yield rho, du, mask


def holder_seminorm(fs: SampledFunction, alpha: float) -> float:
    """sup over point pairs of |u(p) - u(p')| / rho(p, p')^alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if len(fs.values) < 2:
        raise ValueError("need at least two sample points")
    worst = 0.0
    for rho, du, mask in _pair_blocks(fs):
        zero = mask & (rho == 0.0)
        if zero.any() and du[zero].max() > 0.0:
            raise DuplicatePointError("coincident points with differing values")
        ok = mask & (rho > 0.0)
        if ok.any():
            worst = max(worst, float((du[ok] / rho[ok] ** alpha).max()))
    return worst


def holder_norm(fs: SampledFunction, alpha: float) -> float:
    """sup |u| plus the Hölder seminorm."""
    return float(np.abs(fs.values).max()) + holder_seminorm(fs, alpha)


def holder_2alpha_norm(fs: SampledFunction, alpha: float, region: RegionIndex) -> float:
    """Second-order weighted norm on a single region closure.

    Sums the first-order norms of u and its gradient with the norms of
    the weighted second derivatives: sqrt(x_i x_j) u_{x_i x_j} for near
    indices, sqrt(x_i) u_{x_i x_j} mixed, bare u_{x_i x_j} for far
    indices, the same pattern for x-y cross terms, u_{y_l y_k}, and u_t.
    """
    if fs.gradient is None or fs.hessian is None or fs.time_derivative is None:
        raise ValueError("second-order norm needs time_derivative, gradient and hessian oracles")
    n, m = fs.n, fs.m
    if region.n != n:
        raise ValueError("region index dimension mismatch")
    tol = 1e-9
    inn = sorted(region.members)
    out = sorted(region.complement)
    if inn and fs.x[:, inn].max() > 1.0 + tol:
        raise ValueError("samples leave the region closure (x_i > 1 for i in I)")
    if out and fs.x[:, out].min() < 1.0 - tol:
        raise ValueError("samples leave the region closure (x_j < 1 for j not in I)")

    grad = np.asarray(fs.gradient(fs.times, fs.x, fs.y), float).reshape(len(fs.values), n + m)
    hess = np.asarray(fs.hessian(fs.times, fs.x, fs.y), float).reshape(len(fs.values), n + m, n + m)
    ut = np.asarray(fs.time_derivative(fs.times, fs.x, fs.y), float).reshape(-1)
    sx = np.sqrt(np.maximum(fs.x, 0.0))

    total = holder_norm(fs, alpha)
    for j in range(n + m):
        total += holder_norm(fs.with_values(grad[:, j]), alpha)
    for i, j in itertools.product(inn, inn):
        total += holder_norm(fs.with_values(sx[:, i] * sx[:, j] * hess[:, i, j]), alpha)
    for l, k in itertools.product(range(m), range(m)):
        total += holder_norm(fs.with_values(hess[:, n + l, n + k]), alpha)
    for i, j in itertools.product(inn, out):
        total += holder_norm(fs.with_values(sx[:, i] * hess[:, i, j]), alpha)
    for i in inn:
        for l in range(m):
            total += holder_norm(fs.with_values(sx[:, i] * hess[:, i, n + l]), alpha)
    for i, j in itertools.product(out, out):
        total += holder_norm(fs.with_values(hess[:, i, j]), alpha)
    for i in out:
        for l in range(m):
            total += holder_norm(fs.with_values(hess[:, i, n + l]), alpha)
    total += holder_norm(fs.with_values(ut), alpha)
    return float(total)


@dataclass(frozen=True)
class HolderGridSpec:
    """Refined tensor grids per region, clustered toward x = 0 and x = 1.

    Level l clusters down to eps0 * shrink^-l; the blow-up flag fires when
    a seminorm grows by more than flag_factor from one level to the next.
    """

    levels: int = 3
    points_per_axis: int = 9
    radius: float = 4.0
    eps0: float = 1e-2
    shrink: float = 10.0
    flag_factor: float = 2.0
    max_points: int = 4096
    region_subsets: Optional[tuple] = None  # explicit I subsets for large n

    def axis_near(self, level: int) -> np.ndarray:
        """1-D grid for a coordinate in [0, 1] (index in I)."""
        eps = self.eps0 * self.shrink ** (-level)
        k = self.points_per_axis
        base = np.geomspace(eps, 1.0, k)
        near_one = 1.0 - np.geomspace(eps, 0.25, max(2, k // 3))
        return np.unique(np.concatenate([[0.0], base, near_one]))

    def axis_far(self, level: int) -> np.ndarray:
        """1-D grid for a coordinate in [1, radius] (index outside I)."""
        eps = self.eps0 * self.shrink ** (-level)
        k = self.points_per_axis
        return np.unique(1.0 + (self.radius - 1.0) * np.concatenate([[0.0], np.geomspace(eps, 1.0, k)]))

    def axis_free(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.points_per_axis)


def region_grid(spec: HolderGridSpec, n: int, m: int, members: frozenset, level: int):
    """Tensor grid of the closure of region I = members at one refinement level."""
    axes = []
    for i in range(n):
        axes.append(spec.axis_near(level) if i in members else spec.axis_far(level))
    for _ in range(m):
        axes.append(spec.axis_free())
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    pts = np.stack([g.reshape(-1) for g in mesh], axis=1) if axes else np.zeros((1, 0))
    if pts.shape[0] > spec.max_points:
        sel = np.linspace(0, pts.shape[0] - 1, spec.max_points).astype(int)
        pts = pts[np.unique(sel)]
    return pts[:, :n], pts[:, n:]


def _region_terms(model: CoefficientModel, members: frozenset, x: np.ndarray, y: np.ndarray):
    """Named weighted coefficient combinations whose regularity is asserted."""
    dec = model.decomposition
    n, m = model.n, model.m
    N = x.shape[0]
    inn = sorted(members)
    out = sorted(set(range(n)) - set(members))
    al = np.broadcast_to(np.asarray(dec.alpha(x, y), float), (N, n))
    at = np.broadcast_to(np.asarray(dec.alpha_tilde(x, y), float), (N, n, n))
    bv = np.broadcast_to(np.asarray(model.b(x, y), float), (N, n))
    terms = {}
    for i in inn:
        terms[f"alpha_{i}{i}"] = al[:, i]
        terms[f"b_{i}"] = bv[:, i]
    for j in out:
        terms[f"x{j}.alpha_{j}{j}"] = x[:, j] * al[:, j]
        terms[f"b_{j}"] = bv[:, j]
    for i, i2 in itertools.product(inn, inn):
        terms[f"atilde_{i}{i2}"] = at[:, i, i2]
    for i, j in itertools.product(inn, out):
        terms[f"x{j}.atilde_{i}{j}"] = x[:, j] * at[:, i, j]
        terms[f"x{j}.atilde_{j}{i}"] = x[:, j] * at[:, j, i]
    for j, j2 in itertools.product(out, out):
        terms[f"x{j}.x{j2}.atilde_{j}{j2}"] = x[:, j] * x[:, j2] * at[:, j, j2]
    if m:
        cv = np.broadcast_to(np.asarray(dec.c(x, y), float), (N, n, m))
        af = np.broadcast_to(np.asarray(dec.a_free(x, y), float), (N, m, m))
        ev = np.broadcast_to(np.asarray(model.e(x, y), float), (N, m))
        for i in inn:
            for l in range(m):
                terms[f"c_{i}{l}"] = cv[:, i, l]
        for j in out:
            for l in range(m):
                terms[f"x{j}.c_{j}{l}"] = x[:, j] * cv[:, j, l]
        for l, k in itertools.product(range(m), range(m)):
            terms[f"afree_{l}{k}"] = af[:, l, k]
        for l in range(m):
            terms[f"e_{l}"] = ev[:, l]
    return terms


def validate_coefficient_holder(
    model: CoefficientModel, alpha: float, spec: HolderGridSpec | None = None
) -> DiagnosticReport:
    """Refinement-trend probe of coefficient Hölder regularity, per region.

    For each region and each asserted weighted combination, the empirical
    seminorm is computed on progressively refined grids; growth beyond
    spec.flag_factor between consecutive levels raises the blow-up flag.
    The report metadata carries the full (region, term, level, estimate)
    table for CSV export.
    """
    if model.decomposition is None:
        raise ValueError("coefficient validation needs a model with a decomposition")
    spec = spec or HolderGridSpec()
    n, m = model.n, model.m
    if spec.region_subsets is not None:
        subsets = [frozenset(s) for s in spec.region_subsets]
    else:
        if n > 8:
            raise ValueError("n > 8: pass an explicit region subset list in the grid spec")
        subsets = [frozenset(c) for r in range(n + 1) for c in itertools.combinations(range(n), r)]
    rows = []
    worst_ratio = 0.0
    flagged = []
    for members in subsets:
        label = "I={" + ",".join(map(str, sorted(members))) + "}"
        history: dict[str, list[float]] = {}
        for level in range(spec.levels):
            x, y = region_grid(spec, n, m, members, level)
            t = np.zeros(x.shape[0])
            for term, vals in _region_terms(model, members, x, y).items():
                fs = SampledFunction(t, x, y, vals)
                est = holder_seminorm(fs, alpha)
                rows.append({"region": label, "term": term, "level": level, "estimate": est})
                history.setdefault(term, []).append(est)
        for term, ests in history.items():
            for lo, hi in zip(ests, ests[1:]):
                if lo > 1e-12:
                    ratio = hi / lo
                    worst_ratio = max(worst_ratio, ratio)
                    if ratio > spec.flag_factor:
                        flagged.append(f"{label}:{term}")
                        break
                elif hi > 1e-9:
                    worst_ratio = float("inf")
                    flagged.append(f"{label}:{term}")
                    break
    return DiagnosticReport(
        name="coefficient-holder",
        estimate=worst_ratio,
        stderr=0.0,
        bound_or_tolerance=spec.flag_factor,
        verdict=FAIL if flagged else PASS,
        metadata={
            "alpha": alpha,
            "levels": spec.levels,
            "flagged": flagged,
            "table": rows,
        },
    )


def write_norms_csv(report: DiagnosticReport, path) -> None:
    """Columns: region, term, level, estimate (from a coefficient-holder report)."""
    rows = report.metadata.get("table", [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "term", "level", "estimate"])
        for row in rows:
            writer.writerow([row["region"], row["term"], row["level"], repr(float(row["estimate"]))])
