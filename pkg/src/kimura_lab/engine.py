"""Discrete-time path simulation with boundary-preserving stepping.

The scheme is explicit Euler-Maruyama: coefficients are evaluated at the
projected state (the continuous extension by the nearest-point map), the
orthant dispersion rows carry sqrt(max(x_i, 0)), and by default the state
is clamped back onto the orthant after each step. ``record-only`` mode
skips the clamp and instead logs how far the raw chain strays below 0,
which is the empirical form of the support property.

Paths are simulated in blocks; every path owns its own counter-based
random stream, so results are bitwise independent of block size and
worker count, and a path over a short horizon is a prefix of the same
path over a longer one.
"""

from __future__ import annotations

import csv
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from . import _kernels
from ._rng import DOMAIN_PRIMARY, block_normals
from .errors import EstimationError, SingularMatrixError
from .geometry import RawPoint, StatePoint
from .model import CoefficientModel

__all__ = [
    "SimConfig",
    "PathBundle",
    "step_standard",
    "simulate_standard",
    "simulate_singular",
    "iter_simulate",
    "reconstruct_brownian",
    "BrownianReconstruction",
    "write_paths_csv",
    "write_increments_csv",
]

CLAMP_MODES = ("post-step-clamp", "record-only")

# cap on transient per-block float panels (~64 MB at float64)
_BLOCK_BUDGET_FLOATS = 8_000_000
# cap on a fully materialized bundle; larger runs must stream blocks
_BUNDLE_BUDGET_FLOATS = 150_000_000


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; dt must divide the horizon."""

    horizon_T: float
    dt: float
    n_paths: int
    master_seed: int
    clamp_mode: str = "post-step-clamp"
    epsilon_floor: float = 1e-8
    record_stride: int = 1
    retain_increments: bool = False

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        if not 0 < self.dt < self.horizon_T:
            raise ValueError("need 0 < dt < horizon_T")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.clamp_mode not in CLAMP_MODES:
            raise ValueError(f"clamp_mode must be one of {CLAMP_MODES}")
        if self.epsilon_floor < 0:
            raise ValueError("epsilon_floor must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        n = self.horizon_T / self.dt
        if abs(round(n) - n) > 1e-9 * max(1.0, n):
            raise ValueError(f"dt={self.dt} does not divide horizon_T={self.horizon_T}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_T / self.dt))

    def recorded_steps(self) -> np.ndarray:
        """Step indices whose states are recorded (always includes 0 and N)."""
        ks = list(range(0, self.n_steps + 1, self.record_stride))
        if ks[-1] != self.n_steps:
            ks.append(self.n_steps)
        return np.asarray(ks, dtype=np.int64)

    def times(self) -> np.ndarray:
        return self.recorded_steps() * self.dt


@dataclass
class PathBundle:
    """Simulated paths with per-step metadata.

    states has shape (paths, recorded times, n + m); increments, when
    retained, hold the raw Brownian increments of every step (not just
    recorded ones). negativity_log is the per-path running maximum of the
    pre-clamp overshoot below the boundary; boundary_hit_count counts
    steps that ended on the boundary.
    """

    times: np.ndarray
    states: np.ndarray
    increments: Optional[np.ndarray]
    negativity_log: np.ndarray
    boundary_hit_count: np.ndarray
    n: int
    m: int
    dt: float
    kind: str  # "standard" | "singular"
    clamp_mode: str
    master_seed: int
    epsilon_floor: float = 0.0
    path_offset: int = 0

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.states[:, :, : self.n]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, :, self.n :]

    def state_point(self, path: int, index: int) -> StatePoint:
        s = self.states[path, index]
        return StatePoint(np.maximum(s[: self.n], 0.0), s[self.n :])

    def per_step_states(self) -> bool:
        """True when every step was recorded (record_stride == 1)."""
        return self.states.shape[1] == int(round(self.times[-1] / self.dt)) + 1

    @staticmethod
    def concatenate(blocks: list["PathBundle"]) -> "PathBundle":
        first = blocks[0]
        inc = None
        if first.increments is not None:
            inc = np.concatenate([b.increments for b in blocks], axis=0)
        return replace(
            first,
            states=np.concatenate([b.states for b in blocks], axis=0),
            increments=inc,
            negativity_log=np.concatenate([b.negativity_log for b in blocks]),
            boundary_hit_count=np.concatenate([b.boundary_hit_count for b in blocks]),
        )


def _as_batched(val, shape) -> np.ndarray:
    arr = np.asarray(val, dtype=float)
    if arr.shape != shape:
        arr = np.broadcast_to(arr, shape)
    return np.ascontiguousarray(arr)


def _sigma_batched(val, B, d) -> np.ndarray:
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (d, d):
            raise ValueError(f"sigma returned shape {arr.shape}, expected {(d, d)}")
        return np.ascontiguousarray(arr)
    if arr.shape != (B, d, d):
        arr = np.broadcast_to(arr, (B, d, d))
    return np.ascontiguousarray(arr)


def _init_block(z0, n, m, start, stop) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(z0, StatePoint):
        if (z0.n, z0.m) != (n, m):
            raise ValueError(f"z0 has shape ({z0.n},{z0.m}), model needs ({n},{m})")
        B = stop - start
        x = np.empty((B, n))
        x[:] = z0.x
        y = np.empty((B, m))
        y[:] = z0.y
        return x, y
    x0, y0 = z0
    return (
        np.array(x0[start:stop], dtype=float, copy=True).reshape(stop - start, n),
        np.array(y0[start:stop], dtype=float, copy=True).reshape(stop - start, m),
    )


def _run_block(
    model: CoefficientModel,
    config: SimConfig,
    kind: str,
    z0,
    start: int,
    stop: int,
    stream_domain: int,
) -> PathBundle:
    n, m, d = model.n, model.m, model.d
    N = config.n_steps
    B = stop - start
    dt = config.dt
    clamp = config.clamp_mode == "post-step-clamp"
    singular = kind == "singular"
    floor = config.epsilon_floor

    x, y = _init_block(z0, n, m, start, stop)
    eps = block_normals(config.master_seed, start, B, N, d, domain=stream_domain)
    eps *= np.sqrt(dt)

    rec = config.recorded_steps()
    rec_pos = {int(k): r for r, k in enumerate(rec)}
    states = np.empty((B, len(rec), d))
    neg = np.zeros(B)
    hits = np.zeros(B, dtype=np.int64)

    def record(r):
        states[:, r, :n] = x
        states[:, r, n:] = y

    record(0)
    for k in range(N):
        xc = np.maximum(x, 0.0)
        bx = _as_batched(model.b(xc, y), (B, n)) if n else np.zeros((B, 0))
        ey = _as_batched(model.e(xc, y), (B, m)) if m else np.zeros((B, 0))
        if singular:
            xf = np.maximum(xc, floor)
            fv = _as_batched(model.f(xc, y), (B, d, n))
            hv = _as_batched(model.h(xf), (B, d, n))
            mix = (fv * hv).sum(axis=2)
            if n:
                bx = bx + np.sqrt(xc) * mix[:, :n]
            if m:
                ey = ey + mix[:, n:]
        sig = _sigma_batched(model.sigma(xc, y), B, d)
        dw = np.ascontiguousarray(eps[:, k, :])
        _kernels.em_step(x, y, bx, ey, sig, dw, dt, clamp, neg, hits)
        if model.after_step is not None:
            xn, yn = model.after_step(x, y)
            x[...] = xn
            y[...] = yn
        r = rec_pos.get(k + 1)
        if r is not None:
            record(r)

    return PathBundle(
        times=config.times(),
        states=states,
        increments=eps if config.retain_increments else None,
        negativity_log=neg,
        boundary_hit_count=hits,
        n=n,
        m=m,
        dt=dt,
        kind=kind,
        clamp_mode=config.clamp_mode,
        master_seed=config.master_seed,
        epsilon_floor=floor,
        path_offset=start,
    )


def _block_size(config: SimConfig, d: int) -> int:
    per_path = max(1, config.n_steps * d)
    return int(min(config.n_paths, max(256, _BLOCK_BUDGET_FLOATS // per_path)))


def iter_simulate(
    model: CoefficientModel,
    config: SimConfig,
    z0,
    kind: str = "standard",
    stream_domain: int = DOMAIN_PRIMARY,
    workers: int = 1,
    block_paths: int | None = None,
) -> Iterator[PathBundle]:
    """Yield per-block bundles in path order; the streaming simulation API.

    z0 is a StatePoint shared by all paths or a pair of arrays
    (x0: (P, n), y0: (P, m)) of per-path initial states. Block size and
    worker count never change the output paths.
    """
    if kind not in ("standard", "singular"):
        raise ValueError(f"unknown kind {kind!r}")
    if kind == "singular" and not model.is_singular:
        raise ValueError("model has no singular drift terms (f, h)")
    B = block_paths or _block_size(config, model.d)
    spans = [(s, min(s + B, config.n_paths)) for s in range(0, config.n_paths, B)]
    if workers <= 1 or len(spans) == 1:
        for start, stop in spans:
            yield _run_block(model, config, kind, z0, start, stop, stream_domain)
        return
    # bounded window of in-flight blocks so streaming callers stay bounded
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        spans_iter = iter(spans)
        for _ in range(2 * workers):
            span = next(spans_iter, None)
            if span is None:
                break
            pending.append(pool.submit(_run_block, model, config, kind, z0, *span, stream_domain))
        while pending:
            yield pending.popleft().result()
            span = next(spans_iter, None)
            if span is not None:
                pending.append(pool.submit(_run_block, model, config, kind, z0, *span, stream_domain))


def _collect(blocks: Iterator[PathBundle], config: SimConfig, d: int) -> PathBundle:
    retained = (len(config.recorded_steps()) + (config.n_steps if config.retain_increments else 0)) * d
    if config.n_paths * retained > _BUNDLE_BUDGET_FLOATS:
        raise EstimationError(
            "bundle too large to materialize; lower n_paths/record resolution "
            "or stream blocks via iter_simulate"
        )
    return PathBundle.concatenate(list(blocks))


def simulate_standard(
    model: CoefficientModel, config: SimConfig, z0, workers: int = 1
) -> PathBundle:
    """Simulate the standard equation (no singular drift)."""
    return _collect(iter_simulate(model, config, z0, "standard", workers=workers), config, model.d)


def simulate_singular(
    model: CoefficientModel, config: SimConfig, z0, workers: int = 1
) -> PathBundle:
    """Simulate the equation with the extra singular drift terms."""
    return _collect(iter_simulate(model, config, z0, "singular", workers=workers), config, model.d)


def step_standard(model: CoefficientModel, z: StatePoint, dt: float, dW: np.ndarray) -> tuple[StatePoint, RawPoint]:
    """One clamped Euler-Maruyama step from z; also returns the raw pre-clamp point."""
    n, m, d = model.n, model.m, model.d
    x = z.x[None, :].copy()
    y = z.y[None, :].copy()
    bx = _as_batched(model.b(x, y), (1, n)) if n else np.zeros((1, 0))
    ey = _as_batched(model.e(x, y), (1, m)) if m else np.zeros((1, 0))
    sig = _sigma_batched(model.sigma(x, y), 1, d)
    neg = np.zeros(1)
    hits = np.zeros(1, dtype=np.int64)
    pre = np.empty((1, n))
    dw = np.ascontiguousarray(np.asarray(dW, float).reshape(1, d))
    _kernels.em_step(x, y, bx, ey, sig, dw, dt, True, neg, hits, pre_x=pre)
    return StatePoint(x[0], y[0]), RawPoint(pre[0], y[0])


@dataclass
class BrownianReconstruction:
    """Increments recovered from states; zero rows at boundary steps."""

    increments: np.ndarray  # (P, N, d)
    interior: np.ndarray  # (P, N) bool, both step endpoints inside the orthant
    max_deviation: float  # vs stored increments over interior steps (nan if unknown)


def reconstruct_brownian(model: CoefficientModel, bundle: PathBundle) -> BrownianReconstruction:
    """Invert the Euler step: dW_k = varsigma(Z_k)^{-1} (dZ_k - drift(Z_k) dt).

    Steps touching the boundary (either endpoint with some x_i <= 0)
    contribute exactly zero, mirroring the indicator in the continuous
    identity. Raises SingularMatrixError when the row-scaled dispersion is
    singular at an interior step.
    """
    if not bundle.per_step_states():
        raise ValueError("reconstruction needs record_stride == 1 (states at every step)")
    if bundle.kind != "standard":
        raise ValueError("reconstruction is defined for standard-equation bundles")
    n, m, d = bundle.n, bundle.m, bundle.n + bundle.m
    P, R = bundle.states.shape[0], bundle.states.shape[1]
    N = R - 1
    dt = bundle.dt
    out = np.zeros((P, N, d))
    interior = np.ones((P, N), dtype=bool)
    max_dev = 0.0
    for k in range(N):
        zk = bundle.states[:, k, :]
        zk1 = bundle.states[:, k + 1, :]
        if n:
            mask = (zk[:, :n].min(axis=1) > 0.0) & (zk1[:, :n].min(axis=1) > 0.0)
        else:
            mask = np.ones(P, dtype=bool)
        interior[:, k] = mask
        if not mask.any():
            continue
        x = zk[mask, :n]
        y = zk[mask, n:]
        B = x.shape[0]
        bx = _as_batched(model.b(x, y), (B, n)) if n else np.zeros((B, 0))
        ey = _as_batched(model.e(x, y), (B, m)) if m else np.zeros((B, 0))
        vs = _sigma_batched(model.sigma(x, y), B, d)
        if vs.ndim == 2:
            vs = np.broadcast_to(vs, (B, d, d))
        vs = vs.copy()  # row scaling must not mutate model-owned arrays
        if n:
            vs[:, :n, :] *= np.sqrt(x)[:, :, None]
        dz = zk1[mask] - zk[mask]
        rhs = dz - np.concatenate([bx, ey], axis=1) * dt
        try:
            sol = np.linalg.solve(vs, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(
                f"row-scaled dispersion singular at interior step {k}"
            ) from exc
        if not np.isfinite(sol).all():
            raise SingularMatrixError(f"non-finite reconstruction at step {k}")
        out[mask, k, :] = sol
        if bundle.increments is not None:
            dev = np.abs(sol - bundle.increments[mask, k, :]).max() if B else 0.0
            max_dev = max(max_dev, float(dev))
    return BrownianReconstruction(
        increments=out,
        interior=interior,
        max_deviation=max_dev if bundle.increments is not None else float("nan"),
    )


def write_paths_csv(bundle: PathBundle, path) -> None:
    """Columns: path, time, x_1..x_n, y_1..y_m."""
    header = ["path", "time"] + [f"x_{i+1}" for i in range(bundle.n)] + [
        f"y_{l+1}" for l in range(bundle.m)
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p in range(bundle.n_paths):
            pid = bundle.path_offset + p
            for r, t in enumerate(bundle.times):
                writer.writerow([pid, repr(float(t))] + [repr(float(v)) for v in bundle.states[p, r]])


def write_increments_csv(bundle: PathBundle, path) -> None:
    """Columns: path, time (left step endpoint), dW_1..dW_d."""
    if bundle.increments is None:
        raise ValueError("bundle has no retained increments")
    d = bundle.n + bundle.m
    header = ["path", "time"] + [f"dW_{j+1}" for j in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p in range(bundle.n_paths):
            pid = bundle.path_offset + p
            for k in range(bundle.increments.shape[1]):
                writer.writerow(
                    [pid, repr(float(k * bundle.dt))]
                    + [repr(float(v)) for v in bundle.increments[p, k]]
                )
