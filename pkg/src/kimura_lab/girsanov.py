"""Change-of-measure machinery: drift-change fields, exponential weights,
reweighted expectations.

The drift-change field is theta = sigma^{-1} xi with
xi_i = sum_j f_ij h_ij(x_j). Adding the singular drift to a standard path
measure multiplies path probabilities by
exp(int theta . dW_hat - 1/2 int |theta|^2 dt) where W_hat drives the
standard equation; removing it uses the opposite sign against the
singular equation's own Brownian motion W = W_hat - int theta dt. Weights
are accumulated in log space; a path whose running log-weight leaves
[-700, 700] is excluded and counted, which is itself a health signal for
the exponential-moment condition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .engine import PathBundle, SimConfig, iter_simulate
from .errors import EstimationError, ModelViolationError
from .geometry import StatePoint
from .model import CoefficientModel

__all__ = [
    "WeightedPathBundle",
    "DriftChangeSpec",
    "theta_eval",
    "theta_values",
    "default_lambda",
    "drift_change_from_model",
    "accumulate_log_weight",
    "reweighted_expectation",
    "ReweightResult",
    "reweighted_terminal_sample",
    "ess",
    "write_weights_csv",
]

STANDARD_TO_SINGULAR = "standard-to-singular"
SINGULAR_TO_STANDARD = "singular-to-standard"

LOG_WEIGHT_CAP = 700.0


@dataclass
class WeightedPathBundle:
    """Paths plus cumulative log Radon-Nikodym weights at recorded times.

    ``retained`` marks paths whose running log-weight stayed finite and
    inside +-LOG_WEIGHT_CAP; the rest are excluded from estimates but
    counted in ``excluded_fraction``.
    """

    base: PathBundle
    log_weights: np.ndarray  # (P, R), starts at 0
    direction: str
    retained: np.ndarray  # (P,) bool

    @property
    def n_paths(self) -> int:
        return self.base.n_paths

    @property
    def excluded_fraction(self) -> float:
        return 1.0 - float(self.retained.mean())

    def weights(self) -> np.ndarray:
        """Terminal weights of retained paths."""
        return np.exp(self.log_weights[self.retained, -1])


@dataclass(frozen=True)
class DriftChangeSpec:
    """The drift-change field and its declared singularity envelope.

    ``xi``/``theta`` follow the batched (x, y) convention; the envelope
    claim is |theta(z)| <= lambda_bound * sum_i x_i^{-q}.
    """

    xi: Callable
    theta: Callable
    lambda_bound: float
    q: float


def theta_values(model: CoefficientModel, x, y, epsilon_floor: float) -> np.ndarray:
    """theta = sigma^{-1} xi on a batch of states, evaluated at the floored state."""
    if not model.is_singular:
        raise ValueError("model has no singular drift")
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    B = x.shape[0]
    n, d = model.n, model.d
    xf = np.maximum(x, epsilon_floor)
    fv = np.broadcast_to(np.asarray(model.f(xf, y), float), (B, d, n))
    hv = np.broadcast_to(np.asarray(model.h(xf), float), (B, d, n))
    xi = (fv * hv).sum(axis=2)
    sig = np.asarray(model.sigma(xf, y), float)
    try:
        if sig.ndim == 2:
            theta = np.linalg.solve(sig, xi.T).T
        else:
            theta = np.linalg.solve(sig, xi[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise ModelViolationError("sigma singular at an interior (floored) state") from exc
    if not np.isfinite(theta).all():
        raise ModelViolationError("non-finite drift-change field")
    return theta


def theta_eval(model: CoefficientModel, z: StatePoint, epsilon_floor: float = 0.0) -> np.ndarray:
    """theta at a single state point, shape (d,)."""
    if model.n and z.x.min() <= 0.0 and epsilon_floor <= 0.0:
        raise ValueError("theta needs an interior point or a positive floor")
    return theta_values(model, z.x[None, :], z.y[None, :], epsilon_floor)[0]


def default_lambda(model: CoefficientModel, samples) -> float:
    """Envelope constant: K0 times the largest column norm of sigma^{-1} f.

    The declared bounds give |theta| <= sum_j |(sigma^{-1}f) e_j| |h_.j|
    <= (max_j |(sigma^{-1}f) e_j|) K0 sum_j x_j^{-q}, so this Lambda makes
    the envelope hold wherever the declarations do (it is at most K0^2).
    """
    if model.declared_K0 is None:
        raise ValueError("model does not declare K0")
    worst = 0.0
    for z in samples:
        x, y = z.x[None, :], z.y[None, :]
        xf = np.maximum(x, 1e-12)
        fv = np.broadcast_to(np.asarray(model.f(xf, y), float), (1, model.d, model.n))[0]
        sig = np.asarray(model.sigma(xf, y), float)
        if sig.ndim == 3:
            sig = sig[0]
        sf = np.linalg.solve(sig, fv)
        worst = max(worst, float(np.linalg.norm(sf, axis=0).max()))
    return model.declared_K0 * worst


def drift_change_from_model(
    model: CoefficientModel, lambda_bound: float | None = None, samples=None
) -> DriftChangeSpec:
    """Bundle theta/xi callables with an envelope constant for the model."""
    if not model.is_singular:
        raise ValueError("model has no singular drift")
    if lambda_bound is None:
        if samples is None:
            raise ValueError("need either lambda_bound or samples to calibrate it")
        lambda_bound = default_lambda(model, samples)

    def xi(x, y):
        x = np.asarray(x, float)
        B = x.shape[0]
        fv = np.broadcast_to(np.asarray(model.f(x, y), float), (B, model.d, model.n))
        hv = np.broadcast_to(np.asarray(model.h(np.asarray(x, float)), float), (B, model.d, model.n))
        return (fv * hv).sum(axis=2)

    def theta(x, y):
        return theta_values(model, x, y, epsilon_floor=0.0)

    return DriftChangeSpec(xi=xi, theta=theta, lambda_bound=float(lambda_bound), q=model.declared_q)


def accumulate_log_weight(
    bundle: PathBundle, model: CoefficientModel, direction: str
) -> WeightedPathBundle:
    """Cumulative log-weights along discrete paths.

    standard-to-singular:  log M(t_k) = sum_{j<k} theta_j . dW_hat_j - |theta_j|^2 dt / 2
    singular-to-standard:  log M(t_k) = sum_{j<k} -theta_j . dW_j - |theta_j|^2 dt / 2

    where W_hat drives the standard equation and W = W_hat - int theta dt
    drives the singular one. The bundle's stored increments belong to the
    equation it simulated (bundle.kind); the other Brownian's increments
    are recovered through that identity, so a round trip over the same
    path cancels exactly.
    """
    if direction not in (STANDARD_TO_SINGULAR, SINGULAR_TO_STANDARD):
        raise ValueError(f"unknown direction {direction!r}")
    if bundle.increments is None:
        raise ValueError("bundle must retain increments")
    if not bundle.per_step_states():
        raise ValueError("weight accumulation needs record_stride == 1")
    n = bundle.n
    P, R = bundle.states.shape[:2]
    N = R - 1
    dt = bundle.dt
    floor = max(bundle.epsilon_floor, 1e-300)
    logw = np.zeros((P, R))
    ok = np.ones(P, dtype=bool)
    for k in range(N):
        xs = np.maximum(bundle.states[:, k, :n], 0.0)
        ys = bundle.states[:, k, n:]
        th = theta_values(model, xs, ys, floor)
        dw = bundle.increments[:, k, :]
        if direction == STANDARD_TO_SINGULAR:
            dw_hat = dw if bundle.kind == "standard" else dw + th * dt
            term = (th * dw_hat).sum(axis=1) - 0.5 * (th * th).sum(axis=1) * dt
        else:
            dw_sing = dw if bundle.kind == "singular" else dw - th * dt
            term = -(th * dw_sing).sum(axis=1) - 0.5 * (th * th).sum(axis=1) * dt
        logw[:, k + 1] = logw[:, k] + term
        ok &= np.isfinite(logw[:, k + 1]) & (np.abs(logw[:, k + 1]) <= LOG_WEIGHT_CAP)
    return WeightedPathBundle(base=bundle, log_weights=logw, direction=direction, retained=ok)


@dataclass
class ReweightResult:
    estimate: float
    stderr: float
    mean_weight: float
    ess: float
    n_retained: int
    n_excluded: int


def reweighted_expectation(
    wbundle: WeightedPathBundle,
    functional: Callable[[PathBundle], np.ndarray],
    normalization: str = "raw",
) -> ReweightResult:
    """Importance-weighted expectation of a path functional.

    raw:             mean of w F (the unnormalized change-of-measure identity)
    self-normalized: sum(w F) / sum(w), delta-method stderr
    """
    if normalization not in ("raw", "self-normalized"):
        raise ValueError(f"unknown normalization {normalization!r}")
    keep = wbundle.retained
    if not keep.any():
        raise EstimationError("all paths excluded by the weight cap")
    values = np.asarray(functional(wbundle.base), float)[keep]
    w = np.exp(wbundle.log_weights[keep, -1])
    P = w.shape[0]
    if normalization == "raw":
        prod = w * values
        est = float(prod.mean())
        se = float(prod.std(ddof=1) / np.sqrt(P)) if P > 1 else float("inf")
    else:
        est = float((w * values).sum() / w.sum())
        resid = w * (values - est) / w.mean()
        se = float(resid.std(ddof=1) / np.sqrt(P)) if P > 1 else float("inf")
    return ReweightResult(
        estimate=est,
        stderr=se,
        mean_weight=float(w.mean()),
        ess=ess(w),
        n_retained=int(P),
        n_excluded=int((~keep).sum()),
    )


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of nonnegative weights."""
    w = np.asarray(weights, float)
    if w.size == 0 or (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("weights sum to zero")
    return float(total * total / (w * w).sum())


def reweighted_terminal_sample(
    model: CoefficientModel,
    config: SimConfig,
    z0,
    observable: Callable[[np.ndarray], np.ndarray] | None = None,
    workers: int = 1,
    stream_domain: int = 0,
):
    """Stream standard-equation blocks and reweight them toward the singular law.

    Returns (values, log_weights, retained) over all paths, where values
    are the observable of the terminal state (default: first orthant
    coordinate). Memory stays bounded: per-step states and increments
    live only block by block.
    """
    if observable is None:
        observable = lambda s: s[:, 0]  # noqa: E731 - tiny default accessor
    cfg = replace(config, record_stride=1, retain_increments=True)
    vals, logs, kept = [], [], []
    for block in iter_simulate(model, cfg, z0, "standard", stream_domain=stream_domain, workers=workers):
        wb = accumulate_log_weight(block, model, STANDARD_TO_SINGULAR)
        vals.append(observable(block.states[:, -1, :]))
        logs.append(wb.log_weights[:, -1])
        kept.append(wb.retained)
    return np.concatenate(vals), np.concatenate(logs), np.concatenate(kept)


def write_weights_csv(wbundle: WeightedPathBundle, path) -> None:
    """Columns: path, time, log_weight."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "time", "log_weight"])
        base = wbundle.base
        for p in range(base.n_paths):
            pid = base.path_offset + p
            for r, t in enumerate(base.times):
                writer.writerow([pid, repr(float(t)), repr(float(wbundle.log_weights[p, r]))])
