"""Monte-Carlo probes of the quantitative claims: additive-functional
smallness, exponential moments and their chaining bound, support
preservation, martingale-problem residuals, marginal agreement and
restart consistency.

Every estimate carries a standard error from independent-path variation;
verdicts never compare bare point estimates. Path integrals use the
trapezoid rule for absolutely continuous integrands and the left-endpoint
rule for stochastic sums, matching the filtration alignment of the Euler
scheme.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable

import numpy as np

from ._rng import DOMAIN_PRIMARY, DOMAIN_RESTART
from .engine import PathBundle, SimConfig, iter_simulate
from .errors import EstimationError, ParameterInfeasibleError
from .geometry import StatePoint
from .girsanov import ess
from .model import CoefficientModel, TestFunction, generator_values
from .report import FAIL, PASS, DiagnosticReport, leq_verdict

__all__ = [
    "khasminskii_estimate",
    "khasminskii_bound",
    "novikov_estimate",
    "novikov_chain_bound",
    "support_report",
    "martingale_residual",
    "marginal_compare",
    "weighted_ks_statistic",
    "ks_critical_value",
    "restart_consistency",
]

FLOOR_SWEEP = (1e-6, 1e-8, 1e-10)


def _prefix_slice(times: np.ndarray, horizon: float | None) -> int:
    if horizon is None:
        return len(times)
    stop = int(np.searchsorted(times, horizon * (1.0 + 1e-12), side="right"))
    if stop < 2:
        raise ValueError(f"horizon {horizon} leaves fewer than two grid points")
    return stop


def _power_integrals(bundle: PathBundle, q: float, lam: float, floor: float, stop: int) -> np.ndarray:
    """Trapezoid of lam * sum_i max(X_i, floor)^(-2q) per path."""
    x = np.maximum(bundle.x[:, :stop, :], floor)
    integrand = lam * (x ** (-2.0 * q)).sum(axis=2)
    return np.trapezoid(integrand, bundle.times[:stop], axis=1)


def khasminskii_estimate(
    bundle: PathBundle,
    q: float,
    lam: float,
    epsilon_floor: float = 1e-8,
    floor_sweep=FLOOR_SWEEP,
    horizon: float | None = None,
    bound: float | None = None,
) -> DiagnosticReport:
    """Mean over paths of the additive functional int lam sum_i X_i^{-2q} dt.

    Sensitivity to the evaluation floor is reported across a decade sweep;
    with ``bound`` given (the smallness target delta) the verdict compares
    against it, otherwise the report is informational.
    """
    if bundle.n == 0:
        raise ValueError("model has no orthant coordinates")
    stop = _prefix_slice(bundle.times, horizon)
    ints = _power_integrals(bundle, q, lam, epsilon_floor, stop)
    est = float(ints.mean())
    se = float(ints.std(ddof=1) / math.sqrt(len(ints))) if len(ints) > 1 else float("inf")
    sweep = {
        repr(f): float(_power_integrals(bundle, q, lam, f, stop).mean()) for f in floor_sweep
    }
    verdict = leq_verdict(est, se, bound) if bound is not None else PASS
    return DiagnosticReport(
        name="khasminskii-smallness",
        estimate=est,
        stderr=se,
        bound_or_tolerance=bound if bound is not None else float("inf"),
        verdict=verdict,
        metadata={
            "q": q,
            "lambda": lam,
            "T": float(bundle.times[stop - 1]),
            "dt": bundle.dt,
            "n_paths": bundle.n_paths,
            "epsilon_floor": epsilon_floor,
            "floor_sweep": sweep,
            "master_seed": bundle.master_seed,
        },
    )


def khasminskii_bound(
    r: float, T: float, q: float, b0: float, rho: float, K: float, n: int, m: int, C: float
) -> float:
    """Closed-form smallness bound for one coordinate's power integral:

        (r^{1-2q} + C r^{-2q} T) / ((1-2q) (b0/(1+rho) - q (n+m) K^2))

    valid for q in (0, 1/4), r in (0, 1) and a positive denominator. C is
    the unspecified proof constant, to be fitted out-of-sample.
    """
    if not 0.0 < q < 0.25:
        raise ParameterInfeasibleError("q must lie in (0, 1/4)")
    if not 0.0 < r < 1.0:
        raise ParameterInfeasibleError("r must lie in (0, 1)")
    if rho < 0 or T <= 0 or C < 0:
        raise ParameterInfeasibleError("need rho >= 0, T > 0, C >= 0")
    gap = b0 / (1.0 + rho) - q * (n + m) * K * K
    denom = (1.0 - 2.0 * q) * gap
    if denom <= 0.0:
        raise ParameterInfeasibleError(
            f"b0/(1+rho) - q(n+m)K^2 = {gap:.6g} must be positive; shrink q or rho"
        )
    return (r ** (1.0 - 2.0 * q) + C * r ** (-2.0 * q) * T) / denom


def novikov_estimate(
    bundle: PathBundle,
    q: float,
    lam: float,
    epsilon_floor: float = 1e-8,
    floor_sweep=FLOOR_SWEEP,
    horizon: float | None = None,
    bound: float | None = None,
) -> DiagnosticReport:
    """Mean over paths of exp(int lam sum_i X_i^{-2q} dt), the exponential moment.

    The 0.999 quantile of the pathwise integral doubles as overflow
    health: it must stay far below the log-weight cap for the estimate to
    be trustworthy.
    """
    if bundle.n == 0:
        raise ValueError("model has no orthant coordinates")
    stop = _prefix_slice(bundle.times, horizon)
    ints = _power_integrals(bundle, q, lam, epsilon_floor, stop)
    vals = np.exp(ints)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
    sweep = {
        repr(f): float(np.exp(_power_integrals(bundle, q, lam, f, stop)).mean())
        for f in floor_sweep
    }
    verdict = leq_verdict(est, se, bound) if bound is not None else PASS
    return DiagnosticReport(
        name="novikov-moment",
        estimate=est,
        stderr=se,
        bound_or_tolerance=bound if bound is not None else float("inf"),
        verdict=verdict,
        metadata={
            "q": q,
            "lambda": lam,
            "T": float(bundle.times[stop - 1]),
            "dt": bundle.dt,
            "n_paths": bundle.n_paths,
            "epsilon_floor": epsilon_floor,
            "integral_q999": float(np.quantile(ints, 0.999)),
            "floor_sweep": sweep,
            "master_seed": bundle.master_seed,
        },
    )


def novikov_chain_bound(delta: float, T: float, T_delta: float) -> float:
    """Window-chaining bound (1 - delta)^(-ceil(T / T_delta)).

    If the exponential moment over one window of length T_delta is at most
    1/(1-delta) uniformly in the start point, iterating over windows
    bounds the horizon-T moment by this value.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if T <= 0 or T_delta <= 0:
        raise ValueError("T and T_delta must be positive")
    k = math.ceil(T / T_delta - 1e-12)
    return (1.0 - delta) ** (-k)


def support_report(bundle: PathBundle, c_tol: float) -> DiagnosticReport:
    """Pre-clamp negativity quantile against the sqrt(dt) envelope c_tol sqrt(dt)."""
    neg = bundle.negativity_log
    quant = float(np.quantile(neg, 0.999))
    tol = c_tol * math.sqrt(bundle.dt)
    n_steps = int(round(bundle.times[-1] / bundle.dt))
    hit_freq = float(bundle.boundary_hit_count.sum() / (bundle.n_paths * max(n_steps, 1)))
    return DiagnosticReport(
        name="support-negativity",
        estimate=quant,
        stderr=0.0,
        bound_or_tolerance=tol,
        verdict=PASS if quant <= tol else FAIL,
        metadata={
            "max_negativity": float(neg.max()),
            "boundary_hit_frequency": hit_freq,
            "dt": bundle.dt,
            "clamp_mode": bundle.clamp_mode,
            "n_paths": bundle.n_paths,
            "c_tol": c_tol,
            "master_seed": bundle.master_seed,
        },
    )


def martingale_residual(
    model: CoefficientModel,
    u: TestFunction,
    z0: StatePoint,
    config: SimConfig,
    c_dt: float = 0.0,
    workers: int = 1,
) -> DiagnosticReport:
    """E[u(Z_T)] - u(z0) - E[int_0^T (L u)(Z_s) ds], pathwise and streamed.

    Zero in expectation for solutions of the martingale problem; the
    discretization bias budget is c_dt * dt on top of 3 stderr.
    """
    cfg = replace(config, record_stride=1, retain_increments=False)
    n = model.n
    u0 = float(np.asarray(u.value(z0.x[None, :], z0.y[None, :])).reshape(-1)[0])
    dt = cfg.dt
    residuals = []
    for block in iter_simulate(model, cfg, z0, "standard", workers=workers):
        B, R, _ = block.states.shape
        acc = np.zeros(B)
        for k in range(R - 1):
            xs = np.maximum(block.states[:, k, :n], 0.0)
            ys = block.states[:, k, n:]
            acc += generator_values(model, u, xs, ys) * dt
        xT = np.maximum(block.states[:, -1, :n], 0.0)
        yT = block.states[:, -1, n:]
        uT = np.asarray(u.value(xT, yT), float).reshape(B)
        residuals.append(uT - u0 - acc)
    resid = np.concatenate(residuals)
    est = float(resid.mean())
    se = float(resid.std(ddof=1) / math.sqrt(len(resid)))
    tol = 3.0 * se + c_dt * dt
    return DiagnosticReport(
        name="martingale-residual",
        estimate=est,
        stderr=se,
        bound_or_tolerance=tol,
        verdict=PASS if abs(est) <= tol else FAIL,
        metadata={
            "dt": dt,
            "n_paths": cfg.n_paths,
            "c_dt": c_dt,
            "u0": u0,
            "master_seed": cfg.master_seed,
        },
    )


def ks_critical_value(alpha: float, n1: float, n2: float) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value.

    c(alpha) sqrt((n1+n2)/(n1 n2)) with c = sqrt(-ln(alpha/2)/2); effective
    sample sizes may be fractional (weighted samples).
    """
    if n1 <= 0 or n2 <= 0:
        raise ValueError("sample sizes must be positive")
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def weighted_ks_statistic(values_a, values_b, weights_a=None, weights_b=None) -> float:
    """sup-distance between the (weight-adjusted) empirical CDFs."""
    a = np.asarray(values_a, float)
    b = np.asarray(values_b, float)
    if a.size == 0 or b.size == 0:
        raise EstimationError("empty sample")
    if a.min() == a.max() or b.min() == b.max():
        raise EstimationError("degenerate (constant) sample")

    def _ecdf(vals, w):
        order = np.argsort(vals, kind="mergesort")
        v = vals[order]
        if w is None:
            cum = np.arange(1, len(v) + 1, dtype=float) / len(v)
        else:
            ws = np.asarray(w, float)[order]
            cum = np.cumsum(ws)
            cum /= cum[-1]
        return v, cum

    va, ca = _ecdf(a, weights_a)
    vb, cb = _ecdf(b, weights_b)
    grid = np.concatenate([va, vb])
    grid.sort(kind="mergesort")
    fa = np.concatenate([[0.0], ca])[np.searchsorted(va, grid, side="right")]
    fb = np.concatenate([[0.0], cb])[np.searchsorted(vb, grid, side="right")]
    return float(np.abs(fa - fb).max())


def marginal_compare(
    values_a,
    values_b,
    weights_a=None,
    alpha: float = 0.01,
    name: str = "marginal-compare",
) -> DiagnosticReport:
    """Weighted two-sample KS test of equal one-dimensional marginals.

    Sample A may carry importance weights; its effective sample size
    replaces the raw count in the critical value.
    """
    a = np.asarray(values_a, float)
    b = np.asarray(values_b, float)
    stat = weighted_ks_statistic(a, b, weights_a)
    n_eff = ess(weights_a) if weights_a is not None else float(len(a))
    thr = ks_critical_value(alpha, n_eff, float(len(b)))
    return DiagnosticReport(
        name=name,
        estimate=stat,
        stderr=0.0,
        bound_or_tolerance=thr,
        verdict=PASS if stat <= thr else FAIL,
        metadata={
            "alpha": alpha,
            "n_eff_a": n_eff,
            "n_a": int(len(a)),
            "n_b": int(len(b)),
        },
    )


def restart_consistency(
    model: CoefficientModel,
    z0: StatePoint,
    t_split: float,
    T: float,
    config: SimConfig,
    kind: str = "standard",
    observable: Callable[[np.ndarray], np.ndarray] | None = None,
    alpha: float = 0.01,
) -> DiagnosticReport:
    """Compare the law of Z_T continued past t_split vs restarted there.

    Branch A runs each path straight to T. Branch B replays the same
    streams to t_split (bitwise the same states), then continues from the
    realized states with fresh streams; models with hidden pathwise
    memory re-initialize it through their restart hook. Agreement of the
    terminal marginals is judged by the KS test. A deterministic split
    probes the flow property, not stopping times.
    """
    if not 0.0 <= t_split < T:
        raise ValueError("need 0 <= t_split < T")
    if observable is None:
        observable = lambda s: s[:, 0]  # noqa: E731
    base = replace(config, horizon_T=T, record_stride=max(1, int(round(T / config.dt))), retain_increments=False)
    full = _collect_terminal(model, base, z0, kind, DOMAIN_PRIMARY)
    if t_split > 0.0:
        pre_cfg = replace(
            config,
            horizon_T=t_split,
            record_stride=max(1, int(round(t_split / config.dt))),
            retain_increments=False,
        )
        pre = _collect_terminal(model, pre_cfg, z0, kind, DOMAIN_PRIMARY)
        x_mid = np.maximum(pre[:, : model.n], 0.0)
        y_mid = pre[:, model.n :]
    else:
        x_mid = np.tile(z0.x, (config.n_paths, 1))
        y_mid = np.tile(z0.y, (config.n_paths, 1))
    if model.restart_state is not None:
        x_mid, y_mid = model.restart_state(x_mid, y_mid)
    rest_cfg = replace(
        config,
        horizon_T=T - t_split if t_split > 0.0 else T,
        record_stride=max(1, int(round((T - t_split) / config.dt))),
        retain_increments=False,
    )
    restarted = _collect_terminal(model, rest_cfg, (x_mid, y_mid), kind, DOMAIN_RESTART)
    rep = marginal_compare(
        observable(full), observable(restarted), alpha=alpha, name="restart-consistency"
    )
    rep.metadata.update(
        {
            "t_split": t_split,
            "T": T,
            "model": model.name,
            "dt": config.dt,
            "n_paths": config.n_paths,
            "master_seed": config.master_seed,
        }
    )
    return rep


def _collect_terminal(model, config, z0, kind, domain) -> np.ndarray:
    outs = []
    for block in iter_simulate(model, config, z0, kind, stream_domain=domain):
        outs.append(block.states[:, -1, :])
    return np.concatenate(outs, axis=0)
