"""Named coefficient models, including the negative controls.

Every builder returns ``(model, z0)``. Positive models satisfy the
structural assumptions (validated in the test suite); the negative
controls deliberately break one property each so that validators and
diagnostics can be exercised on their FAIL paths:

- ``neg-drift-1d``      inward drift violated (b < 0 on the boundary),
- ``runmax-drift-1d``   drift depends on the running maximum (non-Markov
                        in the observable coordinate),
- ``indefinite-2d``     boundary ellipticity form indefinite near x = 0.
"""

from __future__ import annotations

import importlib
from dataclasses import replace

import numpy as np

from .errors import ConfigError
from .geometry import StatePoint
from .model import CoefficientModel, DecomposedDiffusion

__all__ = ["CATALOG", "build", "catalog_names", "smooth_bump", "log_singularity"]


def smooth_bump(r0: float):
    """C-infinity cutoff: 1 on [0, r0/2], 0 on [r0, inf), monotone between."""

    def _b(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    def bump(s):
        s = np.asarray(s, dtype=float)
        t = (r0 - s) / (r0 / 2.0)  # >=1 deep inside, <=0 outside
        t = np.clip(t, 0.0, 1.0)
        num = _b(t)
        den = num + _b(1.0 - t)
        return num / den

    return bump


def log_singularity(r0: float):
    """s -> ln(s) * bump(s): the logarithmic singular factor."""
    bump = smooth_bump(r0)

    def h_scalar(s):
        s = np.asarray(s, dtype=float)
        return np.log(s) * bump(s)

    return h_scalar


def _const_drift(vec):
    vec = np.asarray(vec, dtype=float)

    def drift(x, y):
        return vec

    return drift


def _const_matrix(mat):
    mat = np.ascontiguousarray(np.asarray(mat, dtype=float))

    def sigma(x, y):
        return mat

    return sigma


def _empty_free(x, y):
    return np.zeros(0)


def const_wf_1d(b: float = 1.0, sigma: float = 1.0, x0: float = 0.5):
    """dX = b dt + sigma sqrt(X) dW on [0, inf); constant coefficients."""
    s = float(sigma)
    decomp = DecomposedDiffusion(
        n=1,
        m=0,
        alpha=lambda x, y: np.array([0.5 * s * s]),
        alpha_tilde=lambda x, y: np.zeros((1, 1)),
    )
    model = CoefficientModel(
        n=1,
        m=0,
        b=_const_drift([b]),
        e=_empty_free,
        sigma=_const_matrix([[s]]),
        declared_b0=float(b) if b > 0 else None,
        declared_K=max(abs(float(b)), abs(s)),
        declared_alpha=0.5,
        decomposition=decomp,
        constant_coefficients=True,
        name="const-wf-1d",
    )
    return model, StatePoint([x0], [])


def cir_like(kappa: float = 1.0, theta: float = 0.5, sigma: float = 1.0, x0: float = 0.3):
    """dX = kappa (theta - X) dt + sigma sqrt(X) dW; mean reverting."""
    s = float(sigma)

    def b(x, y):
        return kappa * (theta - x)

    decomp = DecomposedDiffusion(
        n=1,
        m=0,
        alpha=lambda x, y: np.array([0.5 * s * s]),
        alpha_tilde=lambda x, y: np.zeros((1, 1)),
    )
    model = CoefficientModel(
        n=1,
        m=0,
        b=b,
        e=_empty_free,
        sigma=_const_matrix([[s]]),
        declared_b0=kappa * theta if kappa * theta > 0 else None,
        declared_alpha=0.5,
        decomposition=decomp,
        name="cir-like",
    )
    return model, StatePoint([x0], [])


def wf_with_free_coord(
    b: float = 1.0,
    e: float = 0.0,
    sx: float = 1.0,
    sy: float = 1.0,
    c: float = 0.5,
    x0: float = 0.5,
    y0: float = 0.0,
):
    """Orthant coordinate coupled to a free coordinate.

    sigma(z) = [[sx, c sqrt(x)], [0, sy]]: the cross term vanishes like
    sqrt(x) at the boundary, which is exactly what the decomposition
    a_{12} = c_11 sqrt(x)/2 requires.
    """

    def sigma(x, y):
        B = x.shape[0]
        out = np.zeros((B, 2, 2))
        out[:, 0, 0] = sx
        out[:, 0, 1] = c * np.sqrt(np.maximum(x[:, 0], 0.0))
        out[:, 1, 1] = sy
        return out

    decomp = DecomposedDiffusion(
        n=1,
        m=1,
        alpha=lambda x, y: np.array([0.5 * sx * sx]),
        alpha_tilde=lambda x, y: np.array([[0.5 * c * c]]),
        c=lambda x, y: np.array([[c * sy]]),
        a_free=lambda x, y: np.array([[0.5 * sy * sy]]),
    )
    model = CoefficientModel(
        n=1,
        m=1,
        b=_const_drift([b]),
        e=_const_drift([e]),
        sigma=sigma,
        declared_b0=float(b) if b > 0 else None,
        declared_alpha=0.5,
        decomposition=decomp,
        name="wf-with-free-coord",
    )
    return model, StatePoint([x0], [y0])


def log_drift(
    b: float = 1.0,
    sigma: float = 1.0,
    f0: float = 0.5,
    r0: float = 0.5,
    q: float = 0.1,
    K0: float = 3.7,
    x0: float = 0.5,
):
    """const-wf-1d plus the logarithmic singular drift.

    dX = (b + sqrt(X) f0 h(X)) dt + sigma sqrt(X) dW with
    h(s) = ln(s) bump(s), bump supported in [0, r0]. Near the boundary
    the extra drift pulls toward 0 (ln s < 0), competing with b >= b0.
    The default mixing strength keeps importance weights light-tailed
    (effective sample size well above half the path count), where the
    analytic KS threshold with n_eff = ESS behaves nominally.
    """
    base, z0 = const_wf_1d(b=b, sigma=sigma, x0=x0)
    h_scalar = log_singularity(r0)

    def f(x, y):
        return np.full((1, 1), float(f0))

    def h(s):
        vals = h_scalar(s)  # (..., n)
        return vals[..., None, :]  # same factor for every row

    model = replace(
        base,
        f=f,
        h=h,
        declared_K0=float(K0),
        declared_q=float(q),
        name="log-drift",
    )
    return model, z0


def neg_drift_1d(sigma: float = 1.0, x0: float = 0.5):
    """Negative control: b = -1 pushes out of the orthant at the boundary."""
    model = CoefficientModel(
        n=1,
        m=0,
        b=_const_drift([-1.0]),
        e=_empty_free,
        sigma=_const_matrix([[float(sigma)]]),
        declared_K=max(1.0, abs(float(sigma))),
        constant_coefficients=True,
        name="neg-drift-1d",
    )
    return model, StatePoint([x0], [])


def runmax_drift_1d(
    kappa: float = 8.0,
    theta: float = 0.1,
    gamma: float = 7.0,
    sx: float = 1.5,
    x0: float | None = None,
):
    """Negative control: drift feeds on the running maximum of X.

    dX = (kappa (theta - X) + gamma M) dt + sx sqrt(X) dW with
    M = running max of X, kept in a hidden free coordinate updated after
    every step. The pair (X, M) is Markov but X alone is not: the
    mean reversion makes M remember old excursions that still push the
    drift. Restarting from the observable state resets the memory
    (restart_state), which visibly shifts the terminal law.
    """
    start = theta if x0 is None else x0

    def b(x, y):
        return kappa * (theta - x) + gamma * y

    def after_step(x, y):
        return x, np.maximum(y, x)

    def restart_state(x, y):
        return x, x.copy()

    def sigma(x, y):
        return np.array([[sx, 0.0], [0.0, 0.0]])

    model = CoefficientModel(
        n=1,
        m=1,
        b=b,
        e=_const_drift([0.0]),
        sigma=sigma,
        after_step=after_step,
        restart_state=restart_state,
        name="runmax-drift-1d",
    )
    return model, StatePoint([start], [start])


def indefinite_2d(alpha: float = 0.1, beta: float = 0.3, x0: float = 0.5):
    """Negative control: boundary ellipticity form indefinite near x = 0.

    a(z) = [[alpha, g], [g, alpha]] with
    g = beta sqrt(x1 x2) / (1 + (beta/alpha) x1 x2): a(z) stays positive
    definite for beta <= 4 alpha (so sigma = sqrt(2a) exists globally),
    while the region form at the corner sees the unscaled coupling beta
    and its smallest eigenvalue is alpha - beta < 0.
    """
    if not 0 < beta <= 4 * alpha:
        raise ConfigError("need 0 < beta <= 4*alpha for a globally valid dispersion")

    def _g(x):
        prod = np.maximum(x[..., 0], 0.0) * np.maximum(x[..., 1], 0.0)
        return beta * np.sqrt(prod) / (1.0 + (beta / alpha) * prod)

    def sigma(x, y):
        # closed-form sqrt of 2a for the symmetric [[p, r], [r, p]] shape
        p = 2.0 * alpha
        r = 2.0 * _g(x)
        lo = np.sqrt(p - r)
        hi = np.sqrt(p + r)
        B = x.shape[0]
        out = np.empty((B, 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = 0.5 * (hi + lo)
        out[:, 0, 1] = out[:, 1, 0] = 0.5 * (hi - lo)
        return out

    def alpha_tilde(x, y):
        prod = np.maximum(x[..., 0], 0.0) * np.maximum(x[..., 1], 0.0)
        off = beta / (1.0 + (beta / alpha) * prod)
        B = x.shape[0]
        out = np.zeros((B, 2, 2))
        out[:, 0, 1] = out[:, 1, 0] = off
        return out

    decomp = DecomposedDiffusion(
        n=2,
        m=0,
        alpha=lambda x, y: np.array([alpha, alpha]),
        alpha_tilde=alpha_tilde,
    )
    model = CoefficientModel(
        n=2,
        m=0,
        b=_const_drift([1.0, 1.0]),
        e=_empty_free,
        sigma=sigma,
        declared_b0=1.0,
        declared_alpha=0.5,
        decomposition=decomp,
        name="indefinite-2d",
    )
    return model, StatePoint([x0, x0], [])


CATALOG = {
    "const-wf-1d": const_wf_1d,
    "cir-like": cir_like,
    "wf-with-free-coord": wf_with_free_coord,
    "log-drift": log_drift,
    "neg-drift-1d": neg_drift_1d,
    "runmax-drift-1d": runmax_drift_1d,
    "indefinite-2d": indefinite_2d,
}


def catalog_names() -> list[str]:
    return sorted(CATALOG)


def build(name: str, params: dict | None = None):
    """Build (model, z0) from a catalog name or 'custom' with a factory path."""
    params = dict(params or {})
    if name == "custom":
        path = params.pop("factory", None)
        if not path or ":" not in path:
            raise ConfigError("custom model needs params.factory = 'module:function'")
        mod_name, fn_name = path.split(":", 1)
        try:
            factory = getattr(importlib.import_module(mod_name), fn_name)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot load custom factory {path!r}: {exc}") from exc
        return factory(**params)
    try:
        builder = CATALOG[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; catalog: {', '.join(catalog_names())} or 'custom'"
        ) from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from exc
