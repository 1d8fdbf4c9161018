"""Coefficient bundles, derived matrices and assumption validators.

Coefficient callables are vectorized over a leading batch axis:

- ``b(x, y) -> (..., n)`` and ``e(x, y) -> (..., m)`` drift components,
- ``sigma(x, y) -> (d, d)`` (state independent) or ``(..., d, d)``,
- ``f(x, y) -> (..., d, n)`` mixing coefficients of the singular drift,
- ``h(s) -> (..., d, n)`` singular factors, entry [i, j] evaluated at
  ``s[..., j]`` (the caller floors s away from 0),

with ``x: (..., n)``, ``y: (..., m)`` and ``d = n + m``. Scalar or
unbatched returns are broadcast by the callers that need full arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    EstimationError,
    ModelViolationError,
    SingularMatrixError,
)
from .geometry import RegionIndex, StatePoint, region_of
from .report import FAIL, PASS, DiagnosticReport

__all__ = [
    "CoefficientModel",
    "DecomposedDiffusion",
    "TestFunction",
    "assemble_a",
    "assemble_varsigma",
    "assemble_D",
    "compute_q0",
    "check_drift_boundary",
    "check_ellipticity",
    "ellipticity_form_matrix",
    "estimate_K",
    "check_singular_bounds",
    "invert_sigma",
    "apply_generator",
    "generator_values",
    "validate_decomposition",
    "bump_function",
    "halton",
    "boundary_face_samples",
    "box_samples",
]


@dataclass(frozen=True)
class DecomposedDiffusion:
    """Analytic split of a = sigma sigma*/2 into boundary-adapted factors.

    a_ij            = delta_ij alpha_i + alpha_tilde_ij sqrt(x_i x_j)
    a_{i,n+l}       = c_il sqrt(x_i) / 2      (= a_{n+l,i})
    a_{n+l,n+k}     = a_free_lk
    """

    n: int
    m: int
    alpha: Callable  # (x, y) -> (..., n)
    alpha_tilde: Callable  # (x, y) -> (..., n, n)
    c: Optional[Callable] = None  # (x, y) -> (..., n, m)
    a_free: Optional[Callable] = None  # (x, y) -> (..., m, m)

    def assemble(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Reassembled a(z) with shape (..., d, d)."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        batch = x.shape[:-1]
        n, m = self.n, self.m
        d = n + m
        a = np.zeros(batch + (d, d))
        if n:
            sx = np.sqrt(np.maximum(x, 0.0))
            al = np.broadcast_to(np.asarray(self.alpha(x, y), float), batch + (n,))
            at = np.broadcast_to(np.asarray(self.alpha_tilde(x, y), float), batch + (n, n))
            a[..., :n, :n] = at * sx[..., :, None] * sx[..., None, :]
            idx = np.arange(n)
            a[..., idx, idx] += al
            if m:
                cv = np.broadcast_to(np.asarray(self.c(x, y), float), batch + (n, m))
                cross = 0.5 * cv * sx[..., :, None]
                a[..., :n, n:] = cross
                a[..., n:, :n] = np.swapaxes(cross, -1, -2)
        if m:
            af = np.broadcast_to(np.asarray(self.a_free(x, y), float), batch + (m, m))
            a[..., n:, n:] = af
        return a


@dataclass(frozen=True)
class CoefficientModel:
    """Full coefficient bundle of a (possibly singular) Kimura-type SDE.

    ``f``/``h`` absent means the standard equation (no singular drift).
    Declared constants are the model author's claims; validators in this
    module probe them. ``after_step``/``restart_state`` are optional
    pathwise hooks used by negative-control models (e.g. a hidden
    running-maximum coordinate); both map (x, y) arrays to (x, y).
    """

    n: int
    m: int
    b: Callable
    e: Callable
    sigma: Callable
    f: Optional[Callable] = None
    h: Optional[Callable] = None
    declared_b0: Optional[float] = None
    declared_K: Optional[float] = None
    declared_K0: Optional[float] = None
    declared_q: Optional[float] = None
    declared_alpha: Optional[float] = None
    decomposition: Optional[DecomposedDiffusion] = None
    after_step: Optional[Callable] = None
    restart_state: Optional[Callable] = None
    # drift and dispersion callables return state-independent values;
    # lets the engine run whole paths inside the fused stepping kernel
    constant_coefficients: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.n + self.m < 1:
            raise ValueError("model needs n + m >= 1")
        if (self.f is None) != (self.h is None):
            raise ValueError("singular models need both f and h")
        if self.declared_q is not None and not 0.0 < self.declared_q < 0.25:
            raise ValueError(
                f"q={self.declared_q} must lie in (0, 1/4): q0 = min(1/4, b0/((n+m) K^2)) caps it"
            )
        if self.is_singular and None not in (self.declared_q, self.declared_b0, self.declared_K):
            q0 = compute_q0(self.declared_b0, self.declared_K, self.n, self.m)
            if not self.declared_q < q0:
                raise ModelViolationError(
                    f"declared q={self.declared_q} must be below q0={q0:.6g} "
                    f"= min(1/4, b0/((n+m) K^2))"
                )

    @property
    def d(self) -> int:
        return self.n + self.m

    @property
    def is_singular(self) -> bool:
        return self.f is not None

    def q0(self) -> float:
        """Admissible singularity-exponent threshold from declared constants."""
        if self.declared_b0 is None or self.declared_K is None:
            raise ValueError("model does not declare b0 and K")
        return compute_q0(self.declared_b0, self.declared_K, self.n, self.m)


@dataclass(frozen=True)
class TestFunction:
    """Smooth compactly supported test function with derivative oracles.

    All three callables follow the batched (x, y) convention; ``value``
    returns (...,), ``gradient`` (..., d), ``hessian`` (..., d, d).
    """

    __test__ = False  # keep pytest from collecting the domain type

    value: Callable
    gradient: Callable
    hessian: Callable
    compact_support_radius: float


# ---------------------------------------------------------------------------
# derived matrices


def _point_args(z: StatePoint) -> tuple[np.ndarray, np.ndarray]:
    return z.x[None, :], z.y[None, :]


def sigma_at(model: CoefficientModel, z: StatePoint) -> np.ndarray:
    """Dispersion factor sigma(z) as a (d, d) array."""
    x, y = _point_args(z)
    sig = np.asarray(model.sigma(x, y), float)
    if sig.ndim == 3:
        sig = sig[0]
    if sig.shape != (model.d, model.d):
        raise ValueError(f"sigma returned shape {sig.shape}, expected {(model.d, model.d)}")
    return sig


def assemble_a(model: CoefficientModel, z: StatePoint) -> np.ndarray:
    """a(z) = sigma sigma* / 2, symmetric positive semidefinite."""
    sig = sigma_at(model, z)
    return 0.5 * (sig @ sig.T)


def assemble_varsigma(model: CoefficientModel, z: StatePoint) -> np.ndarray:
    """Row-scaled dispersion: rows 0..n-1 are sqrt(x_i) sigma_i, free rows unscaled."""
    sig = sigma_at(model, z).copy()
    if model.n:
        sig[: model.n] *= np.sqrt(z.x)[:, None]
    return sig


def assemble_D(model: CoefficientModel, z: StatePoint) -> np.ndarray:
    """Diffusion matrix D = varsigma varsigma*; vanishes on {x_i = 0} rows."""
    vs = assemble_varsigma(model, z)
    return vs @ vs.T


def compute_q0(b0: float, K: float, n: int, m: int) -> float:
    """min(1/4, b0 / ((n+m) K^2)), the admissible singularity exponent cap."""
    if b0 <= 0 or K <= 0:
        raise ValueError("b0 and K must be positive")
    if n + m < 1:
        raise ValueError("n + m must be at least 1")
    return min(0.25, b0 / ((n + m) * K * K))


def invert_sigma(model: CoefficientModel, z: StatePoint, rcond_floor: float = 1e-12) -> np.ndarray:
    """sigma(z)^{-1} at an interior point, with conditioning guard.

    Raises SingularMatrixError when the reciprocal condition number falls
    below ``rcond_floor`` (z too close to the boundary, or the model is
    degenerate there) or the inversion residual exceeds 1e-10.
    """
    if model.n and z.x.min() <= 0.0:
        raise ValueError("invert_sigma needs an interior point (all x_i > 0)")
    sig = sigma_at(model, z)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(sig)
    if not np.isfinite(cond) or 1.0 / cond < rcond_floor:
        raise SingularMatrixError(
            f"sigma at z={z} has reciprocal condition {0.0 if not np.isfinite(cond) else 1.0 / cond:.3g}"
        )
    inv = np.linalg.inv(sig)
    residual = np.abs(sig @ inv - np.eye(model.d)).max()
    if residual > 1e-10:
        raise SingularMatrixError(f"inversion residual {residual:.3g} exceeds 1e-10")
    return inv


# ---------------------------------------------------------------------------
# validators


def check_drift_boundary(model: CoefficientModel, samples, mode: str = "nonneg") -> DiagnosticReport:
    """Minimum of b_i over boundary samples with x_i = 0.

    mode 'nonneg' passes when the minimum is >= 0, mode 'positive' when it
    is >= declared_b0.
    """
    if mode not in ("nonneg", "positive"):
        raise ValueError(f"unknown mode {mode!r}")
    if not samples:
        raise EstimationError("empty boundary sample set")
    worst = np.inf
    for z in samples:
        face = np.flatnonzero(z.x == 0.0)
        if face.size == 0:
            raise ValueError(f"sample {z} has no coordinate on the boundary")
        bv = np.broadcast_to(np.asarray(model.b(*_point_args(z)), float), (1, model.n))[0]
        worst = min(worst, float(bv[face].min()))
    if mode == "nonneg":
        bound = 0.0
    else:
        if model.declared_b0 is None:
            raise ValueError("mode 'positive' needs declared_b0")
        bound = model.declared_b0
    verdict = PASS if worst >= bound else FAIL
    return DiagnosticReport(
        name=f"drift-boundary-{mode}",
        estimate=worst,
        stderr=0.0,
        bound_or_tolerance=bound,
        verdict=verdict,
        metadata={"n_samples": len(samples)},
    )


def ellipticity_form_matrix(decomp: DecomposedDiffusion, z: StatePoint, region: RegionIndex | None = None) -> np.ndarray:
    """The region-dependent ellipticity quadratic form as a symmetric matrix.

    In the variables (xi, eta): near-boundary indices (i in I) enter with
    unweighted alpha/alpha_tilde/c coefficients, far indices carry their
    x_i weights, and the free block is the free-coordinate part of a.
    """
    n, m = decomp.n, decomp.m
    d = n + m
    if region is None:
        region = region_of(z)
    x, y = z.x[None, :], z.y[None, :]
    q = np.zeros((d, d))
    inn = np.array(sorted(region.members), dtype=int)
    out = np.array(sorted(region.complement), dtype=int)
    if n:
        al = np.broadcast_to(np.asarray(decomp.alpha(x, y), float), (1, n))[0]
        at = np.broadcast_to(np.asarray(decomp.alpha_tilde(x, y), float), (1, n, n))[0]
        ats = 0.5 * (at + at.T)
        w = np.ones(n)
        w[out] = z.x[out]
        # diagonal alpha terms and x-weighted alpha_tilde couplings
        q[:n, :n] = ats * w[:, None] * w[None, :]
        q[np.arange(n), np.arange(n)] += al * w
        if m and decomp.c is not None:
            cv = np.broadcast_to(np.asarray(decomp.c(x, y), float), (1, n, m))[0]
            half = 0.5 * cv * w[:, None]
            q[:n, n:] = half
            q[n:, :n] = half.T
    if m:
        af = np.broadcast_to(np.asarray(decomp.a_free(x, y), float), (1, m, m))[0]
        q[n:, n:] = 0.5 * (af + af.T)
    return q


def check_ellipticity(
    decomp: DecomposedDiffusion,
    samples,
    trials: int = 64,
    model: CoefficientModel | None = None,
    consistency_tol: float = 1e-8,
) -> DiagnosticReport:
    """Minimum eigenvalue of the region-dependent ellipticity form over samples.

    PASS when the minimum is strictly positive. When ``model`` is given,
    the decomposition is first checked to reassemble a = sigma sigma*/2 at
    the samples; an inconsistency beyond tolerance raises.
    ``trials`` random directions per worst sample cross-check the
    eigenvalue computation.
    """
    if not samples:
        raise EstimationError("empty sample set")
    worst = np.inf
    worst_z = None
    rng = np.random.Generator(np.random.Philox(key=7))
    for z in samples:
        if model is not None:
            a_ref = assemble_a(model, z)
            a_dec = decomp.assemble(*_point_args(z))[0]
            gap = np.abs(a_ref - a_dec).max()
            if gap > consistency_tol:
                raise ModelViolationError(
                    f"decomposition reassembly differs from sigma sigma*/2 by {gap:.3g} at z={z}"
                )
        q = ellipticity_form_matrix(decomp, z)
        lam = float(np.linalg.eigvalsh(q)[0])
        if lam < worst:
            worst, worst_z = lam, z
    # random-direction probe of the quadratic form at the worst sample
    if worst_z is not None and trials > 0:
        q = ellipticity_form_matrix(decomp, worst_z)
        d = q.shape[0]
        vecs = rng.standard_normal((trials, d))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        vals = np.einsum("ti,ij,tj->t", vecs, q, vecs)
        if vals.min() < worst - 1e-10:
            raise AssertionError("quadratic-form probe found a value below the minimum eigenvalue")
    return DiagnosticReport(
        name="ellipticity",
        estimate=worst,
        stderr=0.0,
        bound_or_tolerance=0.0,
        verdict=PASS if worst > 0.0 else FAIL,
        metadata={"n_samples": len(samples), "trials": trials},
    )


def estimate_K(model: CoefficientModel, samples) -> float:
    """max over samples and indices of |b_i(z)| and |sigma_jl(z)|."""
    if not samples:
        raise EstimationError("empty sample set")
    worst = 0.0
    for z in samples:
        if model.n:
            bv = np.broadcast_to(np.asarray(model.b(*_point_args(z)), float), (1, model.n))
            worst = max(worst, float(np.abs(bv).max()))
        worst = max(worst, float(np.abs(sigma_at(model, z)).max()))
    return worst


def check_singular_bounds(
    model: CoefficientModel,
    samples,
    q: float,
    s_grid: np.ndarray | None = None,
) -> DiagnosticReport:
    """Probe |f| <= K0, |sigma^{-1} f| <= K0 and |h_ij(s)| s^q <= K0.

    The sigma^{-1} f bound is evaluated at interior samples only; sigma
    singular at an interior sample signals a model violation. The h bound
    is scanned on a log-spaced s grid (default 1e-8..1e2).
    """
    if not model.is_singular:
        raise ValueError("model has no singular drift")
    if model.declared_K0 is None:
        raise ValueError("model does not declare K0")
    if not samples:
        raise EstimationError("empty sample set")
    k0 = model.declared_K0
    sup_f = 0.0
    sup_sf = 0.0
    for z in samples:
        fv = np.broadcast_to(np.asarray(model.f(*_point_args(z)), float), (1, model.d, model.n))[0]
        sup_f = max(sup_f, float(np.linalg.norm(fv, 2)))
        if model.n == 0 or z.x.min() > 0.0:
            try:
                inv = invert_sigma(model, z)
            except SingularMatrixError as exc:
                raise ModelViolationError(
                    f"sigma singular at interior sample z={z}: {exc}"
                ) from exc
            sup_sf = max(sup_sf, float(np.linalg.norm(inv @ fv, 2)))
    if s_grid is None:
        s_grid = np.logspace(-8, 2, 200)
    s_cols = np.repeat(s_grid[:, None], model.n, axis=1)
    hv = np.broadcast_to(np.asarray(model.h(s_cols), float), (len(s_grid), model.d, model.n))
    sup_h = float((np.abs(hv) * (s_grid[:, None, None] ** q)).max())
    worst = max(sup_f, sup_sf, sup_h)
    tol = 1e-9 * max(1.0, k0)
    verdict = PASS if worst <= k0 + tol else FAIL
    return DiagnosticReport(
        name="singular-bounds",
        estimate=worst,
        stderr=0.0,
        bound_or_tolerance=k0,
        verdict=verdict,
        metadata={
            "sup_f": sup_f,
            "sup_sigma_inv_f": sup_sf,
            "sup_h_sq": sup_h,
            "q": q,
            "n_samples": len(samples),
            "s_grid_size": int(len(s_grid)),
        },
    )


def validate_decomposition(model: CoefficientModel, samples, tol: float = 1e-10) -> DiagnosticReport:
    """Reassembly residual |a_decomp - sigma sigma*/2|_max over samples."""
    if model.decomposition is None:
        raise ValueError("model has no decomposition")
    if not samples:
        raise EstimationError("empty sample set")
    worst = 0.0
    for z in samples:
        a_ref = assemble_a(model, z)
        a_dec = model.decomposition.assemble(*_point_args(z))[0]
        worst = max(worst, float(np.abs(a_ref - a_dec).max()))
    return DiagnosticReport(
        name="decomposition-consistency",
        estimate=worst,
        stderr=0.0,
        bound_or_tolerance=tol,
        verdict=PASS if worst <= tol else FAIL,
        metadata={"n_samples": len(samples)},
    )


# ---------------------------------------------------------------------------
# generator


def generator_values(model: CoefficientModel, u: TestFunction, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Generator applied to u on a batch of states, shape (B,).

    L u = sum_ij sqrt(x_i x_j) a_ij u_{x_i x_j}
        + sum_il sqrt(x_i) (a_{i,n+l} + a_{n+l,i}) u_{x_i y_l}
        + sum_lk a_{n+l,n+k} u_{y_l y_k}
        + sum_i b_i u_{x_i} + sum_l e_l u_{y_l}
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    B = x.shape[0]
    n, m = model.n, model.m
    d = n + m
    sig = np.asarray(model.sigma(x, y), float)
    if sig.ndim == 2:
        sig = np.broadcast_to(sig, (B, d, d))
    a = 0.5 * np.einsum("bik,bjk->bij", sig, sig)
    hess = np.broadcast_to(np.asarray(u.hessian(x, y), float), (B, d, d))
    grad = np.broadcast_to(np.asarray(u.gradient(x, y), float), (B, d))
    out = np.zeros(B)
    if n:
        sx = np.sqrt(np.maximum(x, 0.0))
        out += np.einsum("bi,bj,bij,bij->b", sx, sx, a[:, :n, :n], hess[:, :n, :n])
        bv = np.broadcast_to(np.asarray(model.b(x, y), float), (B, n))
        out += np.einsum("bi,bi->b", bv, grad[:, :n])
        if m:
            cross = a[:, :n, n:] + np.swapaxes(a[:, n:, :n], 1, 2)
            out += np.einsum("bi,bil,bil->b", sx, cross, hess[:, :n, n:])
    if m:
        out += np.einsum("blk,blk->b", a[:, n:, n:], hess[:, n:, n:])
        ev = np.broadcast_to(np.asarray(model.e(x, y), float), (B, m))
        out += np.einsum("bl,bl->b", ev, grad[:, n:])
    return out


def apply_generator(model: CoefficientModel, u: TestFunction, z: StatePoint) -> float:
    """Generator applied to u at a single state point."""
    return float(generator_values(model, u, *_point_args(z))[0])


# ---------------------------------------------------------------------------
# test functions


def bump_function(center: StatePoint, radius: float, amplitude: float = 1.0) -> TestFunction:
    """The standard smooth bump A exp(1 - 1/(1 - |z-c|^2/R^2)) on |z-c| < R.

    Infinitely differentiable, equals A at the center, vanishes with all
    derivatives at distance R. Gradient and hessian are analytic.
    """
    c = center.coords()
    r2 = float(radius) ** 2

    def _parts(x, y):
        z = np.concatenate([np.asarray(x, float), np.asarray(y, float)], axis=-1)
        dz = z - c
        s = np.einsum("...i,...i->...", dz, dz) / r2
        inside = s < 1.0
        om = np.where(inside, 1.0 - s, 1.0)  # 1 - s, safe outside
        val = np.where(inside, amplitude * np.exp(1.0 - 1.0 / om), 0.0)
        return dz, s, inside, om, val

    def value(x, y):
        return _parts(x, y)[4]

    def gradient(x, y):
        dz, s, inside, om, val = _parts(x, y)
        gp = np.where(inside, -1.0 / om**2, 0.0)  # d/ds of 1 - 1/(1-s)
        return (val * gp * 2.0 / r2)[..., None] * dz

    def hessian(x, y):
        dz, s, inside, om, val = _parts(x, y)
        gp = np.where(inside, -1.0 / om**2, 0.0)
        gpp = np.where(inside, -2.0 / om**3, 0.0)
        coef_outer = val * (gp * gp + gpp) * (2.0 / r2) ** 2
        coef_diag = val * gp * 2.0 / r2
        outer = dz[..., :, None] * dz[..., None, :]
        eye = np.eye(c.shape[0])
        return coef_outer[..., None, None] * outer + coef_diag[..., None, None] * eye

    return TestFunction(value=value, gradient=gradient, hessian=hessian, compact_support_radius=radius)


# ---------------------------------------------------------------------------
# sample generators for validators


def halton(count: int, dims: int, skip: int = 20) -> np.ndarray:
    """Classic Halton low-discrepancy points in [0, 1)^dims."""
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53]
    if dims > len(primes):
        raise ValueError(f"halton supports at most {len(primes)} dimensions")
    out = np.empty((count, dims))
    for j in range(dims):
        base = primes[j]
        for i in range(count):
            k = i + skip + 1
            frac, scale = 0.0, 1.0 / base
            while k > 0:
                frac += (k % base) * scale
                k //= base
                scale /= base
            out[i, j] = frac
    return out


def boundary_face_samples(
    n: int, m: int, face: int, count: int = 64, radius: float = 10.0
) -> list[StatePoint]:
    """Low-discrepancy samples on the face {x_face = 0} inside a box of size radius."""
    if not 0 <= face < n:
        raise ValueError("face index out of range")
    pts = halton(count, max(n - 1 + m, 1))
    out = []
    for row in pts:
        x = np.zeros(n)
        others = [i for i in range(n) if i != face]
        x[others] = row[: n - 1] * radius
        y = (row[n - 1 : n - 1 + m] * 2.0 - 1.0) * radius
        out.append(StatePoint(x, y[:m]))
    return out


def box_samples(
    n: int, m: int, count: int = 64, radius: float = 10.0, x_min: float = 0.0
) -> list[StatePoint]:
    """Low-discrepancy samples of [x_min, radius]^n x [-radius, radius]^m."""
    pts = halton(count, n + m)
    out = []
    for row in pts:
        x = x_min + row[:n] * (radius - x_min)
        y = (row[n:] * 2.0 - 1.0) * radius
        out.append(StatePoint(x, y))
    return out
