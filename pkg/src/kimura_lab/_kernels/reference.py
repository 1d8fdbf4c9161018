"""Pure-numpy stepping kernel, the fallback when the compiled core is absent.

Arithmetic is arranged to match the compiled kernel operation-for-operation
(same accumulation order in the dispersion matvec, same add/mul grouping),
so both backends produce bitwise-identical paths.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def em_step(x, y, drift_x, drift_y, sigma, dw, dt, clamp, neg, hits, pre_x=None):
    """Advance one Euler-Maruyama step for a block of paths, in place.

    x: (B, n), y: (B, m)    current states; x may be negative in
                            record-only mode, the sqrt row scaling uses
                            max(x, 0)
    drift_x, drift_y        total drift evaluated at the projected state
    sigma: (d, d) | (B,d,d) dispersion factor, d = n + m
    dw: (B, d)              Brownian increments of this step
    clamp                   clamp x at 0 after the step when true
    neg: (B,)               running max of pre-clamp negativity, updated
    hits: (B,) int64        count of steps ending on the boundary, updated
    pre_x: (B, n) | None    optional output for pre-clamp x coordinates
    """
    B, n = x.shape
    m = y.shape[1]
    d = n + m

    # dispersion matvec, accumulated in ascending k like the compiled loop
    acc = np.zeros((B, d))
    if sigma.ndim == 2:
        for k in range(d):
            acc += sigma[None, :, k] * dw[:, k, None]
    else:
        for k in range(d):
            acc += sigma[:, :, k] * dw[:, k, None]

    if n:
        sx = np.sqrt(np.maximum(x, 0.0))
        prex = (x + drift_x * dt) + sx * acc[:, :n]
        np.maximum(neg, np.max(-prex, axis=1), out=neg)
        newx = np.maximum(prex, 0.0) if clamp else prex
        hits += newx.min(axis=1) <= 0.0
        if pre_x is not None:
            pre_x[...] = prex
        x[...] = newx
    if m:
        y[...] = (y + drift_y * dt) + acc[:, n:]


def em_path_block(x, y, drift_x, drift_y, sigma, eps, dt, clamp, neg, hits, rec_pos, states):
    """Drive a whole block of paths with constant coefficients, in place.

    drift_x: (n,), drift_y: (m,), sigma: (d, d) state-independent values;
    eps: (B, N, d) per-step increments; rec_pos[k] is the slot in
    ``states`` where the state after step k is recorded, or -1. Same
    per-step arithmetic as em_step, so generic and fused paths agree
    bitwise.
    """
    B, N, d = eps.shape
    n = x.shape[1]
    m = y.shape[1]
    bx = np.ascontiguousarray(np.broadcast_to(drift_x, (B, n)))
    ey = np.ascontiguousarray(np.broadcast_to(drift_y, (B, m)))
    if rec_pos[0] >= 0:
        states[:, rec_pos[0], :n] = x
        states[:, rec_pos[0], n:] = y
    for k in range(N):
        em_step(x, y, bx, ey, sigma, np.ascontiguousarray(eps[:, k, :]), dt, clamp, neg, hits)
        r = rec_pos[k + 1]
        if r >= 0:
            states[:, r, :n] = x
            states[:, r, n:] = y
