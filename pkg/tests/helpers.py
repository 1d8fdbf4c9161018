"""Shared independent oracles for the test suite."""

import numpy as np


def const_wf_mean(x0: float, b: float, t: float) -> float:
    """E[X_t] = x0 + b t from integrating the drift (martingale term has zero mean)."""
    return x0 + b * t


def const_wf_variance(x0: float, b: float, sigma: float, t: float) -> float:
    """Var[X_t] from the second-moment ODE dM2/dt = (2b + sigma^2) E[X_t]."""
    m1 = const_wf_mean(x0, b, t)
    m2 = x0 * x0 + (2.0 * b + sigma * sigma) * (x0 * t + 0.5 * b * t * t)
    return m2 - m1 * m1


def stderr_of_mean(sample: np.ndarray) -> float:
    return float(sample.std(ddof=1) / np.sqrt(sample.size))


def stderr_of_variance(sample: np.ndarray) -> float:
    """Delta-method standard error of the sample variance."""
    n = sample.size
    centered = sample - sample.mean()
    m2 = np.mean(centered**2)
    m4 = np.mean(centered**4)
    return float(np.sqrt(max(m4 - m2 * m2, 0.0) / n))
