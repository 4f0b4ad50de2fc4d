"""Evaluation metrics for mean accuracy and uncertainty quality.

All arrays are (n_paths, T, components).  Gaussians are diagonal per
component, so log-likelihoods sum over components, coverage counts
individual components, and the Wasserstein distance uses the 1-D
closed form per component before averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import gaussian_logpdf

__all__ = [
    "DegenerateTruthError",
    "MetricReport",
    "mpiw",
    "picp",
    "relative_error",
    "tll",
    "wasserstein",
]

_TLL_VAR_FLOOR = 1e-12


class DegenerateTruthError(ValueError):
    """Every step had zero ground-truth norm; relative error is undefined."""


def relative_error(pred_mean: np.ndarray, true_mean: np.ndarray) -> float:
    value, _ = relative_error_detail(pred_mean, true_mean)
    return value


def relative_error_detail(pred_mean: np.ndarray, true_mean: np.ndarray):
    """Mean over paths/steps of ||truth - pred|| / ||truth||, in percent.

    Steps whose ground-truth norm is exactly zero are skipped; the count
    of skipped steps is returned alongside.
    """
    pred = np.asarray(pred_mean, dtype=np.float64)
    truth = np.asarray(true_mean, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    num = np.linalg.norm(truth - pred, axis=-1)
    den = np.linalg.norm(truth, axis=-1)
    valid = den > 0.0
    n_skipped = int(valid.size - valid.sum())
    if not np.any(valid):
        raise DegenerateTruthError("all steps have zero ground-truth norm")
    return float(np.mean(num[valid] / den[valid]) * 100.0), n_skipped


def tll(pred_mean: np.ndarray, epistemic_var: np.ndarray, true_mean: np.ndarray) -> float:
    """Log-likelihood of the true mean under the epistemic Gaussian,
    summed over components and averaged over paths and steps."""
    var = np.maximum(np.asarray(epistemic_var, dtype=np.float64), _TLL_VAR_FLOOR)
    logp = gaussian_logpdf(true_mean, pred_mean, var)
    return float(logp.sum(axis=-1).mean())


def wasserstein(pred_mean: np.ndarray, pred_std: np.ndarray,
                true_mean: np.ndarray, true_std: np.ndarray) -> float:
    """2-Wasserstein distance between per-component Gaussians, averaged."""
    d = np.sqrt((np.asarray(true_mean) - np.asarray(pred_mean)) ** 2
                + (np.asarray(true_std) - np.asarray(pred_std)) ** 2)
    return float(d.mean())


def picp(lower: np.ndarray, upper: np.ndarray, true_mean: np.ndarray) -> float:
    """Fraction of (path, step, component) triples inside the interval."""
    lower = np.asarray(lower)
    upper = np.asarray(upper)
    if np.any(lower > upper):
        raise ValueError("interval bounds must satisfy lower <= upper")
    inside = (true_mean >= lower) & (true_mean <= upper)
    return float(inside.mean())


def mpiw(lower: np.ndarray, upper: np.ndarray) -> float:
    """Mean width of the prediction intervals."""
    lower = np.asarray(lower)
    upper = np.asarray(upper)
    if np.any(lower > upper):
        raise ValueError("interval bounds must satisfy lower <= upper")
    return float((upper - lower).mean())


@dataclass(frozen=True)
class MetricReport:
    """One evaluation: mean accuracy plus uncertainty metrics when available.

    Deterministic models report only the relative error; the uncertainty
    fields stay None.
    """

    eps_r: float
    tll: float | None = None
    wa: float | None = None
    picp: float | None = None
    mpiw: float | None = None
    alpha_conf: float = 0.05
    n_skipped_steps: int = 0

    def __post_init__(self):
        if self.eps_r < 0:
            raise ValueError("relative error cannot be negative")
        if self.picp is not None and not 0.0 <= self.picp <= 1.0:
            raise ValueError("picp must lie in [0, 1]")
        if self.mpiw is not None and self.mpiw < 0:
            raise ValueError("mpiw cannot be negative")
