"""Pointwise summaries of conditional densities and CDFs over (x, y) grids.

Draw-wise evaluation shared by the Gibbs chain (posterior draws) and the
variational engine (draws from the fitted factors).  Summaries are the
pointwise mean and the 2.5%/97.5% quantiles across draws; when a response
standardization record is supplied, the grid is interpreted in original
units and densities carry the 1/scale Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .basis import StandardizationRecord
from .model import LOG_2PI, stick_break_log_weights

_Y_BLOCK = 64  # bound the (draws x H x y-block) intermediate


@dataclass
class DensityGrid:
    """Estimated f_x(y) over a grid with pointwise credible bands."""

    x: np.ndarray      # (nx,)
    y: np.ndarray      # (ny,)
    mean: np.ndarray   # (nx, ny)
    lo95: np.ndarray   # (nx, ny)
    hi95: np.ndarray   # (nx, ny)


@dataclass
class CdfCurves:
    """pr(y < y_star | x) curves over x for each threshold, with bands."""

    x: np.ndarray           # (nx,)
    thresholds: np.ndarray  # (nt,)
    mean: np.ndarray        # (nx, nt)
    lo95: np.ndarray        # (nx, nt)
    hi95: np.ndarray        # (nx, nt)


def _draw_weights_log(alpha: np.ndarray, psi_row: np.ndarray) -> np.ndarray:
    # (D, H) log weights at one predictor point across all draws
    if alpha.shape[1]:
        eta = alpha @ psi_row
    else:
        eta = np.zeros((alpha.shape[0], 0))
    return stick_break_log_weights(eta)


def summarize_density_draws(alpha: np.ndarray, beta: np.ndarray, sigma2: np.ndarray,
                            Lambda_grid: np.ndarray, Psi_grid: np.ndarray,
                            x_grid: np.ndarray, y_grid: np.ndarray,
                            y_record: StandardizationRecord | None = None) -> DensityGrid:
    """Mean and 95% pointwise bands of f_x(y) across parameter draws.

    ``alpha`` is (D, H-1, R), ``beta`` (D, H, P), ``sigma2`` (D, H); the grid
    designs are rows at each x-grid point on the model scale.  ``y_grid`` is in
    original units when ``y_record`` is given, else on the model scale.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float).ravel()
    y_grid = np.asarray(y_grid, dtype=float).ravel()
    if x_grid.size == 0 or y_grid.size == 0:
        raise ValueError("density grid must be nonempty in both x and y")

    if y_record is not None:
        y_model = y_record.apply(y_grid)
        jac = 1.0 / y_record.scale
    else:
        y_model = y_grid
        jac = 1.0

    nx, ny = x_grid.size, y_grid.size
    D = beta.shape[0]
    mean = np.empty((nx, ny))
    lo = np.empty((nx, ny))
    hi = np.empty((nx, ny))
    dens = np.empty((D, ny))
    for i in range(nx):
        log_w = _draw_weights_log(alpha, Psi_grid[i])          # (D, H)
        mu = beta @ Lambda_grid[i]                             # (D, H)
        log_norm = -0.5 * (LOG_2PI + np.log(sigma2))           # (D, H)
        for j0 in range(0, ny, _Y_BLOCK):
            yb = y_model[j0:j0 + _Y_BLOCK]
            z2 = (yb[None, None, :] - mu[:, :, None]) ** 2 / sigma2[:, :, None]
            lp = log_w[:, :, None] + log_norm[:, :, None] - 0.5 * z2
            dens[:, j0:j0 + _Y_BLOCK] = np.exp(logsumexp(lp, axis=1)) * jac
        mean[i] = dens.mean(axis=0)
        qs = np.quantile(dens, [0.025, 0.975], axis=0)
        lo[i] = qs[0]
        hi[i] = qs[1]
    return DensityGrid(x=x_grid, y=y_grid, mean=mean, lo95=lo, hi95=hi)


def coverage_y_window(alpha: np.ndarray, beta: np.ndarray, sigma2: np.ndarray,
                      Lambda_grid: np.ndarray, Psi_grid: np.ndarray,
                      lo: float, hi: float, tail_tol: float = 2e-4,
                      max_steps: int = 16) -> tuple[float, float]:
    """Widen [lo, hi] until every slice's mixture mass outside it is below tol.

    The starting window (typically the data range plus padding) can clip the
    tails of wide or extrapolated components; emitted grids are expected to
    normalize, so the window grows in fixed fractions of its span until the
    weighted normal tail mass at each grid slice is negligible.  Growth is
    capped (max_steps quarter-spans per side): draws whose variance factors
    sit near a vague prior would otherwise drag the window out far enough to
    destroy the grid's resolution for a sliver of mass.  Model scale.
    """
    step = 0.25 * (hi - lo)
    sd = np.sqrt(sigma2)
    lo_cap = lo - max_steps * step
    hi_cap = hi + max_steps * step
    for i in range(Lambda_grid.shape[0]):
        w = np.exp(_draw_weights_log(alpha, Psi_grid[i]))
        mu = beta @ Lambda_grid[i]
        while lo > lo_cap and \
                float(np.mean(np.sum(w * ndtr((lo - mu) / sd), axis=1))) > tail_tol:
            lo -= step
        while hi < hi_cap and \
                float(np.mean(np.sum(w * ndtr((mu - hi) / sd), axis=1))) > tail_tol:
            hi += step
    return lo, hi


def summarize_cdf_draws(alpha: np.ndarray, beta: np.ndarray, sigma2: np.ndarray,
                        Lambda_grid: np.ndarray, Psi_grid: np.ndarray,
                        x_grid: np.ndarray, thresholds: np.ndarray,
                        y_record: StandardizationRecord | None = None) -> CdfCurves:
    """Mean and 95% bands of pr(y < y_star | x) for each threshold."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float).ravel()
    thresholds = np.asarray(thresholds, dtype=float).ravel()
    if x_grid.size == 0 or thresholds.size == 0:
        raise ValueError("cdf summary needs a nonempty x grid and thresholds")

    t_model = y_record.apply(thresholds) if y_record is not None else thresholds
    nx, nt = x_grid.size, thresholds.size
    sd = np.sqrt(sigma2)
    mean = np.empty((nx, nt))
    lo = np.empty((nx, nt))
    hi = np.empty((nx, nt))
    for i in range(nx):
        w = np.exp(_draw_weights_log(alpha, Psi_grid[i]))       # (D, H)
        mu = beta @ Lambda_grid[i]                              # (D, H)
        z = (t_model[None, None, :] - mu[:, :, None]) / sd[:, :, None]
        vals = np.sum(w[:, :, None] * ndtr(z), axis=1)          # (D, nt)
        mean[i] = vals.mean(axis=0)
        qs = np.quantile(vals, [0.025, 0.975], axis=0)
        lo[i] = qs[0]
        hi[i] = qs[1]
    return CdfCurves(x=x_grid, thresholds=thresholds, mean=mean, lo95=lo, hi95=hi)
