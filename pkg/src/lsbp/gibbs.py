"""Gibbs sampler for the truncated logit stick-breaking mixture of Gaussians.

One sweep cycles four conjugate blocks in fixed order:

  [1] component memberships from their categorical full conditionals,
  [2] stick coefficients, one stick at a time, via Polya-Gamma augmentation
      restricted to the units that survived past the previous sticks,
  [3] kernel coefficients from standard Bayesian linear regression,
  [4] kernel precisions from their Gamma full conditionals.

Membership sampling uses the shared log-space allocation kernel, so the
categorical probabilities agree exactly with the ECM responsibilities.  A
chain consumes a single seeded stream in a fixed order, which makes runs
bitwise reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from .density import CdfCurves, DensityGrid, summarize_cdf_draws, summarize_density_draws
from .model import (
    Dataset,
    MixtureParams,
    ModelConfig,
    component_log_joint,
    sample_prior_params,
    stick_break_log_weights,
)
from .polya_gamma import RngStream, make_stream, sample_pg1_vector


class ChainError(RuntimeError):
    """A sweep failed; the message carries the iteration index."""


@dataclass
class GibbsState:
    """Current parameters, memberships, and the latest augmentation draws.

    ``G`` holds zero-based component labels.  ``omega`` is (n, H-1) with NaN
    for (unit, stick) pairs that were inactive in the latest sweep; the
    augmentations are redrawn every sweep and never retained in the output.
    """

    params: MixtureParams
    G: np.ndarray
    omega: np.ndarray

    def validate(self, config: ModelConfig, n: int) -> None:
        self.params.validate(config)
        if self.G.shape != (n,) or self.G.min() < 0 or self.G.max() >= config.H:
            raise ValueError("membership labels out of range")
        active = ~np.isnan(self.omega)
        if np.any(self.omega[active] <= 0):
            raise ValueError("omega entries must be positive")


@dataclass
class ChainOutput:
    """Retained post-burn-in (optionally thinned) parameter draws."""

    alpha: np.ndarray      # (n_draws, H-1, R)
    beta: np.ndarray       # (n_draws, H, P)
    sigma2: np.ndarray     # (n_draws, H)
    occupancy: np.ndarray  # (n_draws, H) component sizes, diagnostics only
    seed: int
    iterations: int
    burn_in: int
    thin: int
    elapsed_seconds: float = field(default=0.0)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def draw(self, d: int) -> MixtureParams:
        return MixtureParams(self.alpha[d], self.beta[d], self.sigma2[d])


def init_state(data: Dataset, config: ModelConfig, rng: RngStream) -> GibbsState:
    """Prior parameter draw with memberships sampled from the prior weights."""
    params = sample_prior_params(config, rng)
    eta = data.Psi @ params.alpha.T if config.H > 1 else np.zeros((data.n, 0))
    log_pi = stick_break_log_weights(eta)
    G = np.argmax(log_pi + rng.gumbel(size=log_pi.shape), axis=1)
    return GibbsState(params=params, G=G,
                      omega=np.full((data.n, config.H - 1), np.nan))


def step_allocate(state: GibbsState, data: Dataset, config: ModelConfig,
                  rng: RngStream) -> np.ndarray:
    """Draw every membership from its categorical full conditional."""
    lj = component_log_joint(state.params, data.model_y, data.Lambda, data.Psi)
    return np.argmax(lj + rng.gumbel(size=lj.shape), axis=1)


def _draw_gaussian_from_precision(prec: np.ndarray, shift: np.ndarray,
                                  rng: RngStream) -> np.ndarray:
    # N(prec^{-1} shift, prec^{-1}) via one Cholesky of the precision
    L = cholesky(prec, lower=True)
    mean = cho_solve((L, True), shift)
    return mean + solve_triangular(L, rng.standard_normal(shift.shape[0]),
                                   lower=True, trans="T")


def step_update_alpha(state: GibbsState, data: Dataset, config: ModelConfig,
                      rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Per stick: Polya-Gamma draws for surviving units, then the Gaussian update.

    Stick h sees the units with G >= h; their binary outcome is 1 when G == h.
    With augmentations omega the full conditional is Gaussian with precision
    Psi' diag(omega) Psi + prior precision and shift Psi' (z - 1/2) + prior
    precision times prior mean.
    """
    H, R = config.H, config.R
    alpha = np.empty((H - 1, R))
    omega = np.full((data.n, H - 1), np.nan)
    for h in range(H - 1):
        active = state.G >= h
        psi_h = data.Psi[active]
        eta = psi_h @ state.params.alpha[h]
        om = sample_pg1_vector(eta, rng)
        kappa = (state.G[active] == h).astype(float) - 0.5
        prec = psi_h.T @ (psi_h * om[:, None]) + config.prec_alpha
        shift = psi_h.T @ kappa + config.prec_alpha_mean
        try:
            alpha[h] = _draw_gaussian_from_precision(prec, shift, rng)
        except np.linalg.LinAlgError as exc:  # unreachable with an SPD prior
            raise ChainError(f"stick {h}: posterior precision not SPD") from exc
        omega[active, h] = om
    return alpha, omega


def step_update_kernels(state: GibbsState, data: Dataset, config: ModelConfig,
                        rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Kernel coefficients then precisions, component by component.

    Empty components fall back to prior draws because the data terms vanish.
    The precision update uses the freshly drawn coefficients.
    """
    H, P = config.H, config.P
    y = data.model_y
    beta = np.empty((H, P))
    sigma2 = np.empty(H)
    for h in range(H):
        members = state.G == h
        n_h = int(members.sum())
        lam_h = data.Lambda[members]
        y_h = y[members]
        tau_h = 1.0 / state.params.sigma2[h]
        prec = tau_h * (lam_h.T @ lam_h) + config.prec_beta
        shift = tau_h * (lam_h.T @ y_h) + config.prec_beta_mean
        try:
            beta[h] = _draw_gaussian_from_precision(prec, shift, rng)
        except np.linalg.LinAlgError as exc:
            raise ChainError(f"component {h}: posterior precision not SPD") from exc
        resid = y_h - lam_h @ beta[h]
        shape = config.a_sigma + 0.5 * n_h
        rate = config.b_sigma + 0.5 * float(resid @ resid)
        sigma2[h] = 1.0 / rng.gamma(shape, 1.0 / rate)
    return beta, sigma2


def gibbs_sweep(state: GibbsState, data: Dataset, config: ModelConfig,
                rng: RngStream) -> GibbsState:
    """One full sweep in the fixed order [1], [2], [3], [4]; mutates the state."""
    state.G = step_allocate(state, data, config, rng)
    state.params.alpha, state.omega = step_update_alpha(state, data, config, rng)
    state.params.beta, state.params.sigma2 = step_update_kernels(state, data, config, rng)
    return state


def run_chain(data: Dataset, config: ModelConfig, iterations: int, burn_in: int,
              thin: int = 1, seed: int = 0,
              init: GibbsState | None = None) -> ChainOutput:
    """Run the sampler and retain every ``thin``-th post-burn-in draw."""
    if not (iterations > burn_in >= 0):
        raise ValueError("need iterations > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = make_stream(seed)
    state = init if init is not None else init_state(data, config, rng)
    state.validate(config, data.n)

    n_draws = (iterations - burn_in) // thin
    H, P, R = config.H, config.P, config.R
    alpha = np.empty((n_draws, H - 1, R))
    beta = np.empty((n_draws, H, P))
    sigma2 = np.empty((n_draws, H))
    occupancy = np.empty((n_draws, H), dtype=np.int64)

    t0 = time.perf_counter()
    kept = 0
    for sweep in range(1, iterations + 1):
        try:
            gibbs_sweep(state, data, config, rng)
        except Exception as exc:
            raise ChainError(f"sweep {sweep} failed: {exc}") from exc
        if sweep > burn_in and (sweep - burn_in) % thin == 0 and kept < n_draws:
            alpha[kept] = state.params.alpha
            beta[kept] = state.params.beta
            sigma2[kept] = state.params.sigma2
            occupancy[kept] = np.bincount(state.G, minlength=H)
            kept += 1
    return ChainOutput(alpha=alpha, beta=beta, sigma2=sigma2, occupancy=occupancy,
                       seed=seed, iterations=iterations, burn_in=burn_in, thin=thin,
                       elapsed_seconds=time.perf_counter() - t0)


def posterior_density_summary(chain: ChainOutput, x_grid, y_grid,
                              transform) -> DensityGrid:
    """Posterior mean density with 95% pointwise bands, on original data units."""
    if chain.n_draws < 1:
        raise ValueError("chain holds no retained draws")
    if transform is None:
        raise ValueError("a data transform is required to build grid designs")
    x_grid = np.asarray(x_grid, dtype=float).ravel()
    return summarize_density_draws(
        chain.alpha, chain.beta, chain.sigma2,
        transform.lambda_design(x_grid), transform.psi_design(x_grid),
        x_grid, y_grid, y_record=transform.y,
    )


def posterior_cdf_summary(chain: ChainOutput, x_grid, thresholds,
                          transform) -> CdfCurves:
    """Posterior mean threshold-probability curves with 95% pointwise bands."""
    if chain.n_draws < 1:
        raise ValueError("chain holds no retained draws")
    if transform is None:
        raise ValueError("a data transform is required to build grid designs")
    x_grid = np.asarray(x_grid, dtype=float).ravel()
    return summarize_cdf_draws(
        chain.alpha, chain.beta, chain.sigma2,
        transform.lambda_design(x_grid), transform.psi_design(x_grid),
        x_grid, thresholds, y_record=transform.y,
    )
