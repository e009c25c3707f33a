"""Core types and deterministic mixture mathematics shared by every engine.

The model is a truncated predictor-dependent mixture of Gaussians.  Component
h has kernel N(lambda(x)' beta_h, sigma2_h).  The mixing weights follow a
logit stick-breaking construction: stick proportions nu_h(x) are the logistic
transform of linear predictors psi(x)' alpha_h for h < H, and the last
proportion is pinned to one so the truncated weights always form a simplex.

All functions here are pure; engines build their updates on top of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.special import expit, logsumexp, ndtr

if TYPE_CHECKING:  # pragma: no cover
    from .basis import DataTransform

LOG_2PI = float(np.log(2.0 * np.pi))

__all__ = [
    "DegenerateSimplexError",
    "ModelConfig",
    "Dataset",
    "MixtureParams",
    "WeightProfile",
    "compute_weights",
    "stick_break_log_weights",
    "continuation_ratio",
    "conditional_density",
    "conditional_log_density",
    "conditional_cdf",
    "component_log_joint",
    "component_log_posteriors",
    "log_likelihood",
    "truncation_bound",
    "sample_prior_params",
    "sample_observations",
]


class DegenerateSimplexError(ValueError):
    """Raised when a stick-breaking inversion hits a vanishing survivor mass."""


def _as_spd(name: str, m: np.ndarray, dim: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (dim, dim):
        raise ValueError(f"{name} must be {dim}x{dim}, got {m.shape}")
    if not np.allclose(m, m.T, atol=1e-10):
        raise ValueError(f"{name} is not symmetric")
    try:
        cholesky(m, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    return m


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Truncation level, design dimensions and all prior hyperparameters.

    The component base measure is Gaussian on the kernel coefficients and
    Gamma on the kernel precisions:

        beta_h    ~ N_P(mu_beta, Sigma_beta)
        1/sigma2_h ~ Gamma(a_sigma, rate=b_sigma)
        alpha_h   ~ N_R(mu_alpha, Sigma_alpha)   for the H-1 sticks
    """

    H: int
    mu_beta: np.ndarray
    Sigma_beta: np.ndarray
    mu_alpha: np.ndarray
    Sigma_alpha: np.ndarray
    a_sigma: float = 0.1
    b_sigma: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "mu_beta", np.asarray(self.mu_beta, dtype=float).ravel())
        object.__setattr__(self, "mu_alpha", np.asarray(self.mu_alpha, dtype=float).ravel())
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")
        object.__setattr__(self, "Sigma_beta", _as_spd("Sigma_beta", self.Sigma_beta, self.P))
        object.__setattr__(self, "Sigma_alpha", _as_spd("Sigma_alpha", self.Sigma_alpha, self.R))
        if not (self.a_sigma > 0 and self.b_sigma > 0):
            raise ValueError("a_sigma and b_sigma must be positive")

    @property
    def P(self) -> int:
        return self.mu_beta.shape[0]

    @property
    def R(self) -> int:
        return self.mu_alpha.shape[0]

    @classmethod
    def standard(cls, H: int, P: int, R: int, a_sigma: float = 0.1,
                 b_sigma: float = 0.1, alpha_scale: float = 1.0,
                 beta_scale: float = 1.0) -> "ModelConfig":
        """Zero-mean priors with isotropic covariances, the routine default."""
        return cls(
            H=H,
            mu_beta=np.zeros(P),
            Sigma_beta=beta_scale * np.eye(P),
            mu_alpha=np.zeros(R),
            Sigma_alpha=alpha_scale * np.eye(R),
            a_sigma=a_sigma,
            b_sigma=b_sigma,
        )

    # Cached prior factorizations used in every conjugate update.
    @cached_property
    def chol_Sigma_alpha(self) -> np.ndarray:
        return cholesky(self.Sigma_alpha, lower=True)

    @cached_property
    def chol_Sigma_beta(self) -> np.ndarray:
        return cholesky(self.Sigma_beta, lower=True)

    @cached_property
    def prec_alpha(self) -> np.ndarray:
        return cho_solve((self.chol_Sigma_alpha, True), np.eye(self.R))

    @cached_property
    def prec_beta(self) -> np.ndarray:
        return cho_solve((self.chol_Sigma_beta, True), np.eye(self.P))

    @cached_property
    def prec_alpha_mean(self) -> np.ndarray:
        return self.prec_alpha @ self.mu_alpha

    @cached_property
    def prec_beta_mean(self) -> np.ndarray:
        return self.prec_beta @ self.mu_beta

    @cached_property
    def logdet_Sigma_alpha(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_Sigma_alpha))))

    @cached_property
    def logdet_Sigma_beta(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_Sigma_beta))))

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "mu_beta": self.mu_beta.tolist(),
            "Sigma_beta": self.Sigma_beta.tolist(),
            "mu_alpha": self.mu_alpha.tolist(),
            "Sigma_alpha": self.Sigma_alpha.tolist(),
            "a_sigma": self.a_sigma,
            "b_sigma": self.b_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            H=d["H"],
            mu_beta=np.asarray(d["mu_beta"]),
            Sigma_beta=np.asarray(d["Sigma_beta"]),
            mu_alpha=np.asarray(d["mu_alpha"]),
            Sigma_alpha=np.asarray(d["Sigma_alpha"]),
            a_sigma=d["a_sigma"],
            b_sigma=d["b_sigma"],
        )


@dataclass
class Dataset:
    """Response plus the two design matrices.

    ``y`` stays in original units.  When a standardization transform is
    attached, engines fit the standardized response (``model_y``) and density
    summaries map results back through the transform's Jacobian.
    """

    y: np.ndarray
    Lambda: np.ndarray
    Psi: np.ndarray
    transform: "DataTransform | None" = None

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.Lambda = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        self.Psi = np.atleast_2d(np.asarray(self.Psi, dtype=float))
        n = self.y.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one unit")
        if self.Lambda.shape[0] != n or self.Psi.shape[0] != n:
            raise ValueError(
                f"row mismatch: y has {n}, Lambda {self.Lambda.shape[0]}, "
                f"Psi {self.Psi.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def model_y(self) -> np.ndarray:
        """Response on the scale the engines fit (standardized when possible)."""
        if self.transform is None or self.transform.y is None:
            return self.y
        return self.transform.y.apply(self.y)


@dataclass
class MixtureParams:
    """One full parameter point: stick coefficients, kernel coefficients, variances."""

    alpha: np.ndarray   # (H-1, R)
    beta: np.ndarray    # (H, P)
    sigma2: np.ndarray  # (H,)

    def __post_init__(self) -> None:
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.sigma2 = np.asarray(self.sigma2, dtype=float).ravel()

    @property
    def H(self) -> int:
        return self.beta.shape[0]

    def validate(self, config: ModelConfig) -> None:
        if self.beta.shape != (config.H, config.P):
            raise ValueError(f"beta must be {(config.H, config.P)}, got {self.beta.shape}")
        if self.alpha.shape != (config.H - 1, config.R):
            raise ValueError(
                f"alpha must be {(config.H - 1, config.R)}, got {self.alpha.shape}"
            )
        if self.sigma2.shape != (config.H,):
            raise ValueError(f"sigma2 must have length {config.H}")
        if not np.all(self.sigma2 > 0):
            raise ValueError("all sigma2 entries must be strictly positive")

    def copy(self) -> "MixtureParams":
        return MixtureParams(self.alpha.copy(), self.beta.copy(), self.sigma2.copy())


@dataclass
class WeightProfile:
    """Stick proportions and the mixture weights they induce at one predictor value."""

    nu: np.ndarray  # (H-1,) proportions in (0,1); the H-th equals 1 implicitly
    pi: np.ndarray  # (H,) simplex


def stick_break_log_weights(eta: np.ndarray) -> np.ndarray:
    """Log mixture weights from stick logits, fully in log space.

    ``eta`` has shape (..., H-1); the result has shape (..., H) with the last
    column carrying the survivor mass (last stick proportion pinned to one).
    Log-space evaluation keeps resolution far past where expit saturates.
    """
    eta = np.asarray(eta, dtype=float)
    log_nu = -np.logaddexp(0.0, -eta)      # log logistic(eta)
    log_one_minus = -np.logaddexp(0.0, eta)
    shape = eta.shape[:-1]
    prefix = np.concatenate(
        [np.zeros(shape + (1,)), np.cumsum(log_one_minus, axis=-1)], axis=-1
    )
    log_pi = np.empty(shape + (eta.shape[-1] + 1,))
    log_pi[..., :-1] = log_nu + prefix[..., :-1]
    log_pi[..., -1] = prefix[..., -1]
    return log_pi


def compute_weights(psi_row: np.ndarray, alpha: np.ndarray) -> WeightProfile:
    """Mixture weights at one predictor value from the stick coefficients."""
    psi_row = np.asarray(psi_row, dtype=float).ravel()
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape[0] > 0 and alpha.shape[1] != psi_row.shape[0]:
        raise ValueError(
            f"psi has length {psi_row.shape[0]} but alpha rows have length {alpha.shape[1]}"
        )
    eta = alpha @ psi_row if alpha.shape[0] else np.zeros(0)
    nu = expit(eta)
    pi = np.exp(stick_break_log_weights(eta))
    return WeightProfile(nu=nu, pi=pi)


def continuation_ratio(pi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Invert mixture weights back to stick proportions.

    nu_h = pi_h / (1 - sum_{l<h} pi_l); the last entry equals one for a valid
    simplex.  A survivor mass at or below ``tol`` is an upstream bug, not a
    situation to clamp silently.
    """
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size < 1:
        raise ValueError("pi must be nonempty")
    if np.any(pi < -1e-12) or abs(pi.sum() - 1.0) > 1e-8:
        raise ValueError("pi is not a probability simplex")
    # tail sums rather than 1 - head sums: same quantity on a simplex, but
    # immune to cancellation when the survivor mass is tiny
    survivors = np.cumsum(pi[::-1])[::-1]
    if np.any(survivors <= tol):
        raise DegenerateSimplexError(
            "survivor mass vanished before the final component"
        )
    return pi / survivors


def _kernel_log_density(y: np.ndarray, means: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    z2 = (y - means) ** 2 / sigma2
    return -0.5 * (LOG_2PI + np.log(sigma2) + z2)


def conditional_log_density(y, lambda_row, psi_row, params: MixtureParams):
    """log f_x(y) for the truncated mixture, via log-sum-exp over components."""
    lambda_row = np.asarray(lambda_row, dtype=float).ravel()
    psi_row = np.asarray(psi_row, dtype=float).ravel()
    log_pi = stick_break_log_weights(
        params.alpha @ psi_row if params.alpha.shape[0] else np.zeros(0)
    )
    means = params.beta @ lambda_row
    y_arr = np.asarray(y, dtype=float)
    comp = _kernel_log_density(y_arr[..., None], means, params.sigma2)
    out = logsumexp(log_pi + comp, axis=-1)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def conditional_density(y, lambda_row, psi_row, params: MixtureParams):
    """f_x(y) >= 0; integrates to one over y for any valid parameter point."""
    return np.exp(conditional_log_density(y, lambda_row, psi_row, params))


def conditional_cdf(y_star, lambda_row, psi_row, params: MixtureParams):
    """pr(y < y_star | x) in closed form: a weight-mixture of normal CDFs."""
    lambda_row = np.asarray(lambda_row, dtype=float).ravel()
    psi_row = np.asarray(psi_row, dtype=float).ravel()
    pi = np.exp(stick_break_log_weights(
        params.alpha @ psi_row if params.alpha.shape[0] else np.zeros(0)
    ))
    means = params.beta @ lambda_row
    sd = np.sqrt(params.sigma2)
    y_arr = np.asarray(y_star, dtype=float)
    vals = np.sum(pi * ndtr((y_arr[..., None] - means) / sd), axis=-1)
    return float(vals) if np.isscalar(y_star) or y_arr.ndim == 0 else vals


def component_log_joint(params: MixtureParams, y: np.ndarray,
                        Lambda: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    """Per-(unit, component) log pi_h(x_i) + log N(y_i; lambda_i' beta_h, sigma2_h).

    This is the shared kernel behind Gibbs allocation and the ECM
    responsibilities; both must agree exactly, so both call here.
    """
    eta = Psi @ params.alpha.T if params.alpha.shape[0] else np.zeros((len(y), 0))
    log_pi = stick_break_log_weights(eta)
    means = Lambda @ params.beta.T
    return log_pi + _kernel_log_density(y[:, None], means, params.sigma2)


def component_log_posteriors(params: MixtureParams, y: np.ndarray,
                             Lambda: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    """Row-normalized membership log probabilities, shape (n, H)."""
    lj = component_log_joint(params, y, Lambda, Psi)
    return lj - logsumexp(lj, axis=1, keepdims=True)


def log_likelihood(data: Dataset, params: MixtureParams) -> float:
    """Sum of log conditional densities over units, on the model scale.

    Underflow is reported as -inf rather than raising; callers treat a
    non-finite value as an explicit signal.
    """
    lj = component_log_joint(params, data.model_y, data.Lambda, data.Psi)
    return float(np.sum(logsumexp(lj, axis=1)))


def truncation_bound(mu1nu: np.ndarray, H: int) -> float:
    """L1 error bound of the H-component truncation of the infinite mixture.

    Equals 4 * sum_i (1 - mu1nu_i)^(H-1), where mu1nu_i is the prior mean of a
    stick proportion at predictor value x_i.  Decays geometrically in H.
    """
    mu = np.asarray(mu1nu, dtype=float).ravel()
    if np.any(mu <= 0.0) or np.any(mu >= 1.0):
        raise ValueError("all mu1nu entries must lie strictly inside (0, 1)")
    H = int(H)
    if H < 2:
        raise ValueError("truncation bound requires H >= 2")
    return float(4.0 * np.sum((1.0 - mu) ** (H - 1)))


def sample_prior_params(config: ModelConfig, rng: np.random.Generator) -> MixtureParams:
    """One draw of the full parameter point from its prior."""
    H, P, R = config.H, config.P, config.R
    alpha = config.mu_alpha + rng.standard_normal((H - 1, R)) @ config.chol_Sigma_alpha.T
    beta = config.mu_beta + rng.standard_normal((H, P)) @ config.chol_Sigma_beta.T
    tau = rng.gamma(config.a_sigma, 1.0 / config.b_sigma, size=H)
    return MixtureParams(alpha=alpha, beta=beta, sigma2=1.0 / tau)


def sample_observations(params: MixtureParams, Lambda: np.ndarray, Psi: np.ndarray,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw (y, labels) from the mixture at the given designs, model scale."""
    n = Lambda.shape[0]
    eta = Psi @ params.alpha.T if params.alpha.shape[0] else np.zeros((n, 0))
    log_pi = stick_break_log_weights(eta)
    labels = np.argmax(log_pi + rng.gumbel(size=log_pi.shape), axis=1)
    means = np.einsum("np,np->n", Lambda, params.beta[labels])
    y = means + np.sqrt(params.sigma2[labels]) * rng.standard_normal(n)
    return y, labels
