"""Ground-truth synthetic data for benchmarks and end-to-end checks.

The generator draws a predictor, forms true stick weights from logistic
transforms of linear logits in [1, x], samples memberships and Gaussian
responses, and then pushes (x, y) through the same design pipeline real data
would use.  Truth (labels, parameters on the raw scale) rides along for
verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import (
    DataTransform,
    SplineSpec,
    StandardizationRecord,
    linear_kernel_design,
    spline_basis,
    standardize,
)
from .model import Dataset, stick_break_log_weights


@dataclass(frozen=True)
class SyntheticSpec:
    """True data-generating mixture on the raw (x, y) scale.

    ``weight_logits`` has one row per stick (components - 1) with columns
    (intercept, slope) acting on [1, x]; ``kernel_coefs`` has one
    (intercept, slope) row per component; ``sigma2`` the true variances.
    """

    n: int
    weight_logits: tuple
    kernel_coefs: tuple
    sigma2: tuple
    x_dist: str = "uniform"        # uniform | lognormal
    x_params: tuple = (0.0, 1.0)   # (lo, hi) or (log-mean, log-sd)
    seed: int = 0

    def __post_init__(self) -> None:
        k = len(self.kernel_coefs)
        if len(self.sigma2) != k or len(self.weight_logits) != k - 1:
            raise ValueError("component counts of coefficients and variances disagree")
        if any(s <= 0 for s in self.sigma2):
            raise ValueError("true variances must be positive")
        if self.x_dist not in ("uniform", "lognormal"):
            raise ValueError(f"unknown predictor distribution {self.x_dist!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def n_components(self) -> int:
        return len(self.kernel_coefs)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "weight_logits": [list(r) for r in self.weight_logits],
            "kernel_coefs": [list(r) for r in self.kernel_coefs],
            "sigma2": list(self.sigma2),
            "x_dist": self.x_dist,
            "x_params": list(self.x_params),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(
            n=d["n"],
            weight_logits=tuple(tuple(r) for r in d["weight_logits"]),
            kernel_coefs=tuple(tuple(r) for r in d["kernel_coefs"]),
            sigma2=tuple(d["sigma2"]),
            x_dist=d.get("x_dist", "uniform"),
            x_params=tuple(d.get("x_params", (0.0, 1.0))),
            seed=d.get("seed", 0),
        )


@dataclass
class SyntheticData:
    """Generated dataset plus the truth used to create it."""

    dataset: Dataset
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    true_weights: np.ndarray   # (n, components) at the sampled predictors
    spec: SyntheticSpec = field(repr=False, default=None)


def two_component_spec(n: int, seed: int = 0) -> SyntheticSpec:
    """A well-separated two-component mixture whose balance shifts with x."""
    return SyntheticSpec(
        n=n,
        weight_logits=((2.0, -4.0),),
        kernel_coefs=((-1.0, 2.0), (2.0, -1.0)),
        sigma2=(0.16, 0.36),
        x_dist="uniform",
        x_params=(0.0, 1.0),
        seed=seed,
    )


def build_dataset(x: np.ndarray, y: np.ndarray, num_basis: int = 5,
                  standardize_x: bool = True, standardize_y: bool = True) -> Dataset:
    """Shared design pipeline: standardize, linear kernel design, spline logit design."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if standardize_x:
        x_model, x_rec = standardize(x)
    else:
        x_model, x_rec = x, StandardizationRecord.identity()
    if standardize_y:
        _, y_rec = standardize(y)
    else:
        y_rec = StandardizationRecord.identity()
    spline = SplineSpec.from_quantiles(x_model, num_basis=num_basis)
    transform = DataTransform(x=x_rec, y=y_rec, spline=spline)
    return Dataset(
        y=y,
        Lambda=linear_kernel_design(x_model),
        Psi=spline_basis(x_model, spline),
        transform=transform,
    )


def generate_synthetic(spec: SyntheticSpec, num_basis: int = 5,
                       standardize_x: bool = True,
                       standardize_y: bool = True) -> SyntheticData:
    """Draw (x, y, labels) from the true mixture and package the fit-ready dataset."""
    rng = np.random.default_rng(spec.seed)
    if spec.x_dist == "uniform":
        lo, hi = spec.x_params
        x = rng.uniform(lo, hi, size=spec.n)
    else:
        mu, sd = spec.x_params
        x = rng.lognormal(mu, sd, size=spec.n)

    design = np.column_stack([np.ones_like(x), x])
    logits = (design @ np.asarray(spec.weight_logits, dtype=float).T
              if spec.n_components > 1 else np.zeros((spec.n, 0)))
    weights = np.exp(stick_break_log_weights(logits))
    labels = np.argmax(np.log(weights) + rng.gumbel(size=weights.shape), axis=1)
    means = np.einsum("np,np->n", design,
                      np.asarray(spec.kernel_coefs, dtype=float)[labels])
    y = means + np.sqrt(np.asarray(spec.sigma2, dtype=float)[labels]) \
        * rng.standard_normal(spec.n)

    dataset = build_dataset(x, y, num_basis=num_basis,
                            standardize_x=standardize_x, standardize_y=standardize_y)
    return SyntheticData(dataset=dataset, x=x, y=y, labels=labels,
                         true_weights=weights, spec=spec)
