"""Design-matrix construction: standardization and the natural cubic spline basis.

The kernel design is linear, Lambda = [1, x].  The stick-logit design Psi is
an intercept plus K natural cubic spline columns.  The spline basis is built
from a cubic B-spline basis constrained to zero second derivative at the
boundary knots (so every basis function is linear outside them), with the
constant direction removed so that [1 | spline columns] has full rank.  All
basis functions are determined by the knots alone, which is what lets a grid
of new predictor values be pushed through the identical design as the
training data.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline


@dataclass(frozen=True)
class StandardizationRecord:
    """Center/scale pair for one column; apply then invert is the identity."""

    center: float
    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, v):
        return (np.asarray(v, dtype=float) - self.center) / self.scale

    def invert(self, v):
        return np.asarray(v, dtype=float) * self.scale + self.center

    @classmethod
    def identity(cls) -> "StandardizationRecord":
        return cls(center=0.0, scale=1.0)


def standardize(x) -> tuple[np.ndarray, StandardizationRecord]:
    """Center to mean zero and scale to unit sample standard deviation (n-1)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] < 2:
        raise ValueError("standardize needs at least two observations")
    center = float(np.mean(x))
    scale = float(np.std(x, ddof=1))
    if scale == 0.0 or not np.isfinite(scale):
        raise ValueError("degenerate column: constant input cannot be standardized")
    rec = StandardizationRecord(center=center, scale=scale)
    return rec.apply(x), rec


@dataclass(frozen=True)
class SplineSpec:
    """Knot layout for the natural cubic spline columns of the logit design.

    ``num_basis`` counts spline columns excluding the intercept; a natural
    spline space of that size needs num_basis - 1 interior knots between the
    two boundary knots.
    """

    num_basis: int
    interior_knots: tuple[float, ...]
    boundary_knots: tuple[float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "interior_knots", tuple(float(k) for k in self.interior_knots))
        object.__setattr__(self, "boundary_knots",
                           (float(self.boundary_knots[0]), float(self.boundary_knots[1])))
        if self.num_basis < 1:
            raise ValueError("num_basis must be >= 1")
        lo, hi = self.boundary_knots
        if not lo < hi:
            raise ValueError("boundary knots must be increasing")
        ks = self.interior_knots
        if len(ks) != self.num_basis - 1:
            raise ValueError(
                f"num_basis={self.num_basis} requires {self.num_basis - 1} interior knots, "
                f"got {len(ks)}"
            )
        if any(k2 <= k1 for k1, k2 in zip(ks, ks[1:])):
            raise ValueError("interior knots must be strictly increasing")
        if ks and not (lo < ks[0] and ks[-1] < hi):
            raise ValueError("interior knots must lie strictly inside the boundary knots")

    @classmethod
    def from_quantiles(cls, x, num_basis: int = 5) -> "SplineSpec":
        """Interior knots at equally spaced quantiles, boundaries at min/max."""
        x = np.asarray(x, dtype=float).ravel()
        lo, hi = float(np.min(x)), float(np.max(x))
        if not lo < hi:
            raise ValueError("cannot place knots on a constant predictor")
        if num_basis > 1:
            probs = np.arange(1, num_basis) / num_basis
            interior = np.quantile(x, probs)
            # quantile ties would violate strict ordering; nudge into the open interval
            interior = np.clip(interior, lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))
            interior = tuple(np.maximum.accumulate(interior).tolist())
            if any(b <= a for a, b in zip(interior, interior[1:])):
                raise ValueError("predictor too discrete for the requested number of knots")
        else:
            interior = ()
        return cls(num_basis=num_basis, interior_knots=interior, boundary_knots=(lo, hi))

    def to_dict(self) -> dict:
        return {
            "num_basis": self.num_basis,
            "interior_knots": list(self.interior_knots),
            "boundary_knots": list(self.boundary_knots),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineSpec":
        return cls(num_basis=d["num_basis"],
                   interior_knots=tuple(d["interior_knots"]),
                   boundary_knots=(d["boundary_knots"][0], d["boundary_knots"][1]))


@lru_cache(maxsize=64)
def _natural_map(spec: SplineSpec):
    """B-spline object plus the coefficient map onto the natural subspace.

    Returns (bspline, d1, W): W maps the raw B-spline columns to num_basis
    columns spanning the natural spline space minus constants.  Deterministic
    in the spec (SVD signs are canonicalized).
    """
    lo, hi = spec.boundary_knots
    knots = np.concatenate([[lo] * 4, spec.interior_knots, [hi] * 4])
    n_b = len(spec.interior_knots) + 4
    spl = BSpline(knots, np.eye(n_b), 3, extrapolate=False)
    d1 = spl.derivative(1)
    d2 = spl.derivative(2)
    constraints = np.vstack([d2(lo), d2(hi)])            # zero curvature at boundaries
    _, _, vt = np.linalg.svd(constraints)
    null = vt[2:].T                                      # n_b x (n_b - 2)
    # Remove the constant function (B-spline coefficients all one) from the span.
    u = null.T @ np.ones(n_b)
    u /= np.linalg.norm(u)
    proj = np.eye(u.shape[0]) - np.outer(u, u)
    _, _, vt2 = np.linalg.svd(proj)
    W = null @ vt2[: u.shape[0] - 1].T                   # n_b x num_basis
    for j in range(W.shape[1]):
        k = int(np.argmax(np.abs(W[:, j])))
        if W[k, j] < 0:
            W[:, j] = -W[:, j]
    return spl, d1, W


def spline_basis(x, spec: SplineSpec) -> np.ndarray:
    """Intercept column plus ``num_basis`` natural cubic spline columns.

    Each spline column has zero second derivative at and beyond the boundary
    knots; values outside the boundaries continue linearly.
    """
    x = np.asarray(x, dtype=float).ravel()
    spl, d1, W = _natural_map(spec)
    lo, hi = spec.boundary_knots
    B = spl(np.clip(x, lo, hi))
    below = x < lo
    above = x > hi
    if below.any():
        B[below] = spl(lo) + np.outer(x[below] - lo, d1(lo))
    if above.any():
        B[above] = spl(hi) + np.outer(x[above] - hi, d1(hi))
    out = np.empty((x.shape[0], spec.num_basis + 1))
    out[:, 0] = 1.0
    out[:, 1:] = B @ W
    return out


def linear_kernel_design(x) -> np.ndarray:
    """Kernel design [1, x], one row per unit."""
    x = np.asarray(x, dtype=float).ravel()
    return np.column_stack([np.ones_like(x), x])


@dataclass(frozen=True)
class DataTransform:
    """Everything needed to rebuild designs and map results to original units.

    Holds the predictor and response standardizations (identity records when
    standardization is off) and the spline layout on the standardized
    predictor scale.
    """

    x: StandardizationRecord
    y: StandardizationRecord
    spline: SplineSpec

    def lambda_design(self, raw_x) -> np.ndarray:
        return linear_kernel_design(self.x.apply(raw_x))

    def psi_design(self, raw_x) -> np.ndarray:
        return spline_basis(self.x.apply(raw_x), self.spline)

    def to_dict(self) -> dict:
        return {
            "x": {"center": self.x.center, "scale": self.x.scale},
            "y": {"center": self.y.center, "scale": self.y.scale},
            "spline": self.spline.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataTransform":
        return cls(
            x=StandardizationRecord(**d["x"]),
            y=StandardizationRecord(**d["y"]),
            spline=SplineSpec.from_dict(d["spline"]),
        )
