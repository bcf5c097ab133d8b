"""Exponential rate family: log-linear model with analytical derivatives.

The hazard of individual i given the set C of already-adopted neighbors is
exp(x_i' beta + (|C|/d_i) delta). Derivatives with respect to (beta, delta)
have the outer-product form rate * v and rate * v v' with v = (x_i, |C|/d_i).

The context object carries the full adopted-neighbor set so heterogeneous
extensions (set-dependent rates) can plug in; the shipped model only uses
the count.
"""

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Theta:
    """Covariate coefficients plus the scalar peer-effect coefficient."""

    beta: np.ndarray
    delta: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.ndim != 1:
            raise ValueError("beta must be a vector")
        if not np.all(np.isfinite(beta)) or not np.isfinite(self.delta):
            raise ValueError("theta entries must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, [self.delta]])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "Theta":
        v = np.asarray(v, dtype=float)
        return cls(beta=v[:-1], delta=float(v[-1]))

    def to_json(self) -> str:
        return json.dumps({"beta": self.beta.tolist(), "delta": self.delta})

    @classmethod
    def from_json(cls, s: str) -> "Theta":
        obj = json.loads(s)
        return cls(beta=np.asarray(obj["beta"], dtype=float), delta=float(obj["delta"]))


@dataclass(frozen=True)
class RateContext:
    """One individual's covariates, degree, and set of adopted neighbors."""

    individual: int
    adopted_neighbors: frozenset
    covariates: np.ndarray
    degree: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.covariates, dtype=float))
        x.setflags(write=False)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "adopted_neighbors", frozenset(self.adopted_neighbors))
        if self.individual in self.adopted_neighbors:
            raise ValueError("adopted_neighbors must exclude the individual itself")
        if len(self.adopted_neighbors) > self.degree:
            raise ValueError(
                f"adopted neighbor count {len(self.adopted_neighbors)} exceeds "
                f"degree {self.degree}"
            )


def adopted_fraction(ctx: RateContext) -> float:
    """|C|/d_i, defined as 0 for isolated individuals."""
    if ctx.degree == 0:
        return 0.0
    return len(ctx.adopted_neighbors) / ctx.degree


def log_rate(ctx: RateContext, theta: Theta) -> float:
    if ctx.covariates.shape[0] != theta.p:
        raise ValueError("covariate dimension does not match theta")
    return float(ctx.covariates @ theta.beta + adopted_fraction(ctx) * theta.delta)


def rate(ctx: RateContext, theta: Theta) -> float:
    """exp(x'beta + (|C|/d) delta); strictly positive."""
    return float(np.exp(log_rate(ctx, theta)))


def _direction(ctx: RateContext) -> np.ndarray:
    return np.concatenate([ctx.covariates, [adopted_fraction(ctx)]])


def rate_grad(ctx: RateContext, theta: Theta) -> np.ndarray:
    """Gradient of the rate in (beta, delta): rate * (x, |C|/d)."""
    return rate(ctx, theta) * _direction(ctx)


def rate_hess(ctx: RateContext, theta: Theta) -> np.ndarray:
    """Hessian of the rate: rate * v v' with v = (x, |C|/d); rank <= 1, PSD."""
    v = _direction(ctx)
    return rate(ctx, theta) * np.outer(v, v)
