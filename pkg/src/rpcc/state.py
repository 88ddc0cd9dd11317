"""Hyperparameters, variational posterior parameters and their expectations."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .special import digamma


@dataclass
class Hyperparams:
    """Model and solver settings.

    Defaults for the hyperpriors are the non-informative values
    ``a0 = b0 = c0 = d0 = 1e-5``, ``alpha0 = beta0 = 1`` and ``z0 = 0.5``.
    ``sigma`` is the variance (not standard deviation) of the injected noise.

    ``anneal`` controls a warm-up: the solver starts from the larger of the ALS
    initializer's residual variance and ``warm_fraction`` times the mean square
    of the data, and multiplies it by ``anneal`` each sweep until it reaches
    ``sigma``. ``anneal = 1`` runs at ``sigma`` from the start.
    ``init_cov`` scales the identity used as the initial factor-row covariance.
    """

    rank: int = 10
    sigma: float = 1e-4
    a0: float = 1e-5
    b0: float = 1e-5
    c0: float = 1e-5
    d0: float = 1e-5
    alpha0: float = 1.0
    beta0: float = 1.0
    z0: float = 0.5
    max_iters: int = 500
    tol: float = 1e-6
    seed: int = 0
    als_sweeps: int = 100
    als_tol: float = 1e-6
    init_cov: float = 1.0
    anneal: float = 0.5
    warm_fraction: float = 1e-2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("sigma", "a0", "b0", "c0", "d0", "alpha0", "beta0", "tol", "als_tol"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        for name in ("rank", "max_iters", "als_sweeps"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not (np.isfinite(self.init_cov) and self.init_cov > 0):
            raise ValueError(f"init_cov must be a positive finite number, got {self.init_cov!r}")
        if not (np.isfinite(self.warm_fraction) and self.warm_fraction >= 0):
            raise ValueError(f"warm_fraction must be a nonnegative finite number, got {self.warm_fraction!r}")
        if not 0.0 < self.anneal <= 1.0:
            raise ValueError(f"anneal must lie in (0, 1], got {self.anneal!r}")
        if not 0.0 <= self.z0 <= 1.0:
            raise ValueError(f"z0 must lie in [0, 1], got {self.z0!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass
class FactorPosterior:
    """Gaussian posterior of every CP factor row.

    ``mu[n]`` has shape ``(I_n, R)`` and ``cov[n]`` has shape ``(I_n, R, R)``.
    """

    mu: list[np.ndarray]
    cov: list[np.ndarray]

    @property
    def rank(self) -> int:
        return self.mu[0].shape[1]

    def second_moments(self, n: int) -> np.ndarray:
        """``E[a a^T] = mu mu^T + Sigma`` for every row of mode ``n``, shape ``(I_n, R, R)``."""
        mu = self.mu[n]
        return mu[:, :, None] * mu[:, None, :] + self.cov[n]

    def copy(self) -> "FactorPosterior":
        return FactorPosterior([m.copy() for m in self.mu], [c.copy() for c in self.cov])


@dataclass
class LambdaPosterior:
    a: np.ndarray
    b: np.ndarray


@dataclass
class TauPosterior:
    c: np.ndarray
    d: np.ndarray


@dataclass
class EtaPosterior:
    alpha: float
    beta: float


@dataclass
class ZUpdateTerms:
    theta1: np.ndarray
    theta2: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        return self.theta1 - self.theta2


@dataclass
class PosteriorState:
    factors: FactorPosterior
    lam: LambdaPosterior
    tau: TauPosterior
    zbar: np.ndarray
    eta: EtaPosterior
    terms: ZUpdateTerms | None = field(default=None)

    def copy(self) -> "PosteriorState":
        return PosteriorState(
            self.factors.copy(),
            LambdaPosterior(self.lam.a.copy(), self.lam.b.copy()),
            TauPosterior(self.tau.c.copy(), self.tau.d.copy()),
            self.zbar.copy(),
            EtaPosterior(self.eta.alpha, self.eta.beta),
            self.terms,
        )


def expected_lambda(lam: LambdaPosterior) -> np.ndarray:
    return lam.a / lam.b


def expected_outer(fp: FactorPosterior, n: int, i: int) -> np.ndarray:
    mu = fp.mu[n][i]
    return np.outer(mu, mu) + fp.cov[n][i]


def expected_log_eta(eta: EtaPosterior) -> tuple[float, float]:
    """``(E[ln eta], E[ln(1 - eta)])`` under ``Beta(alpha, beta)``."""
    total = digamma(eta.alpha + eta.beta)
    return digamma(eta.alpha) - total, digamma(eta.beta) - total
