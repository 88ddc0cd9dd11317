"""Variational Bayesian CP solver for robust principal component completion.

The observation ``Y`` is modelled block by block as coming either from a
low-CP-rank background plus injected noise or from a sparse foreground block
with its own variance. Coordinate ascent over the mean-field posteriors yields
the background estimate and a binary block support.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .als import cp_als
from .special import digamma
from .state import (
    EtaPosterior,
    FactorPosterior,
    Hyperparams,
    LambdaPosterior,
    PosteriorState,
    TauPosterior,
    ZUpdateTerms,
    expected_lambda,
    expected_log_eta,
)
from .tensor import BlockLayout, b_unfold, block_project, contract_except, cp_compose, expand_blocks

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
# exp() overflows past this exponent; logistic saturates to exactly 0 or 1
EXP_LIMIT = 709.0
JITTER = 1e-12


class NumericalError(RuntimeError):
    """A precision matrix could not be factorized even after jitter."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class NoisyObservation:
    Y: np.ndarray
    Yhat: np.ndarray
    layout: BlockLayout
    column_norm_sq: np.ndarray


@dataclass
class SolveResult:
    Lhat: np.ndarray
    Shat: np.ndarray
    support: frozenset[int]
    zbar: np.ndarray
    iterations: int
    converged: bool
    delta_trace: list[float] = field(default_factory=list)
    hardness: float = float("nan")
    state: PosteriorState | None = None
    seconds: float = 0.0


def add_noise(Y: np.ndarray, layout: BlockLayout, sigma: float, seed=0) -> NoisyObservation:
    """Return ``Y + E`` with ``E`` i.i.d. zero-mean Gaussian of variance ``sigma``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    Y = np.asarray(Y, dtype=float)
    layout.check(Y.shape)
    rng = np.random.default_rng(seed)
    Yhat = Y + math.sqrt(sigma) * rng.standard_normal(Y.shape)
    norms = np.square(b_unfold(Yhat, layout)).sum(axis=0)
    return NoisyObservation(Y, Yhat, layout, norms)


def init_state(factors: list[np.ndarray], K: int, hp: Hyperparams) -> PosteriorState:
    R = factors[0].shape[1]
    cov = [np.broadcast_to(hp.init_cov * np.eye(R), (A.shape[0], R, R)).copy() for A in factors]
    return PosteriorState(
        factors=FactorPosterior([np.array(A, dtype=float) for A in factors], cov),
        lam=LambdaPosterior(np.full(R, hp.a0), np.full(R, hp.b0)),
        tau=TauPosterior(np.full(K, hp.c0), np.full(K, hp.d0)),
        zbar=np.full(K, float(hp.z0)),
        eta=EtaPosterior(hp.alpha0, hp.beta0),
    )


def _spd_inverse(P: np.ndarray, mode: int) -> np.ndarray:
    """Batched inverse of symmetric positive-definite matrices, with one jitter retry."""
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    eye = np.eye(P.shape[-1])
    for attempt in range(2):
        try:
            np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            if attempt:
                raise NumericalError(
                    f"precision matrix of mode {mode} is not positive definite",
                    mode=mode,
                    min_diag=float(np.min(np.diagonal(P, axis1=-2, axis2=-1))),
                )
            P = P + JITTER * eye
            continue
        S = np.linalg.inv(P)
        return 0.5 * (S + np.swapaxes(S, -1, -2))
    raise AssertionError("unreachable")


def update_factors(state: PosteriorState, Yhat: np.ndarray, layout: BlockLayout, sigma: float) -> None:
    """Refresh every factor-row Gaussian, modes in ascending order.

    Rows of one mode only read the other modes, so each mode is done as one
    batched solve from a snapshot of the remaining modes.
    """
    fp = state.factors
    N = Yhat.ndim
    R = fp.rank
    weight = expand_blocks((1.0 - state.zbar) / sigma, layout)
    weighted_y = weight * Yhat
    ridge = np.diag(expected_lambda(state.lam))
    second = [fp.second_moments(n).reshape(-1, R * R) for n in range(N)]
    for n in range(N):
        prec = contract_except(weight, second, n).reshape(-1, R, R) + ridge
        cov = _spd_inverse(prec, n)
        rhs = contract_except(weighted_y, fp.mu, n)
        fp.cov[n] = cov
        fp.mu[n] = np.einsum("irs,is->ir", cov, rhs)
        second[n] = fp.second_moments(n).reshape(-1, R * R)


def update_lambda(state: PosteriorState, hp: Hyperparams) -> None:
    fp = state.factors
    R = fp.rank
    total_rows = sum(m.shape[0] for m in fp.mu)
    sq = np.zeros(R)
    for mu, cov in zip(fp.mu, fp.cov):
        sq += np.square(mu).sum(axis=0) + np.diagonal(cov, axis1=1, axis2=2).sum(axis=0)
    state.lam = LambdaPosterior(np.full(R, hp.a0 + 0.5 * total_rows), hp.b0 + 0.5 * sq)


def update_tau(state: PosteriorState, obs: NoisyObservation, hp: Hyperparams) -> None:
    J = obs.layout.J
    state.tau = TauPosterior(
        hp.c0 + 0.5 * J * state.zbar,
        hp.d0 + 0.5 * state.zbar * obs.column_norm_sq,
    )


def block_moments(fp: FactorPosterior, Yhat: np.ndarray, layout: BlockLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-block ``yhat_k^T E[l_k]`` and ``E[l_k^T l_k]`` for all blocks at once."""
    R = fp.rank
    mean = cp_compose(fp.mu)
    second = cp_compose([fp.second_moments(n).reshape(-1, R * R) for n in range(len(fp.mu))])
    cross = b_unfold(Yhat * mean, layout).sum(axis=0)
    energy = b_unfold(second, layout).sum(axis=0)
    return cross, energy


def expected_l_moments(fp: FactorPosterior, layout: BlockLayout, k: int) -> tuple[np.ndarray, float]:
    """``(E[l_k], E[l_k^T l_k])`` for block ``k`` of the low-rank component."""
    R = fp.rank
    mean = b_unfold(cp_compose(fp.mu), layout)[:, k]
    second = cp_compose([fp.second_moments(n).reshape(-1, R * R) for n in range(len(fp.mu))])
    return mean, float(b_unfold(second, layout)[:, k].sum())


def stable_logistic(x: np.ndarray) -> np.ndarray:
    """``1 / (1 + exp(-x))`` saturating to exactly 0 or 1 beyond +-709."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x < -EXP_LIMIT
    hi = x > EXP_LIMIT
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    xm = x[mid]
    pos = xm >= 0
    e = np.exp(-np.abs(xm))
    out[mid] = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
    return out


def update_z(state: PosteriorState, obs: NoisyObservation, sigma: float) -> ZUpdateTerms:
    """Bernoulli support posteriors, using the small-sigma TIG expectations."""
    J = obs.layout.J
    c, d = state.tau.c, state.tau.d
    e_ln_eta, e_ln_1m_eta = expected_log_eta(state.eta)
    ysq = obs.column_norm_sq
    theta1 = -0.5 * ysq * (c / d) - 0.5 * J * LOG_2PI - 0.5 * J * (np.log(d) - digamma(c)) + e_ln_eta
    cross, energy = block_moments(state.factors, obs.Yhat, obs.layout)
    theta2 = (
        -(ysq - 2.0 * cross + energy) / (2.0 * sigma)
        - 0.5 * J * math.log(2.0 * math.pi * sigma)
        + e_ln_1m_eta
    )
    terms = ZUpdateTerms(theta1, theta2)
    state.zbar = stable_logistic(theta1 - theta2)
    state.terms = terms
    return terms


def update_eta(state: PosteriorState, hp: Hyperparams) -> None:
    s = float(state.zbar.sum())
    K = state.zbar.size
    state.eta = EtaPosterior(hp.alpha0 + s, hp.beta0 + K - s)


def parameter_change(state: PosteriorState, prev: PosteriorState) -> float:
    dz = float(np.max(np.abs(state.zbar - prev.zbar))) if state.zbar.size else 0.0
    dmu = max(float(np.max(np.abs(a - b))) for a, b in zip(state.factors.mu, prev.factors.mu))
    return max(dz, dmu)


def convergence_check(state: PosteriorState, prev: PosteriorState, tol: float) -> bool:
    return parameter_change(state, prev) < tol


def run(
    Y: np.ndarray,
    layout: BlockLayout,
    hp: Hyperparams,
    callback: Callable[[int, PosteriorState], None] | None = None,
) -> SolveResult:
    """Decompose ``Y`` into a low-CP-rank background and a blockwise-sparse foreground.

    Parameters
    ----------
    Y : ndarray
        Observation tensor.
    layout : BlockLayout
        Block partition, compatible with ``Y.shape``.
    hp : Hyperparams
        Model and solver settings; results are deterministic in ``hp.seed``.
    callback : callable, optional
        Called as ``callback(iteration, state)`` after each sweep.

    Returns
    -------
    SolveResult
        ``Shat`` is the projection of the original (noise-free) ``Y`` onto the
        estimated support ``{k : zbar_k > 0}``.
    """
    t0 = time.perf_counter()
    hp.validate()
    Y = np.asarray(Y, dtype=float)
    layout.check(Y.shape)
    noise_seed, als_seed = np.random.SeedSequence(int(hp.seed)).spawn(2)
    obs = add_noise(Y, layout, hp.sigma, noise_seed)
    factors, als_resid = cp_als(obs.Yhat, hp.rank, hp.als_sweeps, hp.als_tol, np.random.default_rng(als_seed))
    log.debug("ALS initializer relative residual %.3e", als_resid)
    state = init_state(factors, layout.K, hp)
    sigma_t = hp.sigma
    if hp.anneal < 1.0:
        resid = float(np.mean(np.square(obs.Yhat - cp_compose(factors))))
        power = float(np.mean(np.square(obs.Yhat)))
        sigma_t = max(hp.sigma, resid, hp.warm_fraction * power)
        log.debug("warm-up from sigma %.3e", sigma_t)

    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, hp.max_iters + 1):
        prev = state.copy()
        update_factors(state, obs.Yhat, layout, sigma_t)
        update_lambda(state, hp)
        update_tau(state, obs, hp)
        update_z(state, obs, sigma_t)
        update_eta(state, hp)
        change = parameter_change(state, prev)
        trace.append(change)
        if callback is not None:
            callback(it, state)
        if sigma_t > hp.sigma:
            sigma_t = max(hp.sigma, sigma_t * hp.anneal)
        elif change < hp.tol:
            converged = True
            break

    Lhat = cp_compose(state.factors.mu)
    support = frozenset(int(k) for k in np.flatnonzero(state.zbar > 0))
    Shat = block_project(Y, layout, support)
    zbar = state.zbar.copy()
    hardness = float(np.max(zbar * (1.0 - zbar))) if zbar.size else 0.0
    return SolveResult(
        Lhat=Lhat,
        Shat=Shat,
        support=support,
        zbar=zbar,
        iterations=it,
        converged=converged,
        delta_trace=trace,
        hardness=hardness,
        state=state,
        seconds=time.perf_counter() - t0,
    )
