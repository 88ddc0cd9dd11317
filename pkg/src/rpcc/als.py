"""Deterministic CP alternating least squares, used to seed the variational solver."""

from __future__ import annotations

import numpy as np

from .tensor import contract_except, cp_compose

DAMPING = 1e-9


def balance_columns(factors: list[np.ndarray]) -> list[np.ndarray]:
    """Rescale matching columns so every mode carries the same column norm.

    The composed tensor is unchanged. Columns that vanish in any mode are zeroed
    everywhere.
    """
    norms = np.stack([np.linalg.norm(A, axis=0) for A in factors])
    alive = np.all(norms > 0, axis=0)
    target = np.ones(norms.shape[1])
    target[alive] = np.exp(np.log(norms[:, alive]).mean(axis=0))
    out = []
    for A, nrm in zip(factors, norms):
        scale = np.zeros_like(nrm)
        scale[alive] = target[alive] / nrm[alive]
        out.append(A * scale)
    return out


def cp_als(
    Y: np.ndarray,
    rank: int,
    sweeps: int = 100,
    tol: float = 1e-6,
    rng: np.random.Generator | int | None = 0,
    damping: float = DAMPING,
) -> tuple[list[np.ndarray], float]:
    """Fit ``Y ~ CP{A_1, .., A_N}`` of the given rank by alternating least squares.

    Parameters
    ----------
    Y : ndarray
        Dense data tensor.
    rank : int
        Number of rank-one terms.
    sweeps : int
        Maximum number of full sweeps over the modes.
    tol : float
        Stop once the relative fit changes by less than this between sweeps.
    rng : Generator or int
        Source for the Gaussian starting factors.
    damping : float
        Tikhonov term added to every normal-equation matrix.

    Returns
    -------
    factors : list of ndarray
        Factor matrices of shape ``(I_n, rank)``, column norms balanced across modes.
    residual : float
        ``||Y - CP(factors)||_F / ||Y||_F`` (0 for a zero tensor).
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    Y = np.asarray(Y, dtype=float)
    rng = np.random.default_rng(rng)
    factors = [rng.standard_normal((I, rank)) for I in Y.shape]
    norm_y = np.linalg.norm(Y)
    if norm_y == 0:
        return [np.zeros_like(A) for A in factors], 0.0

    eye = np.eye(rank)
    prev_fit = None
    residual = 1.0
    for _ in range(sweeps):
        grams = [A.T @ A for A in factors]
        for n in range(Y.ndim):
            G = np.ones((rank, rank))
            for m, g in enumerate(grams):
                if m != n:
                    G *= g
            rhs = contract_except(Y, factors, n)
            factors[n] = np.linalg.solve(G + damping * eye, rhs.T).T
            grams[n] = factors[n].T @ factors[n]
        factors = balance_columns(factors)
        residual = np.linalg.norm(Y - cp_compose(factors)) / norm_y
        fit = 1.0 - residual
        if prev_fit is not None and abs(fit - prev_fit) < tol:
            break
        prev_fit = fit
    return factors, float(residual)
