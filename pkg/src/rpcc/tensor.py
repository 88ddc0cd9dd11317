"""Dense tensor helpers: blockwise unfolding, blockwise projection and CP algebra.

Tensors are plain float64 ``numpy.ndarray`` objects. Element ``(i_1, .., i_N)``
is ``X[i_1, .., i_N]`` and every vectorization is column-major (mode 1
fastest). Block indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np


class DimensionMismatch(ValueError):
    """Raised when shapes, block layouts or ranks are incompatible."""


@dataclass(frozen=True)
class BlockLayout:
    """Uniform block partition of a tensor.

    Parameters
    ----------
    block_dims : tuple of int
        Elements per block along each mode (J_1, .., J_N).
    block_counts : tuple of int
        Number of blocks along each mode (K_1, .., K_N).
    """

    block_dims: tuple[int, ...]
    block_counts: tuple[int, ...]

    def __post_init__(self):
        bd = tuple(int(j) for j in self.block_dims)
        bc = tuple(int(k) for k in self.block_counts)
        if len(bd) != len(bc) or not bd:
            raise DimensionMismatch("block_dims and block_counts must have the same nonzero length")
        if min(bd) < 1 or min(bc) < 1:
            raise DimensionMismatch("block sizes and counts must be >= 1")
        object.__setattr__(self, "block_dims", bd)
        object.__setattr__(self, "block_counts", bc)

    @classmethod
    def from_dims(cls, dims: Sequence[int], block_dims: Sequence[int]) -> "BlockLayout":
        if len(dims) != len(block_dims):
            raise DimensionMismatch(f"tensor order {len(dims)} != layout order {len(block_dims)}")
        counts = []
        for n, (i, j) in enumerate(zip(dims, block_dims)):
            if j < 1 or i % j:
                raise DimensionMismatch(f"mode {n}: block size {j} does not divide dimension {i}")
            counts.append(i // j)
        return cls(tuple(block_dims), tuple(counts))

    @property
    def order(self) -> int:
        return len(self.block_dims)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(j * k for j, k in zip(self.block_dims, self.block_counts))

    @property
    def J(self) -> int:
        return int(np.prod(self.block_dims))

    @property
    def K(self) -> int:
        return int(np.prod(self.block_counts))

    def check(self, shape: Sequence[int]) -> None:
        if tuple(shape) != self.dims:
            raise DimensionMismatch(
                f"tensor dims {tuple(shape)} incompatible with blocks "
                f"{self.block_dims} x {self.block_counts}"
            )


def _interleaved(layout: BlockLayout) -> list[int]:
    shape = []
    for j, k in zip(layout.block_dims, layout.block_counts):
        shape += [j, k]
    return shape


def b_unfold(X: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """Blockwise unfolding: column ``k`` is the column-major vectorization of block ``k``."""
    X = np.asarray(X)
    layout.check(X.shape)
    N = layout.order
    T = X.reshape(_interleaved(layout), order="F")
    T = T.transpose(list(range(0, 2 * N, 2)) + list(range(1, 2 * N, 2)))
    return T.reshape((layout.J, layout.K), order="F")


def b_fold(U: np.ndarray, layout: BlockLayout, dims: Sequence[int] | None = None) -> np.ndarray:
    """Inverse of :func:`b_unfold`."""
    U = np.asarray(U)
    if U.shape != (layout.J, layout.K):
        raise DimensionMismatch(f"matrix shape {U.shape} != ({layout.J}, {layout.K})")
    if dims is not None:
        layout.check(dims)
    N = layout.order
    T = U.reshape(tuple(layout.block_dims) + tuple(layout.block_counts), order="F")
    inv = [0] * (2 * N)
    for pos, ax in enumerate(list(range(0, 2 * N, 2)) + list(range(1, 2 * N, 2))):
        inv[ax] = pos
    T = T.transpose(inv)
    return T.reshape(layout.dims, order="F")


def expand_blocks(values: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """Tensor whose every element carries the value of the block it belongs to."""
    values = np.asarray(values, dtype=float)
    if values.shape != (layout.K,):
        raise DimensionMismatch(f"expected {layout.K} block values, got shape {values.shape}")
    T = values.reshape(layout.block_counts, order="F")
    for n, j in enumerate(layout.block_dims):
        if j > 1:
            T = np.repeat(T, j, axis=n)
    return T


def support_mask(support: Iterable[int], K: int) -> np.ndarray:
    """Boolean K-vector marking the members of a blockwise support."""
    mask = np.zeros(K, dtype=bool)
    idx = np.fromiter((int(k) for k in support), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= K):
        bad = idx[(idx < 0) | (idx >= K)][0]
        raise IndexError(f"block index {bad} out of range [0, {K})")
    mask[idx] = True
    return mask


def complement(support: Iterable[int], K: int) -> frozenset[int]:
    mask = support_mask(support, K)
    return frozenset(int(k) for k in np.flatnonzero(~mask))


def block_project(X: np.ndarray, layout: BlockLayout, support: Iterable[int]) -> np.ndarray:
    """Keep the blocks listed in ``support`` and zero every other element."""
    X = np.asarray(X)
    layout.check(X.shape)
    keep = expand_blocks(support_mask(support, layout.K).astype(float), layout)
    return np.where(keep > 0, X, 0.0)


def block_of(index: Sequence[int], layout: BlockLayout) -> int:
    """Linear block index (block grid mode 1 fastest) of an element multi-index."""
    if len(index) != layout.order:
        raise DimensionMismatch(f"index of length {len(index)} for order-{layout.order} layout")
    k, stride = 0, 1
    for i, j, kn, I in zip(index, layout.block_dims, layout.block_counts, layout.dims):
        if not 0 <= i < I:
            raise IndexError(f"element index {tuple(index)} out of range {layout.dims}")
        k += (i // j) * stride
        stride *= kn
    return k


def elements_of(k: int, layout: BlockLayout) -> Iterator[tuple[int, ...]]:
    """Element multi-indices of block ``k``, in the column order of :func:`b_unfold`."""
    if not 0 <= k < layout.K:
        raise IndexError(f"block index {k} out of range [0, {layout.K})")
    grid = np.unravel_index(k, layout.block_counts, order="F")
    ranges = [range(g * j, (g + 1) * j) for g, j in zip(grid, layout.block_dims)]
    # itertools.product varies the last factor fastest; reverse for mode-1 fastest
    for rev in itertools.product(*ranges[::-1]):
        yield tuple(int(i) for i in rev[::-1])


def generalized_hadamard(mats: Sequence[np.ndarray]) -> np.ndarray:
    if not mats:
        raise DimensionMismatch("empty matrix list")
    out = np.array(mats[0], dtype=float, copy=True)
    for m in mats[1:]:
        m = np.asarray(m)
        if m.shape != out.shape:
            raise DimensionMismatch(f"shape {m.shape} != {out.shape}")
        out *= m
    return out


def generalized_inner(mats: Sequence[np.ndarray]) -> float:
    return float(generalized_hadamard(mats).sum())


def _khatri_rao(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product with the first matrix's row index varying fastest."""
    out = mats[0]
    for m in mats[1:]:
        out = (m[:, None, :] * out[None, :, :]).reshape(-1, out.shape[1])
    return out


def _check_factors(factors: Sequence[np.ndarray]) -> int:
    if not factors:
        raise DimensionMismatch("no CP factors")
    R = factors[0].shape[1]
    for n, A in enumerate(factors):
        if A.ndim != 2 or A.shape[1] != R:
            raise DimensionMismatch(f"factor {n} has shape {A.shape}; expected (*, {R})")
    return R


def cp_compose(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Dense tensor ``sum_r prod_n A_n[i_n, r]``.

    Splits the modes into two groups and multiplies their Khatri-Rao products,
    so the peak intermediate is ``prod(I_group) * R`` rather than ``prod(I) * R``.
    """
    factors = [np.asarray(A, dtype=float) for A in factors]
    _check_factors(factors)
    dims = tuple(A.shape[0] for A in factors)
    if len(factors) == 1:
        return factors[0].sum(axis=1)
    h = (len(factors) + 1) // 2
    left = _khatri_rao(factors[:h])
    right = _khatri_rao(factors[h:])
    return (left @ right.T).reshape(dims, order="F")


def contract_except(T: np.ndarray, mats: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """``out[i, p] = sum_e T[e] * prod_{m != skip} mats[m][e_m, p]`` with ``e_skip = i``.

    This is the matricized-tensor-times-Khatri-Rao product along mode ``skip``.
    """
    N = T.ndim
    if N == 1:
        P = mats[skip].shape[1] if mats[skip] is not None else 1
        return np.repeat(T[:, None], P, axis=1)
    others = [m for m in range(N) if m != skip]
    # largest contraction first, through BLAS
    first = others[-1]
    out = np.tensordot(T, mats[first], axes=([first], [0]))
    axes = [m for m in range(N) if m != first]
    for m in reversed(others[:-1]):
        pos = axes.index(m)
        out = np.moveaxis(out, pos, -2)
        out = np.einsum("...ip,ip->...p", out, mats[m])
        axes.pop(pos)
    return out
