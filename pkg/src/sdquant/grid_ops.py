"""Implicit finite-difference and low-pass operators.

Everything here is matrix free: the forward difference D (ones on the
diagonal, minus ones on the sub-diagonal), its circulant cousin D_1 with the
extra wrap-around entry, their transposes and powers, the inverse of D
(a running sum), and the DFT band-limiting projector P_L.  Powers are realized
as repeated O(N) stencil passes; nothing ever builds an N x N matrix.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiffOperator",
    "LowPassProjector",
    "apply_diff",
    "apply_inverse_diff",
    "lowpass_project",
]


def _diff_forward(x, axis):
    # (Dx)_1 = x_1, (Dx)_i = x_i - x_{i-1}
    return np.diff(x, axis=axis, prepend=np.take(x, [0], axis=axis) * 0.0)


def _diff_forward_t(x, axis):
    # (D^T x)_i = x_i - x_{i+1}, (D^T x)_N = x_N
    return -np.diff(x, axis=axis, append=np.take(x, [0], axis=axis) * 0.0)


def _diff_circulant(x, axis):
    return x - np.roll(x, 1, axis=axis)


def _diff_circulant_t(x, axis):
    return x - np.roll(x, -1, axis=axis)


def _cumsum_inv(x, axis):
    # D^{-1}: prefix sums
    return np.cumsum(x, axis=axis)


def _cumsum_inv_t(x, axis):
    # (D^T)^{-1}: suffix sums
    return np.flip(np.cumsum(np.flip(x, axis=axis), axis=axis), axis=axis)


@dataclass(frozen=True)
class DiffOperator:
    """k-th power of a finite-difference matrix, applied as a stencil.

    ``variant`` selects the plain forward difference or the circulant one
    (wrap-around entry in the first row); ``transposed`` applies the
    transpose instead.
    """

    size: int
    order: int = 1
    variant: str = "forward"
    transposed: bool = False

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("operator size must be positive")
        if self.order < 1:
            raise ValueError("difference order must be positive")
        if self.variant not in ("forward", "circulant"):
            raise ValueError(f"unknown variant {self.variant!r}")


def apply_diff(op: DiffOperator, x, axis: int = 0) -> np.ndarray:
    """Apply D^k (or D_1^k, or a transpose) along ``axis`` of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[axis] != op.size:
        raise ValueError(
            f"operand has length {x.shape[axis]} along axis {axis}, "
            f"operator expects {op.size}"
        )
    if op.variant == "forward":
        step = _diff_forward_t if op.transposed else _diff_forward
    else:
        step = _diff_circulant_t if op.transposed else _diff_circulant
    for _ in range(op.order):
        x = step(x, axis)
    return x


def apply_inverse_diff(op: DiffOperator, x, axis: int = 0) -> np.ndarray:
    """Apply D^{-k} (or its transpose) by k repeated cumulative sums.

    Only the forward variant is invertible; the circulant difference kills
    constants and is rejected.
    """
    if op.variant != "forward":
        raise ValueError("circulant difference operator is singular")
    x = np.asarray(x, dtype=float)
    if x.shape[axis] != op.size:
        raise ValueError(
            f"operand has length {x.shape[axis]} along axis {axis}, "
            f"operator expects {op.size}"
        )
    step = _cumsum_inv_t if op.transposed else _cumsum_inv
    for _ in range(op.order):
        x = step(x, axis)
    return x


@dataclass(frozen=True)
class LowPassProjector:
    """Orthogonal projection onto DFT frequencies {-L, ..., L}."""

    size: int
    cutoff: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("projector size must be positive")
        if self.cutoff < 0 or 2 * self.cutoff > self.size:
            raise ValueError(f"cutoff must satisfy 0 <= L <= N/2, got {self.cutoff}")


def lowpass_project(p: LowPassProjector, x, axis: int = 0) -> np.ndarray:
    """Keep the Fourier modes with |frequency| <= cutoff, zero the rest."""
    x = np.asarray(x, dtype=float)
    n = p.size
    if x.shape[axis] != n:
        raise ValueError(
            f"operand has length {x.shape[axis]} along axis {axis}, "
            f"projector expects {n}"
        )
    coeff = np.fft.fft(x, axis=axis)
    k = np.arange(n)
    keep = np.minimum(k, n - k) <= p.cutoff
    shape = [1] * x.ndim
    shape[axis] = n
    coeff *= keep.reshape(shape)
    return np.fft.ifft(coeff, axis=axis).real
