"""Quantizers: memoryless rounding, dithered rounding, and the adaptive
sigma-delta schemes in one and two dimensions.

The 1D order-r scheme feeds back a binomial combination of the last r state
values before rounding, so the running state always satisfies the exact
relation D^r u = y - q.  The 2D scheme does the same with a product stencil
and satisfies D^r u (D^r)^T = y - q; its entries are computed one
anti-diagonal at a time (every entry on a wavefront only depends on earlier
wavefronts, so they vectorize and could run in parallel).
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from .alphabet import Alphabet, FineBoundaryAlphabet

__all__ = [
    "SigmaDeltaCode",
    "StateGrid",
    "FineTail",
    "EncoderInstabilityError",
    "encode_msq",
    "encode_msq_dithered",
    "encode_sd1d",
    "encode_sd1d_columns",
    "encode_sd2d",
]


class EncoderInstabilityError(RuntimeError):
    """State magnitude blew past the configured limit; encoding aborted."""

    def __init__(self, message, index=None, column=None):
        super().__init__(message)
        self.index = index
        self.column = column


@dataclass
class StateGrid:
    """The retained state variable u, kept for stability auditing."""

    u: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.u))) if self.u.size else 0.0


@dataclass
class FineTail:
    """Fine-grid re-encoding of the last r samples of each column."""

    alphabet: FineBoundaryAlphabet
    indices: np.ndarray  # shape (r,) for a vector input, (r, cols) for a matrix


@dataclass
class SigmaDeltaCode:
    """Quantized output: level indices plus the metadata needed to decode."""

    indices: np.ndarray
    mode: str  # msq | msq_dither | sd1d_col | sd2d
    order: int
    alphabet: Alphabet
    shape: tuple
    fine_tail: FineTail | None = None
    clamp_count: int = 0

    def dequantize(self) -> np.ndarray:
        """Map level indices back to real levels (fine tail rows included)."""
        q = self.alphabet.levels[self.indices]
        if self.fine_tail is not None:
            r = self.fine_tail.indices.shape[0]
            q[-r:] = self.fine_tail.alphabet.value_at(self.fine_tail.indices)
        return q


def encode_msq(x, alphabet: Alphabet) -> SigmaDeltaCode:
    """Round every sample independently to the nearest level."""
    x = np.asarray(x, dtype=float)
    _, idx, clamped = alphabet.quantize(x)
    return SigmaDeltaCode(idx, "msq", 0, alphabet, x.shape, clamp_count=clamped)


def encode_msq_dithered(x, alphabet: Alphabet, seed: int) -> SigmaDeltaCode:
    """Perturb each sample with uniform noise on [-step/2, step/2], then round."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    eta = rng.uniform(-alphabet.step / 2.0, alphabet.step / 2.0, size=x.shape)
    _, idx, clamped = alphabet.quantize(x + eta)
    return SigmaDeltaCode(idx, "msq_dither", 0, alphabet, x.shape, clamp_count=clamped)


def _feedback_coeffs(r: int) -> np.ndarray:
    # g_r(u_{i-1},...,u_{i-r}) = sum_j (-1)^{j-1} C(r,j) u_{i-j}
    return np.array([(-1.0) ** (j - 1) * comb(r, j) for j in range(1, r + 1)])


def _sd1d_kernel(y2d, alphabet, r, fine, stability_limit):
    """Order-r feedback quantization of each column of a (N, k) array."""
    n, k = y2d.shape
    coeff = _feedback_coeffs(r)
    u = np.zeros((n, k))
    q = np.empty((n, k))
    idx = np.zeros((n, k), dtype=np.int64)
    fine_idx = np.zeros((r, k), dtype=np.int64) if fine is not None else None
    limit = stability_limit * alphabet.step
    clamped = 0
    for i in range(n):
        w = y2d[i].copy()
        for j in range(1, min(i, r) + 1):
            w += coeff[j - 1] * u[i - j]
        if fine is not None and i >= n - r:
            lev, ji, _ = fine.quantize(w)
            fine_idx[i - (n - r)] = ji
        else:
            lev, ji, cl = alphabet.quantize(w)
            clamped += cl
            idx[i] = ji
        q[i] = lev
        u[i] = w - lev
        bad = np.abs(u[i]) > limit
        if np.any(bad):
            col = int(np.argmax(bad))
            raise EncoderInstabilityError(
                f"state magnitude {abs(u[i, col]):.3g} exceeded "
                f"{stability_limit:g} steps at sample {i}, column {col}",
                index=i,
                column=col,
            )
    tail = FineTail(fine, fine_idx) if fine is not None else None
    return q, idx, u, tail, clamped


def encode_sd1d(
    y,
    alphabet: Alphabet,
    r: int = 1,
    fine: FineBoundaryAlphabet | None = None,
    stability_limit: float = 10.0,
):
    """Order-r adaptive quantization of a 1D signal.

    Returns (code, state).  The state satisfies D^r u = y - q exactly; when
    ``fine`` is given the last r samples are re-rounded on the fine grid so
    the decoder can pin the trailing running sums much more tightly.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("encode_sd1d expects a vector; use encode_sd1d_columns")
    if r < 1:
        raise ValueError("order must be >= 1")
    q, idx, u, tail, clamped = _sd1d_kernel(
        y[:, None], alphabet, r, fine, stability_limit
    )
    if tail is not None:
        tail = FineTail(tail.alphabet, tail.indices[:, 0])
    code = SigmaDeltaCode(
        idx[:, 0], "sd1d_col", r, alphabet, y.shape, tail, clamped
    )
    return code, StateGrid(u[:, 0])


def encode_sd1d_columns(
    X,
    alphabet: Alphabet,
    r: int = 1,
    fine: FineBoundaryAlphabet | None = None,
    stability_limit: float = 10.0,
) -> SigmaDeltaCode:
    """Apply the order-r 1D scheme to every column of ``X`` independently."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected a 2D array")
    if r < 1:
        raise ValueError("order must be >= 1")
    _, idx, _, tail, clamped = _sd1d_kernel(X, alphabet, r, fine, stability_limit)
    return SigmaDeltaCode(idx, "sd1d_col", r, alphabet, X.shape, tail, clamped)


def _stencil_coeffs_2d(r: int):
    """Product-binomial coefficients c_{k,l} for (k,l) != (0,0)."""
    out = []
    for k in range(r + 1):
        for l in range(r + 1):
            if k == 0 and l == 0:
                continue
            out.append((k, l, (-1.0) ** (k + l) * comb(r, k) * comb(r, l)))
    return out


def encode_sd2d(
    y,
    alphabet: Alphabet,
    r: int = 1,
    stability_limit: float | None = None,
):
    """Order-r adaptive quantization of a 2D array.

    The first row and column reduce to the 1D recursion; interior entries
    feed back the product stencil so that D^r u (D^r)^T = y - q holds
    exactly.  With the optimal alphabet and r = 1 the state is guaranteed to
    stay within C = step/2, and the encoder aborts if that is ever violated.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("expected a 2D array")
    if r < 1:
        raise ValueError("order must be >= 1")
    rows, cols = y.shape
    if alphabet.variant == "optimal2d" and r == 1:
        limit = alphabet.step / 2.0 + 1e-9
    else:
        limit = (stability_limit if stability_limit is not None else 10.0) * alphabet.step
    stencil = _stencil_coeffs_2d(r)
    u = np.zeros((rows, cols))
    q = np.empty((rows, cols))
    idx = np.empty((rows, cols), dtype=np.int64)
    clamped = 0
    for t in range(rows + cols - 1):
        i0 = max(0, t - (cols - 1))
        i1 = min(rows - 1, t)
        ii = np.arange(i0, i1 + 1)
        jj = t - ii
        w = y[ii, jj].copy()
        for k, l, c in stencil:
            ok = (ii >= k) & (jj >= l)
            if not np.any(ok):
                continue
            w[ok] -= c * u[ii[ok] - k, jj[ok] - l]
        lev, ji, cl = alphabet.quantize(w)
        clamped += cl
        q[ii, jj] = lev
        idx[ii, jj] = ji
        ut = w - lev
        u[ii, jj] = ut
        bad = np.abs(ut) > limit
        if np.any(bad):
            p = int(np.argmax(bad))
            raise EncoderInstabilityError(
                f"state magnitude {abs(ut[p]):.3g} exceeded the stability "
                f"limit at entry ({ii[p]}, {jj[p]})",
                index=(int(ii[p]), int(jj[p])),
            )
    code = SigmaDeltaCode(idx, "sd2d", r, alphabet, y.shape, None, clamped)
    return code, StateGrid(u)
