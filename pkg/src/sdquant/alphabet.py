"""Quantization alphabets and the nearest-level quantizer.

Three constructions: plain uniform grids over a signal range (optionally
extended by margin levels so higher-order feedback stays in range), the
stability-optimal grid for the two-dimensional scheme, and the very fine
boundary grid used to pin down the last few running sums of a column.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Alphabet",
    "FineBoundaryAlphabet",
    "make_uniform_alphabet",
    "make_optimal_2d_alphabet",
    "make_fine_boundary_alphabet",
    "scalar_quantize",
    "default_margin_levels",
]

# Fine grids are quantized arithmetically; their level count only has to fit
# comfortably in an int64 index.
FINE_LEVEL_CAP = 2**62

# Materializing a fine grid as a dense vector is only allowed for small counts.
_MATERIALIZE_CAP = 2**22


@dataclass(frozen=True)
class Alphabet:
    """A finite sorted set of representable levels.

    ``step`` is the (uniform) gap between consecutive levels, ``bit_depth``
    the budget d with len(levels) <= 2**d, and (lo, hi) the signal range the
    grid was built for (margins may extend beyond it).
    """

    levels: np.ndarray
    step: float
    bit_depth: int
    lo: float
    hi: float
    margin_levels: int = 0
    variant: str = "uniform"

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "levels", levels)
        if levels.ndim != 1 or levels.size < 2:
            raise ValueError("alphabet needs at least two levels")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if levels.size > 2**self.bit_depth:
            raise ValueError(
                f"{levels.size} levels exceed the 2^{self.bit_depth} budget"
            )

    @property
    def num_levels(self) -> int:
        return int(self.levels.size)

    def quantize(self, z):
        """Vectorized nearest-level rounding; ties go to the lower level.

        Returns (levels, indices, clamped) where ``clamped`` counts inputs
        that fell outside the grid's coverage by more than half the adjacent
        gap (they are clamped to the end level).
        """
        z = np.asarray(z, dtype=float)
        pos = np.searchsorted(self.levels, z)
        lo_idx = np.clip(pos - 1, 0, self.levels.size - 1)
        hi_idx = np.clip(pos, 0, self.levels.size - 1)
        take_hi = (self.levels[hi_idx] - z) < (z - self.levels[lo_idx])
        idx = np.where(take_hi, hi_idx, lo_idx)
        gaps = np.diff(self.levels)
        clamped = int(
            np.count_nonzero(z < self.levels[0] - 0.5 * gaps[0])
            + np.count_nonzero(z > self.levels[-1] + 0.5 * gaps[-1])
        )
        return self.levels[idx], idx.astype(np.int64), clamped


def default_margin_levels(r: int) -> int:
    """Extra levels per side keeping the order-r feedback inside the grid.

    First-order feedback never leaves the signal range by more than half a
    step, so no margin is needed; order r needs coverage out to roughly
    (2^{r-1} - 1/2) steps beyond each end.
    """
    return 0 if r <= 1 else 2 ** (r - 1)


def make_uniform_alphabet(a: float, b: float, d: int, margin_levels: int = 0) -> Alphabet:
    """Evenly spaced grid over [a, b], extended by margin levels per side.

    The full budget of 2**d levels is spent: ``2**d - 2*margin_levels``
    interior levels cover [a, b] exactly and the margins continue the grid
    beyond each end at the same spacing.
    """
    if not a < b:
        raise ValueError("need a < b")
    if d < 1:
        raise ValueError("bit depth must be >= 1")
    if margin_levels < 0:
        raise ValueError("margin_levels must be >= 0")
    interior = 2**d - 2 * margin_levels
    if interior < 2:
        raise ValueError(
            f"level budget exceeded: 2^{d} levels cannot fit {margin_levels} "
            "margin levels per side and still cover the range"
        )
    step = (b - a) / (interior - 1)
    idx = np.arange(-margin_levels, interior + margin_levels)
    levels = a + idx * step
    return Alphabet(levels, step, d, a, b, margin_levels, "uniform")


def make_optimal_2d_alphabet(a: float, b: float, d: int) -> Alphabet:
    """The uniform grid with the best possible 2D stability constant.

    With C = (b-a) / (2*(2^d - 3)) the grid {a-2C, a, a+2C, ..., b, b+2C}
    has exactly 2**d levels and the two-dimensional recursion keeps every
    state entry within C.  One-bit grids cannot be constructed this way.
    """
    if d < 2:
        raise ValueError("2D quantization needs bit depth >= 2")
    if not a < b:
        raise ValueError("need a < b")
    c = (b - a) / (2.0 * (2**d - 3))
    levels = a + 2.0 * c * np.arange(-1, 2**d - 1)
    return Alphabet(levels, 2.0 * c, d, a, b, 1, "optimal2d")


@dataclass(frozen=True)
class FineBoundaryAlphabet:
    """Very fine uniform grid used for the last r samples of a column.

    The step is 2*delta / (2N)^r, the range widens the base range by
    (2^{r-1} - 1/2)*delta on each side, and the top endpoint is appended
    explicitly.  Grids this fine are quantized arithmetically and only
    materialized on demand.
    """

    base: Alphabet
    fine_step: float
    lo: float
    hi: float
    count: int
    signal_length: int
    order: int

    @property
    def levels(self) -> np.ndarray:
        if self.count > _MATERIALIZE_CAP:
            raise ValueError(
                f"refusing to materialize {self.count} fine levels; "
                "use value_at/quantize instead"
            )
        grid = self.lo + self.fine_step * np.arange(self.count - 1)
        return np.append(grid, self.hi)

    def value_at(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        vals = self.lo + self.fine_step * idx.astype(float)
        return np.where(idx == self.count - 1, self.hi, vals)

    def quantize(self, z):
        """Nearest fine level (ties toward the lower level)."""
        z = np.asarray(z, dtype=float)
        t = (z - self.lo) / self.fine_step
        j = np.ceil(t - 0.5).astype(np.int64)  # round half down
        j = np.clip(j, 0, self.count - 2)
        vals = self.lo + self.fine_step * j.astype(float)
        # the appended endpoint may be closer than the last grid point
        take_top = (self.hi - z) < (z - vals)
        idx = np.where(take_top, self.count - 1, j)
        levels = np.where(take_top, self.hi, vals)
        return levels, idx, 0


def make_fine_boundary_alphabet(
    base: Alphabet, N: int, r: int, level_cap: int = FINE_LEVEL_CAP
) -> FineBoundaryAlphabet:
    """Build the boundary grid for columns of length N at feedback order r."""
    if N < 2:
        raise ValueError("signal length must be >= 2")
    if r < 1:
        raise ValueError("order must be >= 1")
    delta = base.step
    fine_step = 2.0 * delta / float((2 * N) ** r)
    half = (2 ** (r - 1) - 0.5) * delta
    lo = base.lo - half
    hi = base.hi + half
    k = int(np.floor((hi - lo) / fine_step))
    if lo + k * fine_step >= hi:  # K = max j with lo + j*step < hi
        k -= 1
    count = k + 2  # grid points plus the appended top endpoint
    if count > level_cap:
        raise ValueError(
            f"fine boundary grid needs {count} levels, beyond the cap {level_cap}"
        )
    return FineBoundaryAlphabet(base, fine_step, lo, hi, count, N, r)


def scalar_quantize(alphabet, z: float):
    """Round one value to the nearest level; ties break toward the lower one.

    Out-of-range inputs clamp to the end levels.  Returns (level, index).
    """
    levels, idx, _ = alphabet.quantize(np.asarray([z], dtype=float))
    return float(levels[0]), int(idx[0])
