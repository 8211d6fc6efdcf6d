"""Seeded synthetic signals and images with controlled gradient sparsity.

Piecewise-constant / piecewise-linear vectors with an exact interior jump
count, optionally laid out on the circle with a wrap-around minimum
separation between jumps, plus sparse-gradient test images built from
disjoint rectangles (or bilinear bumps) on a zero background so the total
number of nonzero differences can be budgeted exactly.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SignalSpec",
    "gen_piecewise",
    "gen_piecewise_image",
    "gradient_sparsity_count",
]

_REJECTION_CAP = 10_000


@dataclass(frozen=True)
class SignalSpec:
    length: int
    beta: int = 1
    jumps: int = 3
    amplitude: tuple = (0.1, 0.9)
    separation: int | None = None  # enforce wrap distance >= 2N/M between jumps
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ValueError("beta must be 1 or 2")
        if not 0 <= self.jumps < self.length:
            raise ValueError("jump count must satisfy 0 <= s < N")
        lo, hi = self.amplitude
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError("amplitude range must satisfy 0 <= lo < hi <= 1")


def _draw_separated(rng, n, s, m):
    """s points of {1..N-1} with pairwise wrap distance >= 2N/M, by rejection."""
    gap = 2.0 * n / m
    if s * gap > n:
        raise ValueError(
            f"cannot place {s} jumps at wrap spacing {gap:.1f} in length {n}"
        )
    for _ in range(_REJECTION_CAP):
        pts = np.sort(rng.choice(np.arange(1, n), size=s, replace=False))
        if s < 2:
            return pts
        diffs = np.diff(np.append(pts, pts[0] + n))
        if np.min(diffs) >= gap:
            return pts
    raise RuntimeError("rejection sampling for separated jumps did not finish")


def _distinct_values(rng, count, lo, hi):
    vals = rng.uniform(lo, hi, size=count)
    while count > 1 and np.any(np.diff(vals) == 0.0):  # measure-zero, but be safe
        vals = rng.uniform(lo, hi, size=count)
    return vals


def gen_piecewise(spec: SignalSpec) -> np.ndarray:
    """Piecewise-constant (beta=1) or piecewise-linear (beta=2) vector.

    Exactly ``jumps`` interior discontinuities (beta=1) or slope knots
    (beta=2).  With ``separation`` set, the signal closes up around the
    circle so the support of the circulant difference is exactly the jump
    set, every pair at wrap distance >= 2N/M.  Values stay inside the
    amplitude range; Gaussian noise is added last and may leave [0, 1].
    """
    n, s = spec.length, spec.jumps
    lo, hi = spec.amplitude
    rng = np.random.default_rng(spec.seed)
    x = np.empty(n)
    if spec.separation is not None:
        pts = _draw_separated(rng, n, s, spec.separation)
        if s == 0:
            x[:] = rng.uniform(lo, hi)
        elif spec.beta == 1:
            # s arcs on the circle; the piece across index 0 wraps around
            vals = _distinct_values(rng, s, lo, hi)
            x[: pts[0]] = vals[-1]
            for i in range(s):
                stop = pts[i + 1] if i + 1 < s else n
                x[pts[i] : stop] = vals[i]
        else:
            # anchors on the circle, linear in between (periodic closure)
            vals = _distinct_values(rng, s, lo, hi)
            if s == 1:
                x[:] = vals[0]
            else:
                idx = np.arange(n)
                for i in range(s):
                    a = pts[i]
                    b = pts[i + 1] if i + 1 < s else pts[0] + n
                    va, vb = vals[i], vals[(i + 1) % s]
                    seg = (idx - a) % n < (b - a)
                    t = ((idx[seg] - a) % n) / (b - a)
                    x[seg] = va + t * (vb - va)
    else:
        pts = np.sort(rng.choice(np.arange(1, n), size=s, replace=False))
        if spec.beta == 1:
            vals = _distinct_values(rng, s + 1, lo, hi)
            edges = np.concatenate([[0], pts, [n]])
            for i in range(s + 1):
                x[edges[i] : edges[i + 1]] = vals[i]
        else:
            anchors = np.concatenate([[0], pts, [n - 1]])
            vals = _distinct_values(rng, s + 2, lo, hi)
            x = np.interp(np.arange(n), anchors, vals)
    x = np.clip(x, 0.0, 1.0)
    if spec.noise_sigma > 0:
        x = x + rng.normal(0.0, spec.noise_sigma, size=n)
    return x


def gradient_sparsity_count(X, beta=1, tol=1e-9):
    """Count nonzeros of (D^beta)^T X plus X D^beta, boundary rows included."""
    X = np.asarray(X, dtype=float)
    v = X.copy()
    h = X.copy()
    for _ in range(beta):
        v = -np.diff(v, axis=0, append=0.0)  # (D^T) X
        h = -np.diff(h, axis=1, append=0.0)  # X D
    scale = max(np.max(np.abs(X)), 1.0)
    return int(np.count_nonzero(np.abs(v) > tol * scale)) + int(
        np.count_nonzero(np.abs(h) > tol * scale)
    )


def _place_rectangles(rng, rows, cols, pair_budget):
    """Disjoint interior rectangles with perimeter pairs (w+h) summing exactly.

    Rectangles keep >= 1 pixel from every border and >= 2 pixels from each
    other, so their difference footprints never merge or touch the boundary
    rows of the difference grids.
    """
    rects = []
    occupied = np.zeros((rows, cols), dtype=bool)
    remaining = pair_budget
    guard = 0
    while remaining > 0:
        guard += 1
        if guard > _REJECTION_CAP:
            raise RuntimeError("could not place rectangles within the budget")
        take = 2 if remaining == 2 else int(rng.integers(2, remaining + 1))
        if remaining - take == 1:
            continue
        w = int(rng.integers(1, take))
        h = take - w
        if w > cols - 4 or h > rows - 4:
            continue
        r0 = int(rng.integers(1, rows - 1 - h))
        c0 = int(rng.integers(1, cols - 1 - w))
        if occupied[
            max(0, r0 - 2) : r0 + h + 2, max(0, c0 - 2) : c0 + w + 2
        ].any():
            continue
        occupied[r0 : r0 + h, c0 : c0 + w] = True
        rects.append((r0, c0, h, w))
        remaining -= take
    return rects


def gen_piecewise_image(
    rows: int,
    cols: int,
    jumps: int,
    beta: int = 1,
    amplitude: tuple = (0.2, 1.0),
    seed: int = 0,
    transpose_layout: bool = False,
) -> np.ndarray:
    """Sparse-gradient test image with difference-count budget ``jumps``.

    beta=1 places constant rectangles on a zero background: a w-by-h
    rectangle contributes exactly 2(w+h) nonzero first differences, so the
    total count equals the budget exactly (budget must be even and >= 4).
    beta=2 places bilinear bumps (products of triangular ramps) and
    guarantees the second-difference count stays within the budget.

    ``transpose_layout`` swaps the roles of the two axes in the random
    draws, so gen(rows, cols, ..., transpose_layout=True) equals
    gen(cols, rows, ...).T exactly.
    """
    if beta not in (1, 2):
        raise ValueError("beta must be 1 or 2")
    if min(rows, cols) < 6:
        raise ValueError("image too small for interior rectangles")
    rng = np.random.default_rng(seed)
    lo, hi = amplitude
    nr, nc = (cols, rows) if transpose_layout else (rows, cols)
    # worst-case cost per unit of (w+h): 2 first differences, 4 second ones
    unit = 2 if beta == 1 else 4
    if jumps % unit != 0 or jumps < 2 * unit:
        raise ValueError(
            f"jump budget {jumps} is not reachable with difference cost "
            f"{unit} per unit of rectangle perimeter (need a multiple of "
            f"{unit}, at least {2 * unit})"
        )
    rects = _place_rectangles(rng, nr, nc, jumps // unit)
    x = np.zeros((nr, nc))
    for r0, c0, h, w in rects:
        v = rng.uniform(lo, hi)
        if beta == 1:
            x[r0 : r0 + h, c0 : c0 + w] = v
        else:
            ramp_r = 1.0 - np.abs(np.linspace(-1, 1, h + 2)[1:-1])
            ramp_c = 1.0 - np.abs(np.linspace(-1, 1, w + 2)[1:-1])
            x[r0 : r0 + h, c0 : c0 + w] = v * np.outer(ramp_r, ramp_c)
    got = gradient_sparsity_count(x, beta)
    if got > jumps:
        raise RuntimeError(
            f"internal budget overrun: generated {got} differences > {jumps}"
        )
    return x.T if transpose_layout else x
