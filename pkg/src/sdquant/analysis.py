"""Quality metrics, sparsity measures, and spectral diagnostics.

SNR / PSNR conventions, the l1 tail measuring approximate sparsity, the
wrap-around minimum-separation check for jump supports, the noise-shaping
ratio of the difference operator on sinusoids, and band-limited error
norms.  Diagnostic curves are emitted as CSV (17 significant digits) so
runs can be diffed bit-for-bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_ops import DiffOperator, LowPassProjector, apply_diff, lowpass_project

__all__ = [
    "QualityReport",
    "snr_db",
    "psnr_db",
    "l1_tail",
    "check_min_separation",
    "noise_shaping_ratio",
    "error_spectrum",
    "lowpass_error",
    "build_quality_report",
    "write_csv",
]


def snr_db(x, y) -> float:
    """20 log10 of signal norm over error norm; +/- inf sentinels at the edges."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    err = np.linalg.norm(x - y)
    if err == 0.0:
        return math.inf
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return -math.inf
    return 20.0 * math.log10(nx / err)


def psnr_db(x, y, max_i: float = 1.0) -> float:
    """Peak SNR with the stated peak (1 for grayscale in [0,1], 255 for RGB)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean(np.square(x - y)))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(max_i / math.sqrt(mse))


def l1_tail(z, s: int) -> float:
    """l1 mass outside the s largest-magnitude entries."""
    z = np.abs(np.asarray(z, dtype=float)).ravel()
    if not 0 <= s <= z.size:
        raise ValueError("tail index must satisfy 0 <= s <= N")
    if s == 0:
        return float(np.sum(z))
    return float(np.sum(np.sort(z)[: z.size - s]))


def check_min_separation(support, n: int, m: int) -> bool:
    """True when all support pairs sit at wrap distance >= 2N/M.

    Distances are measured around the circle {0, ..., N-1}; empty or
    singleton supports pass vacuously.
    """
    pts = np.unique(np.asarray(list(support), dtype=int))
    if pts.size < 2:
        return True
    if np.any(pts < 0) or np.any(pts >= n):
        raise ValueError("support indices must lie in {0, ..., N-1}")
    diff = np.abs(pts[:, None] - pts[None, :])
    wrap = np.minimum(diff, n - diff)
    np.fill_diagonal(wrap, n)
    return bool(np.min(wrap) / n >= 2.0 / m)


def noise_shaping_ratio(r: int, w: int, n: int) -> float:
    """Energy compression of the order-r difference on a discrete sinusoid.

    Low frequencies come out strongly attenuated, high ones amplified; the
    curve is what makes the adaptive quantizer's error spectrum climb with
    frequency.
    """
    if not 1 <= w <= n / 2 - 1:
        raise ValueError("frequency must satisfy 1 <= w <= N/2 - 1")
    t = 2.0 * np.pi * np.arange(1, n + 1) / n
    s = np.sin(w * t)
    d = apply_diff(DiffOperator(n, r), s)
    return float(np.linalg.norm(d) / np.linalg.norm(s))


def error_spectrum(x, q) -> np.ndarray:
    """Magnitude of the DFT of x - q, DC first (plain FFT bin order)."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if x.shape != q.shape:
        raise ValueError("inputs must have the same length")
    return np.abs(np.fft.fft(x - q))


def lowpass_error(x, x_hat, cutoff: int) -> float:
    """Max-norm of the band-limited part of the reconstruction error."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    proj = LowPassProjector(x.size, cutoff)
    return float(np.max(np.abs(lowpass_project(proj, x_hat - x))))


@dataclass
class QualityReport:
    snr_db: float
    psnr_db: float
    mse: float
    l2_error: float
    linf_error: float
    lowpass_linf: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "psnr_db": self.psnr_db,
            "mse": self.mse,
            "l2_error": self.l2_error,
            "linf_error": self.linf_error,
            "lowpass_linf": {str(k): v for k, v in self.lowpass_linf.items()},
        }


def build_quality_report(x, y, max_i: float = 1.0, lowpass_cutoffs=()) -> QualityReport:
    """All metrics between a reference ``x`` and a reconstruction ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    err = y - x
    report = QualityReport(
        snr_db=snr_db(x, y),
        psnr_db=psnr_db(x, y, max_i),
        mse=float(np.mean(np.square(err))),
        l2_error=float(np.linalg.norm(err)),
        linf_error=float(np.max(np.abs(err))) if err.size else 0.0,
    )
    for cutoff in lowpass_cutoffs:
        report.lowpass_linf[int(cutoff)] = lowpass_error(
            x.ravel(), y.ravel(), int(cutoff)
        )
    return report


def write_csv(path, header, rows):
    """Comma-separated output, one header row, floats at 17 significant digits."""

    def fmt(value):
        if isinstance(value, (float, np.floating)):
            return f"{value:.17g}"
        return str(value)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
