"""Image-quality metrics and paired-run statistics.

PSNR and SSIM accept plain 2-D arrays or the Image/Sinogram wrappers.
SSIM uses the reference constants (k1 = 0.01, k2 = 0.03) and an 11x11
Gaussian window with sigma 1.5, evaluated on the valid (fully covered)
window positions only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

#: PSNR of bitwise-identical inputs (MSE = 0); finite comparisons can
#: never reach it, so it doubles as an "identical" flag.
PSNR_IDENTICAL = math.inf


def _as_array(a):
    data = getattr(a, "data", a)
    return np.asarray(data, dtype=np.float64)


def _check_pair(a, b):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _check_pair(a, b)
    return float(np.mean(np.square(a - b)))


def psnr(a, b, data_range=1.0):
    """Peak signal-to-noise ratio in dB; inf for identical inputs."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(data_range**2 / err)


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    g = np.exp(-0.5 * np.square((np.arange(size) - half) / sigma))
    return g / g.sum()


def _local_means(x, window):
    # separable valid-mode correlation with an outer-product window
    size = window.size
    view = np.lib.stride_tricks.sliding_window_view(x, (size, size))
    return np.einsum("ijkl,k,l->ij", view, window, window)


def ssim(a, b, window=11, k1=0.01, k2=0.03, data_range=1.0):
    """Mean structural similarity over valid Gaussian-window positions."""
    a, b = _check_pair(a, b)
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if window > min(a.shape):
        raise ValueError(f"window {window} larger than the image sides {a.shape}")
    g = _gaussian_window(window, sigma=1.5)
    mu_a = _local_means(a, g)
    mu_b = _local_means(b, g)
    var_a = _local_means(a * a, g) - mu_a**2
    var_b = _local_means(b * b, g) - mu_b**2
    cov = _local_means(a * b, g) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def measured_residual(sino, y, mask):
    """l2 norm of (sino - y) restricted to measured rows."""
    a = _as_array(sino)
    b = _as_array(y)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b)[mask.measured]))


@dataclass
class PairedStats:
    """Per-pair deltas of a scalar metric and their summary."""

    deltas: np.ndarray
    mean_gap: float
    win_rate: float


def paired_compare(runs_a, runs_b):
    """Compare paired metric lists; positive delta means a beats b.

    Ties count as half a win, so identical lists give win rate 0.5.
    """
    a = np.asarray(list(runs_a), dtype=np.float64)
    b = np.asarray(list(runs_b), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired lists must have equal length, got {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("paired lists are empty")
    deltas = a - b
    wins = float(np.sum(deltas > 0) + 0.5 * np.sum(deltas == 0))
    return PairedStats(
        deltas=deltas,
        mean_gap=float(deltas.mean()),
        win_rate=wins / deltas.size,
    )


@dataclass
class RecordScores:
    """Metric row for one dataset record in one domain."""

    index: int
    domain: str
    psnr: float
    ssim: float
    residual: float | None = None


@dataclass
class EvalReport:
    """Per-record scores plus domain-level means."""

    rows: list = field(default_factory=list)

    def add(self, row):
        self.rows.append(row)

    def domain_rows(self, domain):
        return [r for r in self.rows if r.domain == domain]

    def summary(self):
        out = {}
        for domain in sorted({r.domain for r in self.rows}):
            rows = self.domain_rows(domain)
            finite = [r.psnr for r in rows if math.isfinite(r.psnr)]
            out[domain] = {
                "records": len(rows),
                "mean_psnr": float(np.mean(finite)) if finite else PSNR_IDENTICAL,
                "identical": sum(1 for r in rows if not math.isfinite(r.psnr)),
                "mean_ssim": float(np.mean([r.ssim for r in rows])),
            }
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "domain", "psnr_db", "ssim", "measured_residual"])
            for r in self.rows:
                writer.writerow(
                    [
                        r.index,
                        r.domain,
                        "identical" if not math.isfinite(r.psnr) else f"{r.psnr:.6f}",
                        f"{r.ssim:.6f}",
                        "" if r.residual is None else f"{r.residual:.6f}",
                    ]
                )

    def format_summary(self):
        lines = []
        for domain, s in self.summary().items():
            psnr_txt = (
                "identical" if not math.isfinite(s["mean_psnr"]) else f"{s['mean_psnr']:.2f} dB"
            )
            lines.append(
                f"{domain}: {s['records']} records, mean PSNR {psnr_txt}, "
                f"mean SSIM {s['mean_ssim']:.4f}"
                + (f", {s['identical']} identical" if s["identical"] else "")
            )
        return "\n".join(lines)
