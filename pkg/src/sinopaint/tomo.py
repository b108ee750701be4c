"""Parallel-beam projection operators and the row-masked measurement model.

Conventions used throughout: a projection at angle ``theta`` (degrees)
integrates the image along lines ``x*cos(theta) + y*sin(theta) = s``,
with image coordinates centered on the pixel grid and the detector axis
``s`` sampled at unit (pixel) spacing.  The detector array spans the image
width, so ``n_detectors`` defaults to the image side length and corners
project partially off the detector.

The forward projector is pixel-driven: each pixel deposits its value into
the two detector bins bracketing its ``s`` coordinate with linear weights.
``backproject`` gathers with the same weights and is therefore the exact
transpose of ``radon`` for a fixed angle set.

The measurement model is ``y = A x + n`` where ``A`` keeps the measured
angle rows and zero-fills the rest.  In this row-embedded layout ``A`` and
its pseudo-inverse are the same 0/1 row selector, and ``A^T A`` is the
orthogonal projector onto measured rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import arrayio


@dataclass
class Image:
    """Square pixel grid with float64 intensities."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {self.data.shape}")

    @property
    def size(self):
        return self.data.shape[0]


@dataclass
class Sinogram:
    """Stack of projections, one row per angle.

    angles : (n_angles,) array of projection angles in degrees
    data   : (n_angles, n_detectors) array of line integrals
    """

    angles: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.angles.ndim != 1:
            raise ValueError("angles must be a 1-D array")
        if self.data.ndim != 2 or self.data.shape[0] != self.angles.shape[0]:
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.angles.shape[0]} angles"
            )

    @property
    def n_angles(self):
        return self.data.shape[0]

    @property
    def n_detectors(self):
        return self.data.shape[1]

    def copy(self):
        return Sinogram(self.angles.copy(), self.data.copy())


@dataclass
class AngleMask:
    """Boolean selector over the rows of a full-grid sinogram."""

    full_angles: np.ndarray
    measured: np.ndarray

    def __post_init__(self):
        self.full_angles = np.asarray(self.full_angles, dtype=np.float64)
        self.measured = np.asarray(self.measured, dtype=bool)
        if self.full_angles.shape != self.measured.shape:
            raise ValueError("full_angles and measured must have equal length")

    @property
    def n_measured(self):
        return int(self.measured.sum())

    def column(self):
        """Mask as an (n_angles, 1) float column, broadcastable over rows."""
        return self.measured.astype(np.float64)[:, None]


@dataclass
class NoiseSpec:
    """Additive white Gaussian noise level, given as SNR or as a std.

    Exactly one of ``snr_db`` / ``sigma_y`` must be set.  When ``snr_db``
    is used, the noise std is derived from the mean squared signal value
    of the rows the noise is applied to.
    """

    snr_db: float | None = None
    sigma_y: float | None = None

    def __post_init__(self):
        if (self.snr_db is None) == (self.sigma_y is None):
            raise ValueError("specify exactly one of snr_db or sigma_y")
        if self.sigma_y is not None and self.sigma_y < 0:
            raise ValueError("sigma_y must be nonnegative")


def _detector_offsets(size, n_detectors, theta_deg):
    """Per-pixel detector coordinate u in [0, n_detectors-1] bin units."""
    c = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - c
    theta = np.deg2rad(theta_deg)
    # s = x*cos + y*sin; row index plays y, column index plays x
    s = coords[None, :] * np.cos(theta) + coords[:, None] * np.sin(theta)
    return s + (n_detectors - 1) / 2.0


def radon(img, angles, n_detectors=None):
    """Project an image onto a set of angles.

    Parameters
    ----------
    img : Image or 2-D array
    angles : sequence of angles in degrees
    n_detectors : detector count, defaults to the image side length

    Returns
    -------
    Sinogram with one row per angle.
    """
    if not isinstance(img, Image):
        img = Image(img)
    if img.data.shape[0] != img.data.shape[1]:
        raise ValueError("radon expects a square image")
    size = img.size
    if n_detectors is None:
        n_detectors = size
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))
    if angles.size == 0:
        raise ValueError("radon needs at least one angle")
    values = img.data.ravel()
    out = np.empty((angles.size, n_detectors), dtype=np.float64)
    for k, theta in enumerate(angles):
        u = _detector_offsets(size, n_detectors, theta).ravel()
        i0 = np.floor(u).astype(np.int64)
        w1 = u - i0
        row = np.zeros(n_detectors, dtype=np.float64)
        ok0 = (i0 >= 0) & (i0 < n_detectors)
        ok1 = (i0 + 1 >= 0) & (i0 + 1 < n_detectors)
        row += np.bincount(
            i0[ok0], weights=(values * (1.0 - w1))[ok0], minlength=n_detectors
        )
        row += np.bincount(
            (i0 + 1)[ok1], weights=(values * w1)[ok1], minlength=n_detectors
        )
        out[k] = row
    return Sinogram(angles, out)


def backproject(sino, out_size=None):
    """Unfiltered back-projection; exact transpose of :func:`radon`."""
    if out_size is None:
        out_size = sino.n_detectors
    if out_size > sino.n_detectors:
        raise ValueError(
            f"out_size {out_size} exceeds detector span {sino.n_detectors}"
        )
    n_det = sino.n_detectors
    out = np.zeros((out_size, out_size), dtype=np.float64)
    for k in range(sino.n_angles):
        u = _detector_offsets(out_size, n_det, sino.angles[k])
        i0 = np.floor(u).astype(np.int64)
        w1 = u - i0
        row = sino.data[k]
        ok0 = (i0 >= 0) & (i0 < n_det)
        ok1 = (i0 + 1 >= 0) & (i0 + 1 < n_det)
        acc = np.zeros_like(u)
        acc[ok0] += row[i0[ok0]] * (1.0 - w1[ok0])
        acc[ok1] += row[(i0 + 1)[ok1]] * w1[ok1]
        out += acc
    return Image(out)


_FILTERS = ("ram-lak", "hann", "none")


def fbp(sino, filter_name="ram-lak", out_size=None):
    """Filtered back-projection.

    Rows are ramp-filtered in the frequency domain (zero-padded to the
    next power of two), back-projected, and scaled by pi / (2 * n_angles),
    treating the rows as uniform-density samples of the half circle.
    ``filter_name`` is one of ``ram-lak``, ``hann`` (ramp with a Hann
    rolloff), or ``none`` (plain scaled back-projection).
    """
    if filter_name not in _FILTERS:
        raise ValueError(f"unknown filter {filter_name!r}, expected one of {_FILTERS}")
    if out_size is None:
        out_size = sino.n_detectors
    if out_size > sino.n_detectors:
        raise ValueError(
            f"out_size {out_size} exceeds detector span {sino.n_detectors}"
        )
    data = sino.data
    if filter_name != "none":
        n = sino.n_detectors
        m = max(64, int(2 ** np.ceil(np.log2(2 * n))))
        freq = np.fft.fftfreq(m)
        ramp = 2.0 * np.abs(freq)
        if filter_name == "hann":
            ramp *= 0.5 * (1.0 + np.cos(2.0 * np.pi * freq))
        spectrum = np.fft.fft(data, n=m, axis=1) * ramp[None, :]
        data = np.real(np.fft.ifft(spectrum, axis=1))[:, :n]
    filtered = Sinogram(sino.angles, data)
    img = backproject(filtered, out_size=out_size)
    img.data *= np.pi / (2.0 * sino.n_angles)
    return img


def mask_apply(sino, mask):
    """Apply the measurement operator A: zero out unmeasured rows."""
    _check_mask(sino, mask)
    return Sinogram(sino.angles, sino.data * mask.column())


def mask_pinv(meas, mask):
    """Apply the pseudo-inverse A+: re-embed measured rows, zeros elsewhere.

    With the row-embedded layout this is the same 0/1 row selector as
    :func:`mask_apply`; it exists so call sites can name which side of the
    measurement model they are on.
    """
    _check_mask(meas, mask)
    return Sinogram(meas.angles, meas.data * mask.column())


def _check_mask(sino, mask):
    if sino.n_angles != mask.measured.shape[0]:
        raise ValueError(
            f"mask length {mask.measured.shape[0]} does not match "
            f"{sino.n_angles} sinogram rows"
        )


def sigma_from_snr(data, snr_db, rows=None):
    """Noise std for a target SNR, from mean squared value of given rows."""
    if rows is not None:
        data = data[rows]
    power = float(np.mean(np.square(data)))
    return float(np.sqrt(power / 10.0 ** (snr_db / 10.0)))


def add_noise(sino, spec, mask=None, seed=None):
    """Add white Gaussian noise; returns (noisy sinogram, sigma_y used).

    When ``mask`` is given, noise is added to measured rows only and the
    SNR-derived std uses the signal power of those rows.
    """
    rows = mask.measured if mask is not None else None
    if spec.sigma_y is not None:
        sigma = float(spec.sigma_y)
    else:
        sigma = sigma_from_snr(sino.data, spec.snr_db, rows=rows)
    if sigma == 0.0:
        return sino.copy(), 0.0
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(sino.data.shape) * sigma
    if rows is not None:
        noise[~rows] = 0.0
    return Sinogram(sino.angles, sino.data + noise), sigma


def write_image(path, img):
    arrayio.write_array(path, img.data)


def read_image(path):
    data, angles = arrayio.read_array(path)
    if angles is not None:
        raise arrayio.ArrayFormatError("file holds a sinogram, not an image")
    return Image(data)


def write_sinogram(path, sino, float64=False):
    arrayio.write_array(path, sino.data, angles=sino.angles, float64=float64)


def read_sinogram(path):
    data, angles = arrayio.read_array(path)
    if angles is None:
        raise arrayio.ArrayFormatError("file holds an image, not a sinogram")
    return Sinogram(angles, data)
