"""Synthetic ground-truth images, limited-angle acquisition simulation,
and the on-disk dataset container.

Phantom images live on the square [-1, 1]^2 with pixel centers at
``linspace(-1, 1, size)``; the vertical coordinate decreases with the row
index so printed arrays match the usual image orientation.  All phantom
intensities are in [0, 1].

An acquisition draws a random subset of grid angles inside a window,
projects the phantom on the full grid, and adds white Gaussian noise to
the measured rows only; unmeasured rows stay exactly zero.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import arrayio
from .arrayio import ArrayFormatError
from .tomo import AngleMask, Image, Sinogram, radon, sigma_from_snr

KINDS = ("shepp-logan", "random-ellipses", "blob-field")

# (half-axis a, half-axis b, center x, center y, tilt deg, added intensity)
# head phantom with the usual low-contrast interior variant
_SHEPP_LOGAN = (
    (0.6900, 0.9200, 0.00, 0.0000, 0.0, 1.00),
    (0.6624, 0.8740, 0.00, -0.0184, 0.0, -0.80),
    (0.1100, 0.3100, 0.22, 0.0000, -18.0, -0.20),
    (0.1600, 0.4100, -0.22, 0.0000, 18.0, -0.20),
    (0.2100, 0.2500, 0.00, 0.3500, 0.0, 0.10),
    (0.0460, 0.0460, 0.00, 0.1000, 0.0, 0.10),
    (0.0460, 0.0460, 0.00, -0.1000, 0.0, 0.10),
    (0.0460, 0.0230, -0.08, -0.6050, 0.0, 0.10),
    (0.0230, 0.0230, 0.00, -0.6060, 0.0, 0.10),
    (0.0230, 0.0460, 0.06, -0.6050, 0.0, 0.10),
)


@dataclass
class Phantom:
    """Recipe for a synthetic image: kind, side length, shape parameters."""

    kind: str
    size: int = 256
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}, expected one of {KINDS}")


def _grid(size):
    xs = np.linspace(-1.0, 1.0, size)
    x = xs[None, :]
    y = -xs[:, None]
    return x, y


def _ellipse_mask(x, y, a, b, cx, cy, tilt_deg):
    phi = np.deg2rad(tilt_deg)
    dx = x - cx
    dy = y - cy
    xr = dx * np.cos(phi) + dy * np.sin(phi)
    yr = -dx * np.sin(phi) + dy * np.cos(phi)
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def shepp_logan(size=256):
    """Rasterize the standard head phantom by pixel-center membership."""
    x, y = _grid(size)
    img = np.zeros((size, size), dtype=np.float64)
    for a, b, cx, cy, tilt, value in _SHEPP_LOGAN:
        img[_ellipse_mask(x, y, a, b, cx, cy, tilt)] += value
    return np.clip(img, 0.0, 1.0)


def random_ellipses(size, rng, n_ellipses=12):
    """Overlapping random ellipses with signed intensities, clipped to [0, 1]."""
    x, y = _grid(size)
    img = np.zeros((size, size), dtype=np.float64)
    for _ in range(n_ellipses):
        cx, cy = rng.uniform(-0.6, 0.6, size=2)
        a, b = rng.uniform(0.05, 0.45, size=2)
        tilt = rng.uniform(0.0, 180.0)
        value = rng.uniform(-0.5, 0.8)
        img[_ellipse_mask(x, y, a, b, cx, cy, tilt)] += value
    return np.clip(img, 0.0, 1.0)


def blob_field(size, rng, n_blobs=40):
    """Superposition of isotropic Gaussian bumps, peak-normalized to 1.

    A dense granular texture; stands in for specimen-like structure
    without claiming biological fidelity.
    """
    x, y = _grid(size)
    img = np.zeros((size, size), dtype=np.float64)
    centers = rng.uniform(-0.85, 0.85, size=(n_blobs, 2))
    widths = rng.uniform(0.03, 0.12, size=n_blobs)
    amps = rng.uniform(0.3, 1.0, size=n_blobs)
    for (cx, cy), w, amp in zip(centers, widths, amps):
        img += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * w * w))
    peak = img.max()
    if peak > 0.0:
        img /= peak
    return img


def generate_phantom(spec, seed=0):
    """Build the phantom image described by ``spec``, deterministic per seed."""
    if spec.size < 16:
        raise ValueError(f"phantom size must be at least 16, got {spec.size}")
    rng = np.random.default_rng(seed)
    if spec.kind == "shepp-logan":
        data = shepp_logan(spec.size)
    elif spec.kind == "random-ellipses":
        data = random_ellipses(spec.size, rng, **spec.params)
    else:
        data = blob_field(spec.size, rng, **spec.params)
    return Image(data)


@dataclass
class AcquisitionProtocol:
    """Limited-angle scan description.

    The full view grid is ``full_view_count`` angles evenly spaced over
    [0, 180); ``limited_count`` distinct angles are drawn uniformly from
    the grid points inside ``limited_range`` (inclusive ends), and the
    per-record SNR is drawn uniformly from ``snr_db_range``.
    """

    full_view_count: int = 180
    limited_range: tuple = (45.0, 135.0)
    limited_count: int = 61
    snr_db_range: tuple = (5.0, 15.0)
    seed: int | None = None

    def __post_init__(self):
        lo, hi = self.limited_range
        if not (0.0 <= lo < hi < 180.0):
            raise ValueError(f"limited_range must satisfy 0 <= lo < hi < 180, got {self.limited_range}")
        if self.full_view_count < 1:
            raise ValueError("full_view_count must be positive")
        if self.snr_db_range[0] > self.snr_db_range[1]:
            raise ValueError(f"snr_db_range out of order: {self.snr_db_range}")
        if self.limited_count > self.window_indices().size:
            raise ValueError(
                f"limited_count {self.limited_count} exceeds the "
                f"{self.window_indices().size} grid angles inside {self.limited_range}"
            )

    def grid_angles(self):
        return np.arange(self.full_view_count) * (180.0 / self.full_view_count)

    def window_indices(self):
        angles = self.grid_angles()
        lo, hi = self.limited_range
        return np.nonzero((angles >= lo) & (angles <= hi))[0]


def simulate_acquisition(img, proto, seed=None):
    """Scan a phantom under the protocol.

    Returns (y, mask, sigma_y, x0_full): the zero-filled noisy sinogram,
    the measured-row mask, the noise std actually used, and the clean
    full-grid sinogram.  The whole tuple is a pure function of
    (img, proto, seed); ``seed=None`` falls back to ``proto.seed``.
    """
    if seed is None:
        seed = proto.seed if proto.seed is not None else 0
    rng = np.random.default_rng(seed)
    angles = proto.grid_angles()
    x0_full = radon(img, angles)
    chosen = rng.choice(proto.window_indices(), size=proto.limited_count, replace=False)
    measured = np.zeros(proto.full_view_count, dtype=bool)
    measured[np.sort(chosen)] = True
    mask = AngleMask(angles, measured)
    snr_db = rng.uniform(*proto.snr_db_range)
    sigma_y = sigma_from_snr(x0_full.data, snr_db, rows=measured)
    data = np.zeros_like(x0_full.data)
    noise = rng.standard_normal((mask.n_measured, x0_full.n_detectors))
    data[measured] = x0_full.data[measured] + sigma_y * noise
    return Sinogram(angles, data), mask, sigma_y, x0_full


def pad_theta_circular(sino, target_rows):
    """Extend a sinogram along the angle axis by half-turn periodicity.

    A projection at theta + 180 degrees sees the same rays traversed in
    the opposite direction, so appended rows are earlier rows with the
    detector axis flipped:  row j = row (j mod n), flipped when
    floor(j / n) is odd.  Cropping back to the source row count is an
    exact inverse.
    """
    n = sino.n_angles
    if target_rows < n:
        raise ValueError(f"target_rows {target_rows} is smaller than the {n} source rows")
    if target_rows == n:
        return sino.copy()
    j = np.arange(target_rows)
    turns, base = np.divmod(j, n)
    rows = sino.data[base]
    flipped = rows[:, ::-1]
    data = np.where((turns % 2 == 1)[:, None], flipped, rows)
    angles = sino.angles[base] + 180.0 * turns
    return Sinogram(angles, data)


def crop_theta(sino, n_rows):
    """Keep the first n_rows rows; inverse of :func:`pad_theta_circular`."""
    if n_rows > sino.n_angles:
        raise ValueError(f"cannot crop to {n_rows} rows from {sino.n_angles}")
    return Sinogram(sino.angles[:n_rows].copy(), sino.data[:n_rows].copy())


@dataclass
class AcquisitionRecord:
    """One simulated scan: observation, mask, noise level, ground truth."""

    seed: int
    sigma_y: float
    y: Sinogram
    mask: AngleMask
    x0_full: Sinogram


_SET_MAGIC = b"tomo.set\x00\x00\x00\x00"
_SET_VERSION = 1


def dataset_write(path, records, manifest=True):
    """Write acquisition records to a single container file.

    Each record frames the clean and observed sinograms as float64
    blocks (bitwise round-trip) plus the mask bytes, seed, and noise
    std.  A JSON manifest with per-record summaries is written next to
    the container unless ``manifest`` is False.
    """
    with open(path, "wb") as fh:
        fh.write(_SET_MAGIC)
        fh.write(struct.pack("<II", _SET_VERSION, len(records)))
        for rec in records:
            fh.write(struct.pack("<Qd", rec.seed, rec.sigma_y))
            arrayio.write_block(fh, rec.x0_full.data, angles=rec.x0_full.angles, float64=True)
            arrayio.write_block(fh, rec.y.data, angles=rec.y.angles, float64=True)
            fh.write(rec.mask.measured.astype(np.uint8).tobytes())
    if manifest:
        info = {
            "format": _SET_MAGIC.rstrip(b"\x00").decode("ascii"),
            "version": _SET_VERSION,
            "records": [
                {
                    "seed": rec.seed,
                    "sigma_y": rec.sigma_y,
                    "n_angles": rec.y.n_angles,
                    "n_detectors": rec.y.n_detectors,
                    "measured_rows": rec.mask.n_measured,
                }
                for rec in records
            ],
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
            fh.write("\n")


def dataset_read(path):
    """Read back a container written by :func:`dataset_write`."""
    records = []
    with open(path, "rb") as fh:
        magic = arrayio._read_exact(fh, len(_SET_MAGIC), "magic")
        if magic != _SET_MAGIC:
            raise ArrayFormatError(f"bad magic {magic!r}, not a dataset file")
        version, count = struct.unpack("<II", arrayio._read_exact(fh, 8, "header"))
        if version != _SET_VERSION:
            raise ArrayFormatError(f"unsupported dataset version {version}")
        for _ in range(count):
            seed, sigma_y = struct.unpack("<Qd", arrayio._read_exact(fh, 16, "record header"))
            x0_data, x0_angles = arrayio.read_block(fh)
            y_data, y_angles = arrayio.read_block(fh)
            raw = arrayio._read_exact(fh, y_data.shape[0], "mask")
            measured = np.frombuffer(raw, dtype=np.uint8).astype(bool)
            records.append(
                AcquisitionRecord(
                    seed=int(seed),
                    sigma_y=float(sigma_y),
                    y=Sinogram(y_angles, y_data),
                    mask=AngleMask(y_angles, measured),
                    x0_full=Sinogram(x0_angles, x0_data),
                )
            )
    return records
