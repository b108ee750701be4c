"""Score and denoiser models plugged into the reverse chain.

A model is any object with a ``mode`` attribute ("score" returns the
gradient of the log marginal density at step t, "denoiser" returns an
estimate of the clean state) and an ``evaluate(x_t, t, mu, sched)``
method.  The two modes are interchangeable through the posterior-mean
identity implemented by ``mrsde.tweedie_denoise`` /
``mrsde.denoiser_to_score``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import arrayio, mrsde


@dataclass
class GaussianPrior:
    """Independent Gaussian prior per entry: x0 ~ N(mean0, var0)."""

    mean0: np.ndarray | float
    var0: np.ndarray | float

    def __post_init__(self):
        if np.any(np.asarray(self.var0) < 0):
            raise ValueError("var0 must be nonnegative")


class GaussianAnalyticScore:
    """Exact score of the forward marginal under a Gaussian prior.

    With x0 ~ N(mean0, var0) entrywise, x_t is Gaussian with mean
    mu + m_t*(mean0 - mu) and variance m_t**2 * var0 + v_t, so the score
    is the usual -(x_t - mean)/variance.
    """

    mode = "score"

    def __init__(self, prior):
        self.prior = prior

    def evaluate(self, x_t, t, mu, sched):
        sched.check_step(t)
        m_t, v_t = sched.m[t], sched.v[t]
        mean = mu + m_t * (np.asarray(self.prior.mean0) - mu)
        var = m_t**2 * np.asarray(self.prior.var0) + v_t
        return -(np.asarray(x_t) - mean) / var

    def log_density(self, x_t, t, mu, sched):
        """Log marginal density, summed over entries (used for checks)."""
        sched.check_step(t)
        m_t, v_t = sched.m[t], sched.v[t]
        mean = mu + m_t * (np.asarray(self.prior.mean0) - mu)
        var = m_t**2 * np.asarray(self.prior.var0) + v_t
        x_t = np.asarray(x_t)
        return float(
            np.sum(-0.5 * np.square(x_t - mean) / var - 0.5 * np.log(2.0 * np.pi * var))
        )


class OracleDenoiser:
    """Returns the ground-truth clean state regardless of input.

    A verification probe: with this model the sampler's only error is
    whatever the sampling loop itself introduces.
    """

    mode = "denoiser"

    def __init__(self, x0_true):
        self.x0_true = np.asarray(x0_true, dtype=np.float64)

    def evaluate(self, x_t, t, mu, sched):
        sched.check_step(t)
        return self.x0_true.copy()


class LinearDenoiser:
    """Per-step, per-entry affine estimate of the clean state.

    For each step t the estimate is ``x0_hat = weight[t] * x_t +
    intercept[t]`` with entrywise arrays.  For data drawn from an
    independent Gaussian prior the least-squares fit converges to the
    exact posterior mean, which is affine in x_t entrywise.
    """

    mode = "denoiser"

    def __init__(self, weight, intercept, ridge=0.0):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.intercept = np.asarray(intercept, dtype=np.float64)
        if self.weight.shape != self.intercept.shape:
            raise ValueError("weight and intercept shapes differ")
        if self.weight.ndim < 1:
            raise ValueError("expected stacked per-step coefficient arrays")
        self.ridge = float(ridge)

    @property
    def T(self):
        return self.weight.shape[0] - 1

    def evaluate(self, x_t, t, mu, sched):
        sched.check_step(t)
        if t > self.T:
            raise ValueError(f"model fitted for {self.T} steps, got t={t}")
        return self.weight[t] * np.asarray(x_t) + self.intercept[t]


def fit_linear_denoiser(pairs, T, ridge=0.0):
    """Fit a LinearDenoiser from (x_t, x0, t) training triplets.

    Parameters
    ----------
    pairs : iterable of (x_t, x0, t) with arrays of a common shape;
        consumed once, so a lazily generated stream is fine
    T : number of steps the model covers (t in [1, T])
    ridge : slope penalty; the intercept is never penalized, so with
        ridge -> inf the fit degenerates to the per-entry mean of x0

    Every step bin needs at least two pairs.  With zero ridge a bin whose
    inputs are constant leaves the slope underdetermined; that raises
    instead of silently dividing by zero.
    """
    shape = None
    count = np.zeros(T + 1, dtype=np.int64)
    sums = None
    for x_t, x0, t in pairs:
        x_t = np.asarray(x_t, dtype=np.float64)
        x0 = np.asarray(x0, dtype=np.float64)
        if shape is None:
            shape = x_t.shape
            # running sums of x, y, x*x, x*y per bin, entrywise
            sums = np.zeros((T + 1, 4) + shape, dtype=np.float64)
        if x_t.shape != shape or x0.shape != shape:
            raise ValueError("all training arrays must share one shape")
        if not 1 <= t <= T:
            raise ValueError(f"pair step {t} outside [1, {T}]")
        count[t] += 1
        sums[t, 0] += x_t
        sums[t, 1] += x0
        sums[t, 2] += x_t * x_t
        sums[t, 3] += x_t * x0
    if shape is None:
        raise ValueError("no training pairs supplied")
    if np.any(count[1:] < 2):
        missing = np.nonzero(count[1:] < 2)[0][:8] + 1
        raise ValueError(f"need at least 2 pairs per step bin, short at t={list(missing)}")
    weight = np.zeros((T + 1,) + shape, dtype=np.float64)
    intercept = np.zeros((T + 1,) + shape, dtype=np.float64)
    for t in range(1, T + 1):
        n = count[t]
        mean_x = sums[t, 0] / n
        mean_y = sums[t, 1] / n
        sxx = sums[t, 2] - n * mean_x * mean_x
        sxy = sums[t, 3] - n * mean_x * mean_y
        denom = sxx + ridge
        if np.any(denom == 0.0):
            raise ValueError(
                f"singular normal equations at t={t}; add ridge regularization"
            )
        weight[t] = sxy / denom
        intercept[t] = mean_y - weight[t] * mean_x
    return LinearDenoiser(weight, intercept, ridge=ridge)


_MODEL_MAGIC = b"tomo.lin\x00\x00\x00\x00"
_MODEL_VERSION = 1


def save_linear_denoiser(path, model):
    """Serialize per-step weight/intercept planes with a step index.

    Only 2-D (row, column) coefficient planes are supported, matching
    sinogram-shaped states; lower-rank fits do not round-trip.
    """
    if model.weight.ndim != 3:
        raise ValueError("save expects per-step 2-D coefficient planes")
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", _MODEL_VERSION))
        fh.write(struct.pack("<Id", model.T, model.ridge))
        for t in range(1, model.T + 1):
            arrayio.write_block(fh, model.weight[t], float64=True)
            arrayio.write_block(fh, model.intercept[t], float64=True)


def load_linear_denoiser(path):
    with open(path, "rb") as fh:
        magic = arrayio._read_exact(fh, len(_MODEL_MAGIC), "magic")
        if magic != _MODEL_MAGIC:
            raise arrayio.ArrayFormatError(
                f"bad magic {magic!r}, not a linear denoiser file"
            )
        (version,) = struct.unpack("<I", arrayio._read_exact(fh, 4, "version"))
        if version != _MODEL_VERSION:
            raise arrayio.ArrayFormatError(f"unsupported model version {version}")
        T, ridge = struct.unpack("<Id", arrayio._read_exact(fh, 12, "model header"))
        weights, intercepts = [], []
        for _ in range(T):
            w, _ = arrayio.read_block(fh)
            b, _ = arrayio.read_block(fh)
            weights.append(w)
            intercepts.append(b)
    shape = weights[0].shape
    weight = np.zeros((T + 1,) + shape, dtype=np.float64)
    intercept = np.zeros((T + 1,) + shape, dtype=np.float64)
    weight[1:] = np.stack(weights)
    intercept[1:] = np.stack(intercepts)
    return LinearDenoiser(weight, intercept, ridge=ridge)
