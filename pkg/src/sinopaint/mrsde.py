"""Discrete mean-reverting diffusion on arrays.

Forward process: an Ornstein-Uhlenbeck chain pulled toward an anchor
``mu`` with stationary std ``lam``.  With per-step rates ``zeta[t]`` and
the cumulative sum ``zeta_bar[t]``, the marginal of ``x_t`` given ``x_0``
is Gaussian with

    mean = mu + (x_0 - mu) * m[t],      m[t] = exp(-zeta_bar[t])
    var  = v[t] = lam**2 * (1 - exp(-2 * zeta_bar[t]))

The per-step injected variance ``sigma2_dt[t] = lam**2 * (1 - exp(-2 *
zeta[t]))`` is the unique choice for which composing the one-step
transitions reproduces these marginals exactly, i.e.

    v[t] = exp(-2 * zeta[t]) * v[t-1] + sigma2_dt[t]

holds identically.  Reverse steps use the closed-form conditional
``p(x_{t-1} | x_t, x_0)`` of the chain (its mean; the injected noise std
is supplied by the caller), with ``x_0`` replaced by a posterior-mean
estimate.  Arrays are plain float64 ndarrays of any shape; schedule arrays
are indexed directly by the step index ``t`` (entry 0 is the clean end).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# exp(-zeta_total) = 0.01: the terminal state keeps 1% of the clean signal
DEFAULT_ZETA_TOTAL = math.log(100.0)
DEFAULT_LAM = 0.1

_KINDS = ("constant", "cosine")


@dataclass
class Schedule:
    """Precomputed coefficients of the discrete forward chain.

    All arrays have length T+1 and are indexed by the step t in [0, T];
    ``zeta`` and ``sigma2_dt`` describe the transition from t-1 to t, so
    their entry 0 is unused and kept at 0.
    """

    T: int
    lam: float
    kind: str
    zeta_total: float
    zeta: np.ndarray
    zeta_bar: np.ndarray
    m: np.ndarray
    v: np.ndarray
    sigma2_dt: np.ndarray

    def check_step(self, t, lo=1):
        if not (lo <= t <= self.T):
            raise ValueError(f"step {t} outside [{lo}, {self.T}]")


def make_schedule(T, lam=DEFAULT_LAM, kind="constant", zeta_total=DEFAULT_ZETA_TOTAL):
    """Build a Schedule with T steps.

    kind = "constant" uses equal per-step rates; "cosine" ramps the
    cumulative rate as zeta_total * sin(pi*t/(2T))**2, which spends more
    steps near the clean end of the chain.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if zeta_total <= 0:
        raise ValueError("zeta_total must be positive")
    if kind not in _KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}, expected one of {_KINDS}")
    t = np.arange(T + 1, dtype=np.float64)
    if kind == "constant":
        zeta_bar = zeta_total * t / T
    else:
        zeta_bar = zeta_total * np.square(np.sin(0.5 * np.pi * t / T))
    zeta = np.zeros(T + 1, dtype=np.float64)
    zeta[1:] = np.diff(zeta_bar)
    if np.any(zeta[1:] <= 0):
        raise ValueError("per-step rates must be strictly positive")
    m = np.exp(-zeta_bar)
    if m[T] == 0.0:
        raise ValueError("zeta_total too large: signal decay m_T underflows")
    v = lam**2 * (1.0 - np.exp(-2.0 * zeta_bar))
    sigma2_dt = np.zeros(T + 1, dtype=np.float64)
    sigma2_dt[1:] = lam**2 * (1.0 - np.exp(-2.0 * zeta[1:]))
    return Schedule(
        T=T,
        lam=float(lam),
        kind=kind,
        zeta_total=float(zeta_total),
        zeta=zeta,
        zeta_bar=zeta_bar,
        m=m,
        v=v,
        sigma2_dt=sigma2_dt,
    )


def schedule_to_dict(sched):
    return {
        "T": sched.T,
        "lam": sched.lam,
        "kind": sched.kind,
        "zeta_total": sched.zeta_total,
    }


def schedule_from_dict(cfg):
    return make_schedule(
        T=int(cfg["T"]),
        lam=float(cfg.get("lam", DEFAULT_LAM)),
        kind=cfg.get("kind", "constant"),
        zeta_total=float(cfg.get("zeta_total", DEFAULT_ZETA_TOTAL)),
    )


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def forward_sample(x0, mu, t, sched, rng=None):
    """Draw x_t from the forward marginal given the clean state x0."""
    sched.check_step(t, lo=0)
    x0 = np.asarray(x0, dtype=np.float64)
    if t == 0:
        # m_0 = 1, v_0 = 0: the marginal is the point mass at x0
        return x0.copy()
    mean = mu + (x0 - mu) * sched.m[t]
    rng = _as_rng(rng)
    return mean + math.sqrt(sched.v[t]) * rng.standard_normal(x0.shape)


def forward_transition(x_s, mu, s, t, sched, rng=None):
    """Re-noise x_s forward to step t > s via the one-shot transition."""
    sched.check_step(t)
    sched.check_step(s, lo=0)
    if t <= s:
        raise ValueError(f"forward transition needs t > s, got s={s}, t={t}")
    x_s = np.asarray(x_s, dtype=np.float64)
    delta = sched.zeta_bar[t] - sched.zeta_bar[s]
    decay = math.exp(-delta)
    var = sched.lam**2 * (1.0 - math.exp(-2.0 * delta))
    rng = _as_rng(rng)
    return mu + (x_s - mu) * decay + math.sqrt(var) * rng.standard_normal(x_s.shape)


def tweedie_denoise(x_t, mu, t, score, sched):
    """Posterior-mean estimate of x_0 from a score field at step t:

        x0_hat = mu + (x_t - mu + v[t] * score) / m[t]
    """
    sched.check_step(t)
    return mu + (np.asarray(x_t) - mu + sched.v[t] * np.asarray(score)) / sched.m[t]


def denoiser_to_score(x0_hat, x_t, mu, t, sched):
    """Invert tweedie_denoise: the score consistent with an x_0 estimate."""
    sched.check_step(t)
    return (sched.m[t] * (np.asarray(x0_hat) - mu) - (np.asarray(x_t) - mu)) / sched.v[t]


def reverse_coefficients(t, sched):
    """Gains (h_t, g_t) of the conditional mean of x_{t-1} given (x_t, x_0):

        mean = mu + h_t * (x_0 - mu) + g_t * (x_t - mu)

    h_1 = 1 and g_1 = 0 exactly, so the last step lands on the x_0
    estimate itself.
    """
    sched.check_step(t)
    e2_step = math.exp(-2.0 * sched.zeta[t])
    e2_bar = math.exp(-2.0 * sched.zeta_bar[t])
    h_t = (1.0 - e2_step) / (1.0 - e2_bar) * sched.m[t - 1]
    g_t = (
        math.exp(-sched.zeta[t])
        * (1.0 - math.exp(-2.0 * sched.zeta_bar[t - 1]))
        / (1.0 - e2_bar)
    )
    return h_t, g_t


def reverse_step(x_t, x0_hat, mu, t, sched, noise_std=0.0, rng=None):
    """One reverse transition t -> t-1 around an x_0 estimate.

    ``noise_std`` is the injected noise std, a scalar or a field
    broadcastable over the state; pass sqrt(sched.sigma2_dt[t]) for plain
    ancestral sampling and 0.0 for a deterministic step.
    """
    h_t, g_t = reverse_coefficients(t, sched)
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = mu + h_t * (np.asarray(x0_hat) - mu) + g_t * (x_t - mu)
    noise_std = np.asarray(noise_std, dtype=np.float64)
    if np.all(noise_std == 0.0):
        return mean
    rng = _as_rng(rng)
    return mean + noise_std * rng.standard_normal(x_t.shape)


def euler_reverse_step(x_t, score, mu, t, sched, rng=None, noise_std=None):
    """Explicit Euler discretization of the reverse-time dynamics.

    Kept as a cross-check for the closed-form step; first-order accurate
    in the per-step rate instead of exact.
    """
    sched.check_step(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    drift = sched.zeta[t] * (mu - x_t) - sched.sigma2_dt[t] * np.asarray(score)
    mean = x_t - drift
    if noise_std is None:
        noise_std = math.sqrt(sched.sigma2_dt[t])
    noise_std = np.asarray(noise_std, dtype=np.float64)
    if np.all(noise_std == 0.0):
        return mean
    rng = _as_rng(rng)
    return mean + noise_std * rng.standard_normal(x_t.shape)


def estimate_x0(model, x_t, mu, t, sched):
    """Normalize a score-mode or denoiser-mode model to an x_0 estimate."""
    out = model.evaluate(x_t, t, mu, sched)
    if model.mode == "denoiser":
        return out
    return tweedie_denoise(x_t, mu, t, out, sched)


def sample(mu, model, sched, shape=None, seed=None, method="bridge", trace=None):
    """Run the reverse chain from x_T ~ N(mu, v_T) down to a clean sample.

    model : object with attributes ``mode`` ("score" or "denoiser") and
        ``evaluate(x_t, t, mu, sched)``
    method : "bridge" (closed-form conditional mean, default) or "euler"
    trace : optional list; receives (t, x0_hat) snapshots

    The final step injects no noise.  Returns the clean-state estimate.
    """
    if method not in ("bridge", "euler"):
        raise ValueError(f"unknown sampling method {method!r}")
    rng = _as_rng(seed)
    mu = np.asarray(mu, dtype=np.float64)
    if shape is None:
        shape = mu.shape
    x = mu + math.sqrt(sched.v[sched.T]) * rng.standard_normal(shape)
    for t in range(sched.T, 0, -1):
        noise_std = math.sqrt(sched.sigma2_dt[t]) if t > 1 else 0.0
        if method == "bridge":
            x0_hat = estimate_x0(model, x, mu, t, sched)
            if trace is not None:
                trace.append((t, np.array(x0_hat, copy=True)))
            x = reverse_step(x, x0_hat, mu, t, sched, noise_std=noise_std, rng=rng)
        else:
            out = model.evaluate(x, t, mu, sched)
            score = (
                denoiser_to_score(out, x, mu, t, sched)
                if model.mode == "denoiser"
                else out
            )
            if trace is not None:
                trace.append((t, tweedie_denoise(x, mu, t, score, sched)))
            x = euler_reverse_step(x, score, mu, t, sched, rng=rng, noise_std=noise_std)
    return x
