"""Leaf uptake, system noise, SNR and binary concentration-shift-keying (CSK) decisions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._ode import rk4
from ._validation import DomainError, check_1d, check_scalar
from .channel import concentration, eddy_k, FieldPoint

__all__ = [
    "LeafParams",
    "ReceiverLocation",
    "NoiseModel",
    "DemodConfig",
    "leaf_concentration",
    "leaf_uptake_ode",
    "noise_mean",
    "add_noise",
    "demodulate",
    "mean_power",
    "snr_db",
    "CSKDemodulator",
]


@dataclass(frozen=True)
class LeafParams:
    """Receiver leaf constants. Defaults are a sagebrush leaf (permeability in m/s, area m^2, mass kg)."""

    P_L: float = 1e-8
    A_L: float = 25e-4
    M_L: float = 0.5e-3
    K_AW: float = 10.0
    K_LW: float | None = None

    def __post_init__(self):
        for name in ("P_L", "A_L", "M_L", "K_AW"):
            check_scalar(getattr(self, name), name, min_val=0.0, include_min=False)
        if self.K_LW is not None:
            check_scalar(self.K_LW, "K_LW", min_val=0.0, include_min=False)

    @property
    def uptake_coefficient(self):
        """``P_L A_L / (K_AW M_L)`` -- converts time-integrated air concentration to leaf units."""
        return self.P_L * self.A_L / (self.K_AW * self.M_L)


@dataclass(frozen=True)
class ReceiverLocation:
    x_r: float
    y_r: float = 0.0
    z_r: float = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.z_r) < 0):
            raise DomainError("receiver must be on or above the ground (z_r >= 0)")


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian system noise ``N(m*mu, (m*sigma)^2)`` with intensity multiplier ``m``."""

    mu: float
    sigma: float
    intensity_multiplier: float = 1.0

    def __post_init__(self):
        check_scalar(self.mu, "mu")
        check_scalar(self.sigma, "sigma", min_val=0.0)
        check_scalar(self.intensity_multiplier, "intensity_multiplier", min_val=0.0, include_min=False)

    @classmethod
    def from_mean(cls, mu, intensity_multiplier=1.0):
        """Three-sigma rule: ``sigma = |mu| / 3``."""
        return cls(float(mu), abs(float(mu)) / 3.0, intensity_multiplier)

    @classmethod
    def off(cls):
        return cls(0.0, 0.0, 1.0)

    def scaled(self, intensity_multiplier):
        return NoiseModel(self.mu, self.sigma, intensity_multiplier)

    @property
    def is_off(self):
        return self.mu == 0 and self.sigma == 0

    @property
    def power(self):
        """Expected mean-square of the (unclamped) noise term."""
        m = self.intensity_multiplier
        return (m * self.mu) ** 2 + (m * self.sigma) ** 2


@dataclass(frozen=True)
class DemodConfig:
    threshold_fraction: float = 0.55
    tau_r: float = math.inf

    def __post_init__(self):
        check_scalar(self.threshold_fraction, "threshold_fraction", min_val=0.0, max_val=1.0, include_min=False)
        check_scalar(self.tau_r, "tau_r", min_val=0.0, include_min=False)


def leaf_concentration(leaf, chan, M, loc, tau_r=math.inf):
    """Closed-form leaf concentration after uptake up to reception time ``tau_r``.

    Loss-free uptake integrated against the reflected puff::

        C_L = coef * M / (8 pi k u) * [exp(-((z_r-h)^2+y_r^2)/4k) + exp(-((z_r+h)^2+y_r^2)/4k)]
              * [erf((u tau_r - x_r) / (2 sqrt k)) + erf(x_r / (2 sqrt k))]

    with ``coef = P_L A_L / (K_AW M_L)`` and ``k`` evaluated at ``x_r``.
    ``tau_r = inf`` (the default) takes the first erf to 1. ``loc.x_r`` may be
    an array of downwind distances.
    """
    M = check_scalar(M, "M", min_val=0.0)
    x = np.asarray(loc.x_r, dtype=float)
    if np.any(x <= 0):
        raise DomainError("leaf_concentration needs x_r > 0")
    y = np.asarray(loc.y_r, dtype=float)
    z = np.asarray(loc.z_r, dtype=float)
    tau_r = check_scalar(tau_r, "tau_r", min_val=0.0)
    u, h = chan.u, chan.h
    k = np.asarray(eddy_k(chan, x), dtype=float)
    root = 2.0 * np.sqrt(k)
    vertical = np.exp((-((z - h) ** 2) - y**2) / (4.0 * k)) + np.exp((-((z + h) ** 2) - y**2) / (4.0 * k))
    head = 1.0 if math.isinf(tau_r) else erf((u * tau_r - x) / root)
    out = leaf.uptake_coefficient * M / (8.0 * math.pi * k * u) * vertical * (head + erf(x / root))
    return out if out.ndim else float(out)


def leaf_uptake_ode(leaf, c_air, dt, c0=0.0):
    """Integrate the full uptake ODE with first-order loss to air.

    ``dC_L/dt = P_L A_L/(K_AW M_L) * C_air - 1000 P_L A_L/(K_LW M_L) * C_L``

    ``c_air`` is sampled every ``dt`` seconds starting at t=0 and linearly
    interpolated at RK4 half steps. Needs ``leaf.K_LW``.
    """
    if leaf.K_LW is None:
        raise ValueError("leaf_uptake_ode needs the leaf-water partition coefficient K_LW")
    dt = check_scalar(dt, "dt", min_val=0.0, include_min=False)
    c_air = check_1d(c_air, "c_air", min_len=2)
    times = dt * np.arange(c_air.size)
    gain = leaf.uptake_coefficient
    loss = 1000.0 * leaf.P_L * leaf.A_L / (leaf.K_LW * leaf.M_L)

    def rhs(t, c):
        return gain * np.interp(t, times, c_air) - loss * c

    return rk4(rhs, float(c0), times)


def noise_mean(leaf, chan, M, x_a, tau_r=math.inf, y_r=0.0, z_r=1.0):
    """Mean of the system noise: minus one tenth of the leaf concentration at ``x_a``."""
    x_a = check_scalar(x_a, "x_a", min_val=0.0, include_min=False)
    return -leaf_concentration(leaf, chan, M, ReceiverLocation(x_a, y_r, z_r), tau_r) / 10.0


def add_noise(c_l, noise, rng_draw):
    """Noisy leaf concentration from standard-normal draw(s); negative values clamp to 0."""
    m = noise.intensity_multiplier
    raw = np.asarray(c_l, dtype=float) + m * noise.mu + m * noise.sigma * np.asarray(rng_draw, dtype=float)
    out = np.maximum(raw, 0.0)
    return out if out.ndim else float(out)


def demodulate(c_ln, threshold):
    """Binary CSK decision: 1 iff ``c_ln >= threshold``."""
    threshold = check_scalar(threshold, "threshold", min_val=0.0, include_min=False)
    bits = (np.asarray(c_ln, dtype=float) >= threshold).astype(np.int64)
    return bits if bits.ndim else int(bits)


def mean_power(samples, axis=None):
    samples = np.asarray(samples, dtype=float)
    return np.mean(samples**2, axis=axis)


def snr_db(signal_power, noise_power):
    """``10 log10(signal_power / noise_power)``."""
    signal_power = np.asarray(signal_power, dtype=float)
    noise_power = np.asarray(noise_power, dtype=float)
    if np.any(noise_power <= 0):
        raise ValueError("noise power must be positive")
    out = 10.0 * np.log10(signal_power / noise_power)
    return out if out.ndim else float(out)


def air_concentration_series(chan, M, loc, times):
    """Airborne concentration at a receiver over time (kg/m^3)."""
    times = np.asarray(times, dtype=float)
    return concentration(chan, M, FieldPoint(np.full_like(times, loc.x_r), loc.y_r, loc.z_r, times))


class CSKDemodulator(ClassifierMixin, BaseEstimator):
    """Threshold demodulator whose threshold is a fraction of a reference maximum.

    ``fit`` learns ``threshold_ = threshold_fraction * max(X)`` from reference
    (e.g. trial-mean noisy) leaf concentrations; ``predict`` returns bits.

    Parameters
    ----------
    threshold_fraction : float, default=0.55
        Fraction in (0, 1] of the largest reference concentration.

    Attributes
    ----------
    threshold_ : float
    reference_max_ : float
    classes_ : ndarray of shape (2,)
    """

    def __init__(self, threshold_fraction=0.55):
        self.threshold_fraction = threshold_fraction

    def fit(self, X, y=None):
        check_scalar(self.threshold_fraction, "threshold_fraction", min_val=0.0, max_val=1.0, include_min=False)
        X = check_1d(X, "X")
        self.reference_max_ = float(np.max(X))
        if self.reference_max_ <= 0:
            raise ValueError("reference concentrations are all non-positive; no threshold can be set")
        self.threshold_ = self.threshold_fraction * self.reference_max_
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        return demodulate(check_1d(X, "X"), self.threshold_)
