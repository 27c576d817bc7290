"""Open-air puff transport of an instantaneous release.

Wind blows along +x with speed ``u``; the ground is the plane ``z = 0`` and
acts as a reflecting boundary (image source at ``-h``). Turbulent mixing is
folded into ``k = (1/u) * integral_0^x D(eta) d eta``, which is evaluated at
the receiver's downwind coordinate and then held fixed in the Gaussian puff.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import DomainError, check_increasing, check_scalar

__all__ = [
    "DiffusivityProfile",
    "ChannelParams",
    "FieldPoint",
    "eddy_k",
    "puff",
    "concentration",
    "delay",
    "write_field_csv",
]

DELAY_MODES = ("advective", "diffusive", "mixed")


@dataclass(frozen=True)
class DiffusivityProfile:
    """Tabulated eddy diffusivity ``D(x)``, linearly interpolated between nodes."""

    x: tuple[float, ...]
    D: tuple[float, ...]

    def __post_init__(self):
        x = check_increasing(self.x, "diffusivity.x")
        d = np.asarray(self.D, dtype=float)
        if d.shape != x.shape:
            raise ValueError("diffusivity.x and diffusivity.D must have the same length")
        if x[0] > 0:
            raise ValueError("tabulated diffusivity must start at x <= 0")
        if np.any(d <= 0):
            raise ValueError("eddy diffusivity must be positive everywhere")
        object.__setattr__(self, "x", tuple(x.tolist()))
        object.__setattr__(self, "D", tuple(d.tolist()))

    def __call__(self, x):
        return np.interp(x, self.x, self.D)

    def integral(self, x):
        """Exact integral of the piecewise-linear profile from 0 to ``x``."""
        xs = np.asarray(self.x)
        ds = np.asarray(self.D)
        x = np.asarray(x, dtype=float)
        if np.any(x > xs[-1] * (1 + 1e-12)):
            raise DomainError(f"x beyond tabulated diffusivity range (max {xs[-1]})")
        # cumulative trapezoid from the first node, re-based at 0
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]) * np.diff(xs))])

        def upto(v):
            j = np.clip(np.searchsorted(xs, v, side="right") - 1, 0, xs.size - 2)
            dv = self(v)
            return cum[j] + 0.5 * (ds[j] + dv) * (v - xs[j])

        return upto(x) - upto(np.zeros_like(x))


@dataclass(frozen=True)
class ChannelParams:
    """Wind speed ``u`` (m/s), eddy diffusivity (m^2/s, constant or tabulated), source height ``h`` (m)."""

    u: float
    diffusivity: float | DiffusivityProfile = 0.1
    h: float = 1.0

    def __post_init__(self):
        check_scalar(self.u, "u", min_val=0.0, include_min=False)
        check_scalar(self.h, "h", min_val=0.0)
        if not isinstance(self.diffusivity, DiffusivityProfile):
            d = check_scalar(self.diffusivity, "diffusivity", min_val=0.0, include_min=False)
            object.__setattr__(self, "diffusivity", d)

    @property
    def constant_D(self):
        return not isinstance(self.diffusivity, DiffusivityProfile)

    @property
    def D(self):
        if not self.constant_D:
            raise ValueError("channel has a tabulated diffusivity; no single D")
        return self.diffusivity


@dataclass(frozen=True)
class FieldPoint:
    x: float
    y: float
    z: float
    t: float

    def __post_init__(self):
        if np.any(np.asarray(self.z) < 0):
            raise DomainError("field points must lie on or above the ground (z >= 0)")


def eddy_k(params, x):
    """``k = (1/u) * integral_0^x D`` in m^2; ``D x / u`` for constant diffusivity."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("eddy_k is defined for downwind distances x >= 0")
    if params.constant_D:
        k = params.diffusivity * x / params.u
    else:
        k = params.diffusivity.integral(x) / params.u
    return k if k.ndim else float(k)


def puff(M, x, y, z, t, *, u, h, k):
    """Reflected Gaussian puff concentration (kg/m^3) for an explicit ``k > 0``."""
    x, y, z, t, k = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z, t, k)))
    four_k = 4.0 * k
    pref = M / (8.0 * (math.pi * k) ** 1.5)
    lateral = np.exp((-((x - u * t) ** 2) - y**2) / four_k)
    vertical = np.exp(-((z - h) ** 2) / four_k) + np.exp(-((z + h) ** 2) / four_k)
    return pref * lateral * vertical


def concentration(params, M, p):
    """Airborne concentration (kg/m^3) at field point ``p`` after releasing mass ``M`` at t=0.

    ``p`` fields may be arrays (broadcast together). Where ``k = 0`` (x = 0)
    the puff has zero width: the value is the limit 0 everywhere except the
    source point itself, which raises :class:`DomainError`.
    """
    M = check_scalar(M, "M", min_val=0.0)
    x, y, z, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (p.x, p.y, p.z, p.t)))
    if np.any(z < 0):
        raise DomainError("z must be >= 0")
    k = np.asarray(eddy_k(params, x), dtype=float)
    out = np.zeros(x.shape)
    live = k > 0
    if np.any(~live):
        at_source = (~live) & (x - params.u * t == 0) & (y == 0) & (np.abs(z) == params.h)
        if np.any(at_source):
            raise DomainError("concentration is singular at the release point")
    if np.any(live):
        out[live] = puff(M, x[live], y[live], z[live], t[live], u=params.u, h=params.h, k=k[live])
    return out if out.ndim else float(out)


def delay(params, x_r, mode="advective"):
    """Propagation delay (s) to downwind distance ``x_r``.

    advective: ``x_r / u``; diffusive: ``x_r^2 / D``; mixed:
    ``x_r / (2u) + x_r^2 / (2D)``. The last two need a constant ``D``.
    """
    x_r = np.asarray(x_r, dtype=float)
    if np.any(x_r < 0):
        raise DomainError("x_r must be >= 0")
    if mode == "advective":
        out = x_r / params.u
    elif mode == "diffusive":
        out = x_r**2 / params.D
    elif mode == "mixed":
        out = x_r / (2.0 * params.u) + x_r**2 / (2.0 * params.D)
    else:
        raise ValueError(f"mode must be one of {DELAY_MODES}, got {mode!r}")
    return out if out.ndim else float(out)


def write_field_csv(path, params, M, points):
    """Write ``x,y,z,t,concentration`` rows for an iterable of :class:`FieldPoint`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "z", "t", "concentration"])
        for p in points:
            c = concentration(params, M, p)
            writer.writerow([repr(float(v)) for v in (p.x, p.y, p.z, p.t, c)])
    return path
