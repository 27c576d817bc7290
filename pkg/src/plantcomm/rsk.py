"""Ratio shift keying with a two-species BVOC blend.

Both species share the channel and leaf constants; they differ only in the
released mass and in the intensity of the system noise acting on them. The
receiver decodes from the B/A ratio of trial-mean noisy leaf concentrations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import point_draws
from ._validation import check_increasing, check_scalar
from .receiver import ReceiverLocation, add_noise, leaf_concentration

__all__ = [
    "BlendSpec",
    "RatioWindow",
    "BlendResult",
    "simulate_blend",
    "decode_ratio",
    "rsk_decode_range",
    "write_rsk_csv",
]

DECODED, CORRUPTED, SILENT = "decoded", "corrupted", "silent"
# window edges are inclusive up to rounding: 2.75e-9 / 1.1e-9 is 2.5000000000000004
EDGE_RTOL = 1e-9


@dataclass(frozen=True)
class BlendSpec:
    M_A: float = 1.1e-9
    M_B: float = 2.75e-9
    noise_mult_A: float = 1.0
    noise_mult_B: float = 1.0

    def __post_init__(self):
        check_scalar(self.M_A, "M_A", min_val=0.0, include_min=False)
        check_scalar(self.M_B, "M_B", min_val=0.0, include_min=False)
        check_scalar(self.noise_mult_A, "noise_mult_A", min_val=0.0, include_min=False)
        check_scalar(self.noise_mult_B, "noise_mult_B", min_val=0.0, include_min=False)

    @classmethod
    def with_noise_ratio(cls, n, M_A=1.1e-9, M_B=2.75e-9):
        """Noise ratio (A/B) = 1/n: A keeps the base intensity, B gets ``n`` times it."""
        return cls(M_A, M_B, 1.0, float(n))


@dataclass(frozen=True)
class RatioWindow:
    lo: float = 2.0
    hi: float = 2.5

    def __post_init__(self):
        check_scalar(self.lo, "lo", min_val=0.0, include_min=False)
        check_scalar(self.hi, "hi")
        if not self.lo < self.hi:
            raise ValueError(f"ratio window needs lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class BlendResult:
    x: np.ndarray
    mean_c_a: np.ndarray
    mean_c_b: np.ndarray

    @property
    def ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.mean_c_a > 0, self.mean_c_b / np.where(self.mean_c_a > 0, self.mean_c_a, 1.0), np.nan)

    def verdicts(self, window):
        return [decode_ratio(a, b, window) for a, b in zip(self.mean_c_a, self.mean_c_b)]


def simulate_blend(blend, leaf, chan, loc, noise_base, trials, seed, *, tau_r=math.inf, stream=0, n_jobs=1):
    """Trial-mean noisy leaf concentrations of both species at each ``loc.x_r``.

    Species A uses ``noise_base`` scaled by ``noise_mult_A`` and species B the
    same base scaled by ``noise_mult_B``. Draws come from independent seeded
    substreams keyed by ``(stream, species, distance index)``.
    """
    if int(trials) < 1:
        raise ValueError("trials must be >= 1")
    x = np.atleast_1d(np.asarray(loc.x_r, dtype=float))
    where = ReceiverLocation(x, loc.y_r, loc.z_r)
    c_a = np.atleast_1d(leaf_concentration(leaf, chan, blend.M_A, where, tau_r))
    c_b = np.atleast_1d(leaf_concentration(leaf, chan, blend.M_B, where, tau_r))
    means = []
    for tag, c_l, mult in ((0, c_a, blend.noise_mult_A), (1, c_b, blend.noise_mult_B)):
        noise = noise_base.scaled(noise_base.intensity_multiplier * mult)
        if noise.is_off:
            means.append(c_l.copy())
            continue
        z = point_draws(seed, (int(stream), tag), x.size, int(trials), n_jobs)
        means.append(add_noise(c_l[:, None], noise, z).mean(axis=1))
    return BlendResult(x, means[0], means[1])


def decode_ratio(c_a, c_b, window=RatioWindow()):
    """Verdict for one pair of concentrations: silent, decoded or corrupted.

    Ratios above ``window.hi`` are treated as corrupted as well. Both edges
    are inclusive, with a relative slack of ``EDGE_RTOL``.
    """
    if c_a <= 0:
        return SILENT
    r = c_b / c_a
    ok = window.lo * (1 - EDGE_RTOL) <= r <= window.hi * (1 + EDGE_RTOL)
    return DECODED if ok else CORRUPTED


def decode_range_from_ratio(x, ratio, lo):
    """Largest distance before the first point whose ratio is below ``lo`` (or undefined)."""
    bad = np.nonzero(~(np.asarray(ratio) >= lo * (1 - EDGE_RTOL)))[0]
    if bad.size == 0:
        return float(x[-1])
    if bad[0] == 0:
        return 0.0
    return float(x[bad[0] - 1])


def rsk_decode_range(
    blend, leaf, chan, noise_base, window, x_grid, trials, seed, *, y_r=0.0, z_r=1.0, tau_r=math.inf, stream=0, n_jobs=1
):
    """Maximum decode distance: the last grid point before the trial-mean B/A ratio drops below ``window.lo``.

    A silent reference species (mean A concentration 0) also ends the range.
    Returns 0 when the first grid point already fails.
    """
    x = check_increasing(x_grid, "x_grid")
    if x[0] <= 0:
        raise ValueError("x_grid must be positive")
    res = simulate_blend(
        blend, leaf, chan, ReceiverLocation(x, y_r, z_r), noise_base, trials, seed, tau_r=tau_r, stream=stream, n_jobs=n_jobs
    )
    return decode_range_from_ratio(x, res.ratio, window.lo)


def write_rsk_csv(path, result, window, delimiter=","):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(["x", "mean_c_a", "mean_c_b", "ratio", "verdict"])
        for x, a, b, r, v in zip(result.x, result.mean_c_a, result.mean_c_b, result.ratio, result.verdicts(window)):
            writer.writerow([repr(float(x)), repr(float(a)), repr(float(b)), repr(float(r)), v])
    return path
