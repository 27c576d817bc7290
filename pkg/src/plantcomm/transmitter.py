"""Stress input, stress-induced BVOC production and message extraction.

The regulator (stress) signal is a polynomial in time. BVOC emission rate is
taken equal to the production rate of the gene product ``g``::

    dg/dt = v_max / (1 + exp(-w * s(t) + c)) - k_d * g

and the transmitted message is the mass released above the constitutive
(background) emission rate between onset and offset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit

from ._ode import rk4, rk4_linear_decay, step_grid
from ._validation import check_1d, check_scalar

__all__ = [
    "StressProfile",
    "GeneParams",
    "EmissionTrace",
    "MessageSignal",
    "eval_stress",
    "production_rate",
    "simulate_emission",
    "extract_message",
    "read_trace_csv",
    "write_trace_csv",
]


@dataclass(frozen=True)
class StressProfile:
    """Polynomial regulator ``s(t) = a_0 + a_1 t + ... + a_n t^n``."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(a) for a in np.atleast_1d(np.asarray(self.coefficients, dtype=float)))
        if not coeffs:
            raise ValueError("StressProfile needs at least one coefficient")
        if not all(np.isfinite(coeffs)):
            raise ValueError("StressProfile coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def __call__(self, t):
        return eval_stress(self, t)


@dataclass(frozen=True)
class GeneParams:
    """Parameters of the transcriptional-regulation production model."""

    v_max: float
    k_d: float
    w: float
    c: float

    def __post_init__(self):
        check_scalar(self.v_max, "v_max", min_val=0.0, include_min=False)
        check_scalar(self.k_d, "k_d", min_val=0.0)
        check_scalar(self.w, "w")
        check_scalar(self.c, "c")

    def steady_state(self, s_val):
        """Long-run gene-product level under a constant regulator value."""
        if self.k_d == 0:
            return np.inf
        return self.v_max * expit(self.w * s_val - self.c) / self.k_d


@dataclass(frozen=True)
class EmissionTrace:
    times: np.ndarray
    g: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        times = check_1d(self.times, "times", min_len=2)
        g = check_1d(self.g, "g", min_len=2)
        rate = check_1d(self.rate, "rate", min_len=2)
        if not (times.size == g.size == rate.size):
            raise ValueError("times, g and rate must have equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name, arr in (("times", times), ("g", g), ("rate", rate)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def shifted(self, delta):
        return EmissionTrace(self.times + delta, self.g, self.rate)


@dataclass(frozen=True)
class MessageSignal:
    """Released message mass ``M`` and its emission window ``[tau_b, tau_e]``."""

    mass: float
    tau_b: float
    tau_e: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.tau_b < self.tau_e:
            raise ValueError(f"need tau_b < tau_e, got {self.tau_b} >= {self.tau_e}")
        if self.mass < 0:
            raise ValueError("message mass must be non-negative")

    def window(self, t):
        """Rectangular on/off window of the message as a function of time."""
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.tau_b) & (t < self.tau_e), 1.0, 0.0)

    def as_dict(self):
        return {"M": self.mass, "tau_b": self.tau_b, "tau_e": self.tau_e}


def eval_stress(profile, t):
    """Evaluate the stress polynomial at ``t`` (scalar or array) by Horner's rule."""
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    for a in reversed(profile.coefficients):
        acc = acc * t + a
    return acc if acc.ndim else float(acc)


def production_rate(params, g, s_val):
    """Production (= emission) rate ``I`` for gene-product level ``g`` and regulator ``s_val``.

    ``expit`` keeps the logistic term saturated for very large ``|w s - c|``
    instead of overflowing.
    """
    rate = params.v_max * expit(params.w * np.asarray(s_val, dtype=float) - params.c) - params.k_d * np.asarray(g, dtype=float)
    return rate if np.ndim(rate) else float(rate)


def simulate_emission(params, stress, t0, t1, dt, g0=0.0, *, method="affine"):
    """Integrate the production ODE on a fixed grid with classical RK4.

    Parameters
    ----------
    params : GeneParams
    stress : StressProfile
    t0, t1 : float
        Integration interval, ``t0 < t1``.
    dt : float
        Step size, ``0 < dt <= t1 - t0``. A final shorter step lands on ``t1``.
    g0 : float, default=0.0
        Initial gene-product amount.
    method : {"affine", "generic"}
        ``"affine"`` exploits that the right-hand side is linear in ``g`` and
        evaluates all stage forcings at once; ``"generic"`` calls the plain
        RK4 stepper. Both are the same scheme.

    Returns
    -------
    EmissionTrace
    """
    t0 = check_scalar(t0, "t0")
    t1 = check_scalar(t1, "t1")
    dt = check_scalar(dt, "dt")
    g0 = check_scalar(g0, "g0", min_val=0.0)
    times = step_grid(t0, t1, dt)

    def forcing(t):
        return params.v_max * expit(params.w * eval_stress(stress, t) - params.c)

    if method == "affine":
        g = rk4_linear_decay(forcing, params.k_d, g0, times)
    elif method == "generic":
        g = rk4(lambda t, y: forcing(t) - params.k_d * y, g0, times)
    else:
        raise ValueError(f"unknown method {method!r}")
    rate = production_rate(params, g, eval_stress(stress, times))
    return EmissionTrace(times, g, rate)


def extract_message(trace, constitutive_rate, epsilon):
    """Find the induced-emission window and the mass released above background.

    Onset is the first sample whose rate exceeds ``constitutive_rate + epsilon``;
    offset is the first later sample back within ``epsilon`` of the
    constitutive rate (or the end of the trace). The mass is the trapezoidal
    integral of ``rate - constitutive_rate`` over that window, clamped at 0.
    Returns ``None`` when the rate never rises above the band.

    A convenient band is ``epsilon = 0.01 * v_max``.
    """
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    base = check_scalar(constitutive_rate, "constitutive_rate")
    excess = trace.rate - base
    above = np.nonzero(excess > epsilon)[0]
    if above.size == 0:
        return None
    i_b = int(above[0])
    back = np.nonzero(np.abs(excess[i_b + 1 :]) <= epsilon)[0]
    i_e = i_b + 1 + int(back[0]) if back.size else trace.times.size - 1
    if i_e == i_b:
        # onset on the very last sample: no resolvable window
        return None
    seg = slice(i_b, i_e + 1)
    mass = float(trapezoid(excess[seg], trace.times[seg]))
    return MessageSignal(max(mass, 0.0), float(trace.times[i_b]), float(trace.times[i_e]))


def write_trace_csv(trace, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "g", "rate"])
        for row in zip(trace.times, trace.g, trace.rate):
            writer.writerow([repr(float(v)) for v in row])
    return path


def read_trace_csv(path):
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"time", "g", "rate"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [(float(r["time"]), float(r["g"]), float(r["rate"])) for r in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return EmissionTrace(arr[:, 0], arr[:, 1], arr[:, 2])
