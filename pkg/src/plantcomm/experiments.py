"""Monte Carlo sweep harness for the numerical analyses.

Each analysis kind sweeps one axis (downwind distance, wind speed or noise
intensity) for a family of parameter values, pushes seeded Gaussian noise
draws through the receiver and aggregates trial means. Delay analyses are
closed-form and noise-free.

System noise per series follows the "scaled to the signal" rule: its mean is
minus a tenth of the leaf concentration at ``x_a``, half of that series'
noise-free reach, and its standard deviation is a third of the mean's
magnitude.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._rng import point_draws
from .channel import ChannelParams, delay
from .receiver import (
    CSKDemodulator,
    LeafParams,
    NoiseModel,
    ReceiverLocation,
    add_noise,
    leaf_concentration,
    noise_mean,
    snr_db,
)
from .rsk import BlendSpec, RatioWindow, decode_range_from_ratio, simulate_blend

__all__ = [
    "KINDS",
    "DEFAULT_SEED",
    "ConfigError",
    "GridSpec",
    "AnalysisConfig",
    "SweepResult",
    "run_analysis",
    "snr_sweep",
    "reach",
    "demod_distance",
    "level_crossing",
    "list_presets",
    "load_preset",
]

KINDS = (
    "distance",
    "distance_snr",
    "distance_delay",
    "distance_mass",
    "wind",
    "wind_delay",
    "eddy",
    "noise",
    "noise_snr",
    "threshold",
    "rsk",
)
DEFAULT_SEED = 20240611
DEFAULT_FLOOR_FRACTION = 0.002
SNR_LEVELS = (40.0, 30.0, 20.0, 10.0)


class ConfigError(ValueError):
    """Invalid analysis configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class GridSpec:
    """``points`` evenly spaced values ending at ``stop``.

    A sweep that starts at 0 skips the singular origin: its values are
    ``stop * (1..points) / points``.
    """

    start: float
    stop: float
    points: int = 200

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("sweep", "start/stop must be finite")
        if not self.stop > self.start:
            raise ConfigError("sweep", f"stop ({self.stop}) must exceed start ({self.start})")
        if int(self.points) < 1:
            raise ConfigError("sweep.points", "must be >= 1")
        object.__setattr__(self, "points", int(self.points))

    def values(self):
        if self.start == 0:
            return self.stop * np.arange(1, self.points + 1) / self.points
        if self.points == 1:
            return np.array([float(self.stop)])
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class AnalysisConfig:
    kind: str
    sweep: GridSpec
    family: tuple = ()
    u: float = 25.0
    D: float = 0.1
    h: float = 1.0
    M: float = 1.1e-9
    M_B: float = 2.75e-9
    leaf: LeafParams = field(default_factory=LeafParams)
    y_r: float = 0.0
    z_r: float = 1.0
    x_r: float | None = None
    tau_r: float = 0.06  # puff centre reaches 1.5 m at u = 25 m/s
    noise: bool = True
    noise_multiplier: float = 1.0
    threshold_fraction: float = 0.55
    ratio_window: tuple = (2.0, 2.5)
    floor_fraction: float = DEFAULT_FLOOR_FRACTION
    reach_sweep: GridSpec | None = None
    trials: int = 10_000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown analysis {self.kind!r}; expected one of {', '.join(KINDS)}")
        if int(self.trials) < 1:
            raise ConfigError("trials", "must be >= 1")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "family", tuple(float(v) for v in self.family))
        for name in ("u", "D", "M", "M_B", "noise_multiplier"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, f"must be > 0, got {getattr(self, name)}")
        if self.h < 0 or self.z_r < 0:
            raise ConfigError("h" if self.h < 0 else "z_r", "must be >= 0")
        if not self.tau_r > 0:
            raise ConfigError("tau_r", "must be > 0 (use null/inf for unbounded)")
        if not 0 < self.threshold_fraction <= 1:
            raise ConfigError("threshold_fraction", "must be in (0, 1]")
        if not 0 < self.floor_fraction < 1:
            raise ConfigError("floor_fraction", "must be in (0, 1)")
        if any(v <= 0 for v in self.family):
            raise ConfigError("family", "values must be > 0")
        if self.kind in ("threshold",) and any(v > 1 for v in self.family):
            raise ConfigError("family", "threshold fractions must be in (0, 1]")
        if self.kind in ("noise_snr", "wind_delay") and (self.x_r is None or not self.x_r > 0):
            raise ConfigError("x_r", f"{self.kind} needs a positive fixed distance x_r")
        if self.kind in ("distance_mass", "wind", "eddy", "noise", "threshold", "rsk") and not self.family:
            raise ConfigError("family", f"{self.kind} needs a non-empty family of values")
        lo, hi = self.ratio_window
        if not 0 < lo < hi:
            raise ConfigError("ratio_window", "needs 0 < lo < hi")
        if self.kind not in ("wind_delay", "noise_snr") and self.sweep.start < 0:
            raise ConfigError("sweep.start", "distances must be >= 0")

    @property
    def channel(self):
        return ChannelParams(self.u, self.D, self.h)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["family"] = list(self.family)
        d["ratio_window"] = list(self.ratio_window)
        d["tau_r"] = None if math.isinf(self.tau_r) else self.tau_r
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        for required in ("kind", "sweep"):
            if required not in data:
                raise ConfigError(required, "missing")
        data["sweep"] = _grid_from(data["sweep"], "sweep")
        if data.get("reach_sweep") is not None:
            data["reach_sweep"] = _grid_from(data["reach_sweep"], "reach_sweep")
        if "leaf" in data:
            leaf = dict(data["leaf"] or {})
            try:
                data["leaf"] = LeafParams(**leaf)
            except (TypeError, ValueError) as exc:
                raise ConfigError("leaf", str(exc)) from exc
        if "tau_r" in data and data["tau_r"] is None:
            data["tau_r"] = math.inf
        for name in ("family", "ratio_window"):
            if name in data:
                data[name] = tuple(data[name])
        for name in ("u", "D", "h", "M", "M_B", "y_r", "z_r", "tau_r", "noise_multiplier",
                     "threshold_fraction", "floor_fraction"):
            if name in data:
                data[name] = _number(data[name], name)
        if data.get("x_r") is not None:
            data["x_r"] = _number(data["x_r"], "x_r")
        return cls(**data)


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    return float(value)


def _grid_from(spec, name):
    if isinstance(spec, GridSpec):
        return spec
    if not isinstance(spec, dict):
        raise ConfigError(name, "expected an object with start, stop, points")
    missing = {"start", "stop"} - set(spec)
    if missing:
        raise ConfigError(f"{name}.{sorted(missing)[0]}", "missing")
    try:
        return GridSpec(_number(spec["start"], f"{name}.start"), _number(spec["stop"], f"{name}.stop"),
                        int(spec.get("points", 200)))
    except ConfigError as exc:
        # GridSpec reports its own fields under "sweep"
        raise ConfigError(exc.field.replace("sweep", name, 1), str(exc).split(": ", 1)[1]) from None


@dataclass
class SweepResult:
    axis_name: str
    axis: np.ndarray
    series: dict
    metadata: dict

    def __post_init__(self):
        for name, col in self.series.items():
            if len(col) != len(self.axis):
                raise ValueError(f"series {name!r} has {len(col)} values, axis has {len(self.axis)}")

    def to_csv(self, path, delimiter=","):
        """Write ``# metadata {json}`` then ``axis,series...`` rows."""
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write("# metadata " + json.dumps(_jsonable(self.metadata), sort_keys=True) + "\n")
            writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            names = list(self.series)
            writer.writerow([self.axis_name] + names)
            for i, a in enumerate(self.axis):
                writer.writerow([_fmt(a)] + [_fmt(self.series[n][i]) for n in names])
        return path

    def to_gnuplot(self, out_dir, stem):
        """One two-column ``.dat`` file per series."""
        out_dir = Path(out_dir)
        paths = []
        for name, col in self.series.items():
            if not all(isinstance(v, (int, float, np.integer, np.floating)) for v in col):
                continue
            p = out_dir / f"{stem}__{_safe(name)}.dat"
            with p.open("w", encoding="utf-8") as fh:
                fh.write(f"# {self.axis_name} {name}\n")
                for a, v in zip(self.axis, col):
                    fh.write(f"{_fmt(a)} {_fmt(v)}\n")
            paths.append(p)
        return paths


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in name)


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def reach(x, series, floor_fraction=DEFAULT_FLOOR_FRACTION):
    """Largest ``x`` whose value is at least ``floor_fraction`` times the series peak (0 if all zero)."""
    x = np.asarray(x, dtype=float)
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    if not 0 < floor_fraction < 1:
        raise ValueError("floor_fraction must be in (0, 1)")
    peak = float(np.max(series))
    if peak <= 0:
        return 0.0
    idx = np.nonzero(series >= floor_fraction * peak)[0]
    return float(x[idx[-1]])


def demod_distance(x, bits):
    """Last distance of the run of successful demodulations starting at the first grid point."""
    bits = np.asarray(bits)
    fail = np.nonzero(bits == 0)[0]
    if fail.size == 0:
        return float(x[-1])
    return 0.0 if fail[0] == 0 else float(x[fail[0] - 1])


def level_crossing(x, values, level):
    """First downward crossing of ``level``, linearly interpolated; None if never below."""
    values = np.asarray(values, dtype=float)
    below = np.nonzero(values < level)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(x[0])
    x0, x1, v0, v1 = x[i - 1], x[i], values[i - 1], values[i]
    if not math.isfinite(v0):
        return float(x1)
    return float(x0 + (v0 - level) * (x1 - x0) / (v0 - v1))


def _key(kind, index):
    return (zlib.crc32(kind.encode()) & 0x7FFFFFFF, int(index))


class _Series:
    """One parameter set evaluated over the distance sweep."""

    def __init__(self, cfg, *, u=None, D=None, M=None, multiplier=None):
        self.cfg = cfg
        self.chan = ChannelParams(u or cfg.u, D or cfg.D, cfg.h)
        self.M = M or cfg.M
        self.multiplier = multiplier or cfg.noise_multiplier

    def c_l(self, x):
        return np.atleast_1d(leaf_concentration(self.cfg.leaf, self.chan, self.M,
                                                ReceiverLocation(x, self.cfg.y_r, self.cfg.z_r), self.cfg.tau_r))

    def noise(self, reach_grid):
        """Noise model and the ``x_a`` / noise-free reach it was derived from."""
        if not self.cfg.noise:
            return NoiseModel.off(), {"x_a": None, "noise_free_reach": None, "mu": 0.0, "sigma": 0.0}
        r0 = reach(reach_grid, self.c_l(reach_grid), self.cfg.floor_fraction)
        if r0 <= 0:
            raise ConfigError("sweep", "noise-free reach is zero; cannot place x_a")
        x_a = r0 / 2.0
        mu = noise_mean(self.cfg.leaf, self.chan, self.M, x_a, self.cfg.tau_r, self.cfg.y_r, self.cfg.z_r)
        model = NoiseModel.from_mean(mu, self.multiplier)
        return model, {"x_a": x_a, "noise_free_reach": r0, "mu": model.mu, "sigma": model.sigma}


def _monte_carlo(c_l, noise, cfg, key, n_jobs):
    """Noisy samples (clamped) and raw noise terms, each of shape ``(points, trials)``."""
    if noise.is_off:
        samples = np.repeat(c_l[:, None], 1, axis=1)
        return samples, np.zeros_like(samples)
    z = point_draws(cfg.seed, key, c_l.size, cfg.trials, n_jobs)
    m = noise.intensity_multiplier
    residual = m * noise.mu + m * noise.sigma * z
    return add_noise(c_l[:, None], noise, z), residual


def _label(prefix, value):
    return f"{prefix}={value:g}"


def run_analysis(config, n_jobs=1):
    """Run one analysis; the result depends only on ``config`` (not on ``n_jobs``)."""
    if not isinstance(config, AnalysisConfig):
        config = AnalysisConfig.from_dict(config)
    runner = _RUNNERS[config.kind]
    axis_name, axis, series, derived = runner(config, n_jobs)
    meta = {"kind": config.kind, "seed": config.seed, "config": config.to_dict(), "derived": derived}
    return SweepResult(axis_name, np.asarray(axis, dtype=float), series, meta)


def snr_sweep(config, n_jobs=1):
    """SNR (dB) over distance (``distance_snr``) or noise intensity (``noise_snr``)."""
    if config.kind not in ("distance_snr", "noise_snr"):
        raise ConfigError("kind", "snr_sweep needs kind distance_snr or noise_snr")
    return run_analysis(config, n_jobs)


def _snr_from(c_l, residual):
    noise_power = np.mean(residual**2, axis=1)
    signal_power = c_l**2
    out = np.full(c_l.shape, np.inf)
    ok = noise_power > 0
    if np.any(ok):
        out[ok] = snr_db(signal_power[ok], noise_power[ok])
    return out, bool(np.all(ok))


def _run_distance(cfg, n_jobs):
    x = cfg.sweep.values()
    s = _Series(cfg)
    noise, info = s.noise(x if cfg.reach_sweep is None else cfg.reach_sweep.values())
    c_l = s.c_l(x)
    samples, residual = _monte_carlo(c_l, noise, cfg, _key(cfg.kind, 0), n_jobs)
    mean = samples.mean(axis=1)
    series = {"c_l": c_l, "mean_c_ln": mean}
    derived = dict(info)
    if cfg.kind == "distance":
        demod = CSKDemodulator(cfg.threshold_fraction).fit(mean)
        bits = demod.predict(mean)
        series["success_rate"] = (samples >= demod.threshold_).mean(axis=1)
        series["demod"] = bits.astype(np.int64)
        derived.update(threshold=demod.threshold_, max_c_ln=demod.reference_max_,
                       demod_distance=demod_distance(x, bits), reach=reach(x, mean, cfg.floor_fraction))
    else:
        snr, finite = _snr_from(c_l, residual)
        series["snr_db"] = snr
        derived["snr_finite"] = finite
        derived["crossings"] = {f"{lvl:g}dB": level_crossing(x, snr, lvl) for lvl in SNR_LEVELS}
    return "x", x, series, derived


def _run_delay(cfg, n_jobs):
    if cfg.kind == "distance_delay":
        x = cfg.sweep.values()
        chan = cfg.channel
        series = {f"delay_{m}": np.asarray(delay(chan, x, m), dtype=float) for m in ("advective", "diffusive", "mixed")}
        return "x", x, series, {}
    u = cfg.sweep.values()
    if np.any(u <= 0):
        raise ConfigError("sweep", "wind speeds must be > 0")
    d = np.array([delay(ChannelParams(v, cfg.D, cfg.h), cfg.x_r, "advective") for v in u])
    return "u", u, {"delay_advective": d}, {"x_r": cfg.x_r}


def _run_family(cfg, n_jobs):
    x = cfg.sweep.values()
    reach_grid = x if cfg.reach_sweep is None else cfg.reach_sweep.values()
    prefix, kw = {
        "distance_mass": ("M", "M"),
        "wind": ("u", "u"),
        "eddy": ("D", "D"),
        "noise": ("m", "multiplier"),
    }[cfg.kind]
    series, derived = {}, {}
    for i, value in enumerate(cfg.family):
        s = _Series(cfg, **{kw: value})
        if cfg.kind == "noise":
            # the noise mean is fixed by the base series; the multiplier scales it
            base, info = _Series(cfg, multiplier=1.0).noise(reach_grid)
            noise = base.scaled(value)
        else:
            noise, info = s.noise(reach_grid)
        c_l = s.c_l(x)
        samples, _ = _monte_carlo(c_l, noise, cfg, _key(cfg.kind, i), n_jobs)
        mean = samples.mean(axis=1)
        label = _label(prefix, value)
        if cfg.kind == "distance_mass":
            series[f"c_l[{label}]"] = c_l
        series[f"mean_c_ln[{label}]"] = mean
        derived[label] = dict(info, reach=reach(x, mean, cfg.floor_fraction))
    return "x", x, series, derived


def _run_noise_snr(cfg, n_jobs):
    mults = cfg.sweep.values()
    reach_grid = (cfg.reach_sweep or GridSpec(0.0, 2.0 * cfg.x_r, 200)).values()
    s = _Series(cfg, multiplier=1.0)
    base, info = s.noise(reach_grid)
    c_l = s.c_l(np.array([cfg.x_r]))
    z = point_draws(cfg.seed, _key(cfg.kind, 0), 1, cfg.trials, n_jobs)[0]
    snr, mean = [], []
    for m in mults:
        noise = base.scaled(m)
        residual = m * noise.mu + m * noise.sigma * z
        snr.append(_snr_from(c_l, residual[None, :])[0][0])
        mean.append(float(add_noise(c_l[0], noise, z).mean()))
    derived = dict(info, x_r=cfg.x_r, c_l=float(c_l[0]))
    return "noise_multiplier", mults, {"snr_db": np.array(snr), "mean_c_ln": np.array(mean)}, derived


def _run_threshold(cfg, n_jobs):
    x = cfg.sweep.values()
    s = _Series(cfg)
    noise, info = s.noise(x if cfg.reach_sweep is None else cfg.reach_sweep.values())
    c_l = s.c_l(x)
    samples, _ = _monte_carlo(c_l, noise, cfg, _key(cfg.kind, 0), n_jobs)
    mean = samples.mean(axis=1)
    series = {"mean_c_ln": mean}
    derived = dict(info, demod_distance={})
    for f in cfg.family:
        demod = CSKDemodulator(f).fit(mean)
        bits = demod.predict(mean)
        series[f"demod[{f:g}]"] = bits.astype(np.int64)
        derived["demod_distance"][f"{f:g}"] = demod_distance(x, bits)
    return "x", x, series, derived


def _run_rsk(cfg, n_jobs):
    x = cfg.sweep.values()
    leaf = cfg.leaf
    chan = cfg.channel
    window = RatioWindow(*cfg.ratio_window)
    ref = _Series(cfg, M=cfg.M)
    base, info = ref.noise(x if cfg.reach_sweep is None else cfg.reach_sweep.values())
    series, derived = {}, {"noise_base": info, "decode_range": {}}
    for i, n in enumerate(cfg.family):
        blend = BlendSpec(cfg.M, cfg.M_B, 1.0, n)
        res = simulate_blend(blend, leaf, chan, ReceiverLocation(x, cfg.y_r, cfg.z_r), base, cfg.trials, cfg.seed,
                             tau_r=cfg.tau_r, stream=_key(cfg.kind, i)[0] + i, n_jobs=n_jobs)
        label = f"1/{n:g}"
        series[f"mean_c_a[{label}]"] = res.mean_c_a
        series[f"mean_c_b[{label}]"] = res.mean_c_b
        series[f"ratio[{label}]"] = res.ratio
        series[f"verdict[{label}]"] = res.verdicts(window)
        derived["decode_range"][label] = decode_range_from_ratio(x, res.ratio, window.lo)
    return "x", x, series, derived


_RUNNERS = {
    "distance": _run_distance,
    "distance_snr": _run_distance,
    "distance_delay": _run_delay,
    "wind_delay": _run_delay,
    "distance_mass": _run_family,
    "wind": _run_family,
    "eddy": _run_family,
    "noise": _run_family,
    "noise_snr": _run_noise_snr,
    "threshold": _run_threshold,
    "rsk": _run_rsk,
}


def list_presets():
    files = resources.files("plantcomm").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name, **overrides):
    """Load a bundled analysis preset, optionally overriding top-level fields."""
    available = list_presets()
    if name not in available:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(available)}")
    data = json.loads(resources.files("plantcomm").joinpath("presets", f"{name}.json").read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    return AnalysisConfig.from_dict(data)
