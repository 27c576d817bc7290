"""Command-line front end: ``plantcomm emit|fit|sweep|rsk|delay|presets``.

Exit codes: 0 success, 1 error (bad input, degenerate data), 2 usage error,
3 outputs written but the fit raised a convergence warning, 4 no message
detected by ``emit``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from . import calibration, experiments
from .channel import ChannelParams, delay
from .transmitter import (
    GeneParams,
    StressProfile,
    extract_message,
    read_trace_csv,
    simulate_emission,
    write_trace_csv,
)

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_WARNING, EXIT_NO_MESSAGE = 0, 1, 2, 3, 4

log = logging.getLogger("plantcomm")


class CliError(Exception):
    """User-facing failure; the message is printed without a traceback."""


def _tool_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _load_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{what}: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{what}: {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise CliError(f"{what}: {path}: expected a JSON object")
    return data


def _gene_from(data, source):
    fields = ("v_max", "k_d", "w", "c")
    extra = set(data) - set(fields) - {"g0"}
    if extra:
        raise CliError(f"{source}: unknown field {sorted(extra)[0]!r}")
    for name in fields:
        if name not in data:
            raise CliError(f"{source}: missing field {name!r}")
    try:
        return GeneParams(*(data[name] for name in fields))
    except (TypeError, ValueError) as exc:
        raise CliError(f"{source}: {exc}") from None


def _stress_from(data, source):
    if "coefficients" not in data:
        raise CliError(f"{source}: missing field 'coefficients'")
    coeffs = data["coefficients"]
    if not isinstance(coeffs, list) or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in coeffs):
        raise CliError(f"{source}: field 'coefficients' must be a list of numbers")
    try:
        return StressProfile(tuple(coeffs))
    except ValueError as exc:
        raise CliError(f"{source}: {exc}") from None


def _write_manifest(out_dir, command, config, outputs, inputs=None, seed=None, **extra):
    manifest = {
        "tool": "plantcomm",
        "version": _tool_version(),
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {k: str(Path(v).resolve()) for k, v in (inputs or {}).items()},
        "outputs": sorted(Path(p).name for p in outputs),
        **extra,
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- emit ---------------------------------------------------------------------


def cmd_emit(args):
    out = _out_dir(args)
    inputs = {}
    if args.trace:
        try:
            trace = read_trace_csv(args.trace)
        except (OSError, ValueError) as exc:
            raise CliError(f"trace: {exc}") from None
        inputs["trace"] = args.trace
        epsilon = args.epsilon
        if epsilon is None:
            raise CliError("--epsilon is required with --trace (no v_max to scale it from)")
        config = {"trace": True}
    else:
        if not (args.stress and args.gene):
            raise CliError("emit needs --stress and --gene config files (or --trace)")
        stress = _stress_from(_load_json(args.stress, "stress"), args.stress)
        gene_data = _load_json(args.gene, "gene")
        params = _gene_from(gene_data, args.gene)
        g0 = args.g0 if args.g0 is not None else float(gene_data.get("g0", 0.0))
        inputs.update(stress=args.stress, gene=args.gene)
        try:
            trace = simulate_emission(params, stress, args.t0, args.t1, args.dt, g0)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        epsilon = args.epsilon if args.epsilon is not None else 0.01 * params.v_max
        config = {
            "stress": {"coefficients": list(stress.coefficients)},
            "gene": {"v_max": params.v_max, "k_d": params.k_d, "w": params.w, "c": params.c},
            "g0": g0,
            "t0": args.t0,
            "t1": args.t1,
            "dt": args.dt,
        }
    config.update(constitutive_rate=args.constitutive, epsilon=epsilon)
    trace_path = write_trace_csv(trace, out / "emission.csv")
    msg = extract_message(trace, args.constitutive, epsilon)
    summary = {} if msg is None else msg.as_dict()
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(out, "emit", config, [trace_path, summary_path], inputs)
    if msg is None:
        print("no message: emission never left the constitutive band")
        return EXIT_NO_MESSAGE
    print(f"M={msg.mass:.6g} tau_b={msg.tau_b:.6g} tau_e={msg.tau_e:.6g}")
    return EXIT_OK


# -- fit ----------------------------------------------------------------------


def _parse_degree(text):
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"degree must be an integer or 'auto', got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("degree must be >= 0")
    return value


def _parse_vmax(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"v-max must be a number or 'auto', got {text!r}") from None


def cmd_fit(args):
    out = _out_dir(args)
    if args.target is not None and args.target not in calibration.REFERENCE_R2:
        raise CliError(f"unknown target {args.target!r}; known: {', '.join(calibration.REFERENCE_R2)}")
    inputs = {"emission": args.emission}
    try:
        emission = calibration.read_series_csv(args.emission, args.value_column)
        if args.stress_config:
            stress = _stress_from(_load_json(args.stress_config, "stress"), args.stress_config)
            inputs["stress_config"] = args.stress_config
        elif args.stress:
            series = calibration.read_series_csv(args.stress, args.value_column)
            degree = calibration.suggest_degree(series) if args.degree == "auto" else args.degree
            stress = calibration.fit_polynomial(series, degree)
            inputs["stress"] = args.stress
        else:
            raise CliError("fit needs --stress (CSV) or --stress-config (JSON)")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", calibration.ConvergenceWarning)
            report = calibration.fit_gene_params(
                emission, stress, args.v_max, g0=args.g0, n_starts=args.n_starts, max_evals=args.max_evals
            )
    except (ValueError, OSError) as exc:
        raise CliError(str(exc)) from None
    paths = calibration.write_fit_report(report, out, emission, args.target)
    config = {"v_max": args.v_max, "g0": args.g0, "degree": args.degree, "n_starts": args.n_starts,
              "max_evals": args.max_evals, "target": args.target}
    _write_manifest(out, "fit", config, list(paths.values()), inputs)
    line = f"r2={report.r2:.4f}"
    if args.target is not None:
        line += f" (reference {calibration.REFERENCE_R2[args.target]:.4f} for {args.target})"
    print(line)
    warned = [w for w in caught if issubclass(w.category, calibration.ConvergenceWarning)]
    for w in warned:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_WARNING if warned or report.warning else EXIT_OK


# -- sweep / rsk --------------------------------------------------------------


def _parse_ratio(text):
    """``1/15`` or ``15`` -> 15.0 (the B-noise multiplier)."""
    body = text.split("/", 1)
    try:
        if len(body) == 2:
            num, den = float(body[0]), float(body[1])
            if num != 1:
                raise ValueError
            value = den
        else:
            value = 1.0 / float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"noise ratio must look like 1/n, got {text!r}") from None
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"noise ratio must be positive, got {text!r}")
    return value


def _resolve_config(args):
    if getattr(args, "from_manifest", None):
        manifest = _load_json(args.from_manifest, "manifest")
        if manifest.get("command") not in ("sweep", "rsk"):
            raise CliError(f"{args.from_manifest}: not a sweep manifest")
        try:
            return experiments.AnalysisConfig.from_dict(manifest["config"]), manifest.get("format", "csv")
        except experiments.ConfigError as exc:
            raise CliError(f"{args.from_manifest}: config.{exc}") from None
    target = args.analysis
    if target is None:
        raise CliError("sweep needs a preset name or config path (or --from-manifest)")
    try:
        if target in experiments.list_presets():
            config = experiments.load_preset(target)
        elif target.endswith(".json") or Path(target).is_file():
            config = experiments.AnalysisConfig.from_dict(_load_json(target, "config"))
        else:
            raise CliError(f"unknown preset {target!r}; available: {', '.join(experiments.list_presets())}")
    except experiments.ConfigError as exc:
        raise CliError(f"{target}: {exc}") from None
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.noise_ratio is not None:
        if config.kind != "rsk":
            raise CliError("--noise-ratio only applies to rsk analyses")
        changes["family"] = (args.noise_ratio,)
    try:
        config = config.replace(**changes) if changes else config
    except experiments.ConfigError as exc:
        raise CliError(str(exc)) from None
    return config, args.format


def cmd_sweep(args):
    config, fmt = _resolve_config(args)
    out = _out_dir(args)
    result = experiments.run_analysis(config, n_jobs=args.n_jobs)
    delimiter = "\t" if fmt == "tsv" else ","
    data_path = result.to_csv(out / f"{config.kind}.{fmt}", delimiter=delimiter)
    outputs = [data_path]
    if args.gnuplot:
        outputs += result.to_gnuplot(out, config.kind)
    _write_manifest(out, args.command, config.to_dict(), outputs, seed=config.seed, format=fmt)
    print(f"wrote {data_path}")
    derived = result.metadata["derived"]
    if config.kind == "rsk":
        for label, rng in derived["decode_range"].items():
            print(f"noise ratio {label}: decode range {rng:.4g} m")
    elif "demod_distance" in derived:
        print(f"demodulation distance: {derived['demod_distance']}")
    return EXIT_OK


def cmd_rsk(args):
    if args.analysis is None and not args.from_manifest:
        args.analysis = "rsk"
    return cmd_sweep(args)


# -- delay / presets ----------------------------------------------------------


def cmd_delay(args):
    out = _out_dir(args)
    try:
        chan = ChannelParams(args.u, args.D)
        values = {mode: delay(chan, args.x_r, mode) for mode in ("advective", "diffusive", "mixed")}
    except ValueError as exc:
        raise CliError(str(exc)) from None
    path = out / "delay.json"
    config = {"x_r": args.x_r, "u": args.u, "D": args.D}
    path.write_text(json.dumps({**config, "delay_s": values}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(out, "delay", config, [path])
    for mode, v in values.items():
        print(f"{mode}: {v:.6g} s")
    return EXIT_OK


def cmd_presets(args):
    if args.name is None:
        for name in experiments.list_presets():
            print(name)
        return EXIT_OK
    try:
        config = experiments.load_preset(args.name)
    except KeyError as exc:
        raise CliError(exc.args[0]) from None
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (created if missing)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="plantcomm", description="Plant BVOC communication simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    emit = sub.add_parser("emit", parents=[common], help="simulate emission and extract the message")
    emit.add_argument("--stress", help="stress JSON: {\"coefficients\": [a0, a1, ...]}")
    emit.add_argument("--gene", help="gene JSON: {\"v_max\", \"k_d\", \"w\", \"c\"}")
    emit.add_argument("--trace", help="existing time,g,rate CSV instead of simulating")
    emit.add_argument("--t0", type=float, default=0.0)
    emit.add_argument("--t1", type=float, default=24.0)
    emit.add_argument("--dt", type=float, default=0.01)
    emit.add_argument("--g0", type=float, default=None)
    emit.add_argument("--constitutive", type=float, default=0.0, help="constitutive emission rate")
    emit.add_argument("--epsilon", type=float, default=None, help="band half-width (default 0.01 v_max)")
    emit.set_defaults(func=cmd_emit)

    fit = sub.add_parser("fit", parents=[common], help="fit the emission model to measured series")
    fit.add_argument("emission", help="time,value CSV of emission rates")
    fit.add_argument("--stress", help="time,value CSV of the stress signal")
    fit.add_argument("--stress-config", help="stress JSON with fixed coefficients")
    fit.add_argument("--degree", type=_parse_degree, default="auto")
    fit.add_argument("--value-column", default="value")
    fit.add_argument("--v-max", type=_parse_vmax, default="auto")
    fit.add_argument("--g0", type=float, default=0.0)
    fit.add_argument("--n-starts", type=int, default=4)
    fit.add_argument("--max-evals", type=int, default=2000)
    fit.add_argument("--target", help=f"reference profile: {', '.join(calibration.REFERENCE_R2)}")
    fit.set_defaults(func=cmd_fit)

    for name, func, help_text in (
        ("sweep", cmd_sweep, "run an analysis preset or config file"),
        ("rsk", cmd_rsk, "ratio-shift-keying analysis (preset 'rsk' by default)"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("analysis", nargs="?", help="preset name or path to a JSON config")
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {experiments.DEFAULT_SEED})")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--format", choices=("csv", "tsv"), default="csv")
        p.add_argument("--n-jobs", type=int, default=1)
        p.add_argument("--gnuplot", action="store_true", help="also write two-column .dat files")
        p.add_argument("--noise-ratio", type=_parse_ratio, default=None, help="rsk only, e.g. 1/15")
        p.add_argument("--from-manifest", help="replay the config recorded in a manifest.json")
        p.set_defaults(func=func)

    d = sub.add_parser("delay", parents=[common], help="propagation delays at one distance")
    d.add_argument("--x-r", type=float, required=True)
    d.add_argument("--u", type=float, default=25.0)
    d.add_argument("--D", type=float, default=0.1)
    d.set_defaults(func=cmd_delay)

    pr = sub.add_parser("presets", help="list presets or show one")
    pr.add_argument("name", nargs="?")
    pr.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (experiments.ConfigError, calibration.DegenerateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
