"""Command-line entry point: ``synth``, ``fit`` and ``collide``.

Exit codes: 0 success, 2 input or validation error, 3 I/O failure,
4 fit did not converge (the report is still written).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import config as configmod
from .collisions import coherent_fraction, incoherent_center, simulate_spectrum, weight_ratio
from .errors import DegenerateFitError, InvalidParameterError, InvalidWindowError, ModelEvaluationError
from .scan import COLUMNS, ScanTrace, analyze_scan, run_synthetic_scan

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_NOT_CONVERGED = 0, 2, 3, 4

PROVENANCE_PREFIX = "# provenance "
CONFIG_PREFIX = "# config "


class InputError(ValueError):
    """Malformed input data."""


def _fmt(x) -> str:
    return "%.17g" % x


# --- trace table ------------------------------------------------------------


def _provenance_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def format_header(kind, provenance: dict, cfg: configmod.RunConfig | None) -> list[str]:
    lines = [f"# raman_decoherence {kind}"]
    lines += [f"{PROVENANCE_PREFIX}{k} = {v!r}" if isinstance(v, float) else f"{PROVENANCE_PREFIX}{k} = {v}"
              for k, v in provenance.items()]
    if cfg is not None:
        lines += [f"{CONFIG_PREFIX}{line}".rstrip() for line in configmod.dumps(cfg).splitlines()]
    return lines


def format_trace(trace: ScanTrace, cfg: configmod.RunConfig | None = None) -> str:
    lines = format_header("scan trace", trace.provenance, cfg)
    lines.append("\t".join(COLUMNS))
    for row in zip(trace.frequency, trace.mean_counts, trace.g2, trace.g2_sigma):
        lines.append("\t".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> ScanTrace:
    """Read a scan table: ``#`` comment lines, a header row, tab-delimited rows.

    The header names the columns (any order; extra columns are ignored).
    ``# provenance key = value`` lines are restored into the trace provenance;
    external data without them is fitted with unit intensity weights and
    its recorded ``g2_sigma``.
    """
    provenance = {}
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if line.startswith(PROVENANCE_PREFIX) and "=" in line:
                key, _, value = line[len(PROVENANCE_PREFIX):].partition("=")
                provenance[key.strip()] = _provenance_value(value.strip())
            continue
        fields = line.rstrip("\r\n").split("\t")
        if header is None:
            header = [f.strip() for f in fields]
            missing = [c for c in COLUMNS if c not in header]
            if missing:
                raise InputError(f"line {lineno}: missing column(s) {', '.join(missing)} in header")
            continue
        if len(fields) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} tab-separated fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric field in {line.strip()!r}") from None
    if header is None:
        raise InputError("no header row (empty data file)")
    if not rows:
        raise InputError("no data rows")
    data = np.array(rows)
    cols = {c: data[:, header.index(c)] for c in COLUMNS}
    try:
        return ScanTrace(cols["frequency_ghz"], cols["mean_counts"], cols["g2"], cols["g2_sigma"], provenance)
    except InvalidParameterError as exc:
        raise InputError(str(exc)) from None


# --- subcommands ---------------------------------------------------------------


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_synth(cfg: configmod.RunConfig, out) -> int:
    trace = run_synthetic_scan(cfg.scan_config())
    _write(out, format_trace(trace, cfg))
    return EXIT_OK


def cmd_fit(data_path, cfg: configmod.RunConfig, out) -> int:
    with open(data_path, encoding="utf-8") as fh:
        text = fh.read()
    trace = parse_trace(text)
    record = {"data": str(data_path), "provenance": trace.provenance, "config": configmod.dumps(cfg).splitlines()}
    try:
        report = analyze_scan(trace, cfg.analysis_template())
    except (DegenerateFitError, ModelEvaluationError) as exc:
        record.update({"converged": False, "error": str(exc)})
        if isinstance(exc, DegenerateFitError):
            record["null_direction"] = exc.combination
        _write(out, json.dumps(_clean(record), indent=2, sort_keys=True) + "\n")
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    record.update(report.to_record())
    _write(out, json.dumps(_clean(record), indent=2, sort_keys=True) + "\n")
    print(
        f"A = {report.amplitude_A:.6g} +- {report.amplitude_A_sigma:.3g}; "
        f"peak separation = {report.separation:.6g} +- {report.separation_sigma:.3g} GHz"
    )
    if not report.converged:
        print("fit did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def collide_summary(cfg: configmod.RunConfig):
    """Run the trajectory ensemble; return the spectrum and the summary fields."""
    params = cfg.collision_params()
    c = cfg["collisions"]
    spectrum = simulate_spectrum(params, cfg.trajectory_config(), n_groups=c["n_groups"])
    window = c["window_bins"] * spectrum.bin_width
    summary = {
        "coherent_fraction": coherent_fraction(spectrum, window),
        "gamma": params.gamma,
        "gamma_c": params.gamma_c,
        "reference_ratio": params.gamma_c / params.gamma,
    }
    ratio, err = weight_ratio(spectrum, window)
    summary["incoherent_coherent_ratio"] = ratio
    summary["ratio_error"] = err
    if params.gamma_c > 0:
        summary["incoherent_center_rad_s"] = incoherent_center(spectrum, window)
    return spectrum, summary


def cmd_collide(cfg: configmod.RunConfig, out) -> int:
    spectrum, summary = collide_summary(cfg)
    line = "# summary " + " ".join(f"{k}={_fmt(v)}" for k, v in summary.items())
    prov = {"source": "collisions", "seed": cfg["collisions"]["seed"], "n_trajectories": spectrum.n_trajectories}
    lines = format_header("emission spectrum", prov, cfg)
    lines.append(line)
    lines.append("offset_rad_s\tdensity")
    lines += ["\t".join(_fmt(v) for v in row) for row in spectrum.table()]
    _write(out, "\n".join(lines) + "\n")
    print(line[2:])
    return EXIT_OK


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raman-decoherence", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file (defaults apply to missing keys)")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--fit-etalon", choices=("airy", "lorentzian"), help="etalon model used by fits")

    common(sub.add_parser("synth", help="synthetic etalon scan of the Stokes channel"))
    fit_p = sub.add_parser("fit", help="fit a scan table and write a JSON report")
    fit_p.add_argument("data", help="scan table to analyze")
    common(fit_p)
    common(sub.add_parser("collide", help="collision Monte Carlo emission spectrum"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = configmod.load(args.config) if args.config else configmod.defaults()
        cfg = cfg.with_overrides(seed=args.seed, fit_etalon=args.fit_etalon)
        if args.command == "synth":
            return cmd_synth(cfg, args.out)
        if args.command == "fit":
            return cmd_fit(args.data, cfg, args.out)
        return cmd_collide(cfg, args.out)
    except (configmod.ConfigError, InputError, InvalidParameterError, InvalidWindowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
