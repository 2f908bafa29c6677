"""Command-line interface: ``photonstat <subcommand> [options]``.

Exit status: 0 success, 1 invalid input, 2 a fit did not converge (results
are still written), 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import glob as globmod
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .blinking import DEFAULT_THRESHOLD, fit_off_cdf, flid, intensity_histogram, off_cdf, segment
from .core import (
    DEFAULT_BIN_WIDTH_PS,
    DEFAULT_TRACE_PS,
    PhotonStatError,
    bin_intensity,
    read_stream,
    write_stream,
)
from .corr import DEFAULT_BIN_PS, clean_background, correlate, g2_zero, normalize_peaks
from .lifetime import DEFAULT_DECAY_BIN_PS, average_lifetime, decay_histogram, fit_saturation, fit_triexp
from .sim import EmitterModel, expected_g2_zero, load_model, simulate
from .spectra import PeakMetrics, cohort_stats, peak_metrics, read_spectrum_csv

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64

PROFILES = ("x0", "x08", "x1")

# published per-composition observables the repro profiles are tuned to
REPRO_TARGETS = {
    "x0": {"g2_zero": (0.05, 0.02), "m_off": (1.34, 0.1), "tau_c_s": (0.25, 0.3)},
    "x08": {"g2_zero": (0.04, 0.02), "m_off": (1.36, 0.1), "tau_c_s": (0.02, 0.3)},
    "x1": {"g2_zero": (0.013, 0.01), "m_off": (0.83, 0.1), "tau_c_s": (0.15, 0.3)},
}

_UNITS_PS = {"ps": 1, "ns": 10**3, "us": 10**6, "µs": 10**6, "ms": 10**9, "s": 10**12}
_DURATION = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(ps|ns|us|µs|ms|s)?\s*$")


class UsageError(Exception):
    pass


def parse_duration(text: str) -> int:
    """'600s', '10ms', '100ps', '1.5ns' -> integer ps; a bare number is ps."""
    m = _DURATION.match(str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}")
    value = float(m.group(1)) * _UNITS_PS[m.group(2) or "ps"]
    if value != round(value):
        raise argparse.ArgumentTypeError(f"duration {text!r} is not a whole number of ps")
    return int(round(value))


def parse_grid(text: str) -> tuple[int, int]:
    m = re.match(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$", text)
    if not m or min(int(m.group(1)), int(m.group(2))) < 2:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, expected e.g. 128x128")
    return int(m.group(1)), int(m.group(2))


def parse_window(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"bad window {text!r}, expected LO:HI")
    return parse_duration(lo), parse_duration(hi)


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one invocation."""

    command: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    threads: int | None = None
    json_path: Path | None = None
    csv_path: Path | None = None
    quiet: bool = False

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        common = {"command", "seed", "threads", "json", "csv_out", "quiet", "func"}
        params = {k: v for k, v in vars(ns).items() if k not in common}
        threads = ns.threads
        if threads is None and os.environ.get("PHOTONSTAT_THREADS"):
            try:
                threads = int(os.environ["PHOTONSTAT_THREADS"])
            except ValueError:
                raise UsageError("PHOTONSTAT_THREADS must be an integer") from None
        return cls(
            command=ns.command,
            params=params,
            seed=ns.seed,
            threads=threads,
            json_path=Path(ns.json) if ns.json else None,
            csv_path=Path(ns.csv_out) if getattr(ns, "csv_out", None) else None,
            quiet=ns.quiet,
        )


# --- output helpers ----------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


class Reporter:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, line: str = "") -> None:
        if not self.quiet:
            print(line)


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    import numba

    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def profile_path(name: str) -> Path:
    if name not in PROFILES:
        raise UsageError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    return Path(str(resources.files("photonstat") / "profiles" / f"{name}.json"))


# --- subcommands -------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    if p["model"] is not None and p["profile"] is not None:
        raise UsageError("give either --model or --profile")
    if p["profile"] is not None:
        model = load_model(profile_path(p["profile"]))
    elif p["model"] is not None:
        model = load_model(p["model"])
    else:
        model = EmitterModel()
    if cfg.seed is not None:
        model = replace(model, seed=cfg.seed)
    stream = simulate(model, p["duration"])
    write_stream(stream, p["out"])
    summary = {
        "n_photons": len(stream),
        "duration_ps": stream.duration_ps,
        "rep_period_ps": stream.rep_period_ps,
        "seed": model.seed,
        "expected_g2_zero": expected_g2_zero(model),
        "model": model.to_dict(),
    }
    if cfg.json_path:
        write_json(cfg.json_path, summary)
    say(f"simulated {len(stream)} photons over {stream.duration_ps * 1e-12:g} s -> {p['out']}")
    return EXIT_OK


def _g2_pipeline(stream, bin_ps, max_delay_ps, clean, window, reference_ps, threads):
    hist = correlate(stream, bin_width_ps=bin_ps, max_delay_ps=max_delay_ps, threads=threads)
    raw = hist
    if clean:
        hist = clean_background(hist, tau_b_window=window)
    norm = normalize_peaks(hist, reference_delay_ps=reference_ps)
    return raw, norm, g2_zero(norm)


def g2_payload(raw, norm, result) -> dict:
    return {
        "g2_zero": result.g2_zero,
        "antibunched": result.antibunched,
        "result": result.to_dict(),
        "histogram": norm.to_dict(),
        "raw_counts": [int(c) for c in raw.counts],
    }


def cmd_g2(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    stream = read_stream(p["input"])
    raw, norm, res = _g2_pipeline(
        stream, p["bin"], p["max_delay"], p["clean"], p["tau_b"], p["reference_delay"], cfg.threads
    )
    if cfg.json_path:
        write_json(cfg.json_path, g2_payload(raw, norm, res))
    if cfg.csv_path:
        write_csv(cfg.csv_path, ["delay_ps", "raw", "normalized"], zip(norm.centers_ps, raw.counts, norm.counts))
    say(f"g2(0) = {res.g2_zero:.4f} ({'antibunched' if res.antibunched else 'not antibunched'})")
    return EXIT_OK


def decay_payload(hist, fit) -> dict:
    out = {
        "bin_width_ps": hist.bin_width_ps,
        "rep_period_ps": hist.rep_period_ps,
        "normalization": hist.normalization,
        "counts": [float(c) for c in hist.counts],
    }
    if fit is not None:
        out["fit"] = fit.to_dict()
    return out


def cmd_decay(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    stream = read_stream(p["input"])
    hist = decay_histogram(stream, p["bin"], normalize=p["normalize"])
    fit = fit_triexp(hist, weighting=p["weighting"]) if p["fit"] == "triexp" else None
    if cfg.json_path:
        write_json(cfg.json_path, decay_payload(hist, fit))
    if cfg.csv_path:
        write_csv(cfg.csv_path, ["time_ns", "counts"], zip(hist.centers_ns, hist.counts))
    if fit is None:
        say(f"decay histogram: {len(hist.counts)} bins of {hist.bin_width_ps} ps")
        return EXIT_OK
    taus = ", ".join(f"{t:.3f}" for t in fit.lifetimes_ns)
    say(f"lifetimes [ns]: {taus}; t0 = {fit.t0_ns:.3f} ns")
    say(f"average lifetime: {average_lifetime(fit, strict=False):.3f} ns (amplitude weighted)")
    if not fit.converged:
        say("warning: fit did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _read_pairs(path) -> np.ndarray:
    rows = []
    header_seen = False
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if rows or header_seen:
                    raise ValueError(f"{path}: bad row {row!r}") from None
                header_seen = True
    return np.array(rows)


def cmd_satfit(cfg: RunConfig, say: Reporter) -> int:
    fit = fit_saturation(_read_pairs(cfg.params["input"]))
    if cfg.json_path:
        write_json(cfg.json_path, fit.to_dict())
    say(f"A = {fit.A:.6g}, B = {fit.B:.6g}, P_sat = {fit.P_sat:.6g}")
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def blink_analysis(stream, bin_ps, threshold):
    trace = bin_intensity(stream, bin_ps)
    seg = segment(trace, threshold)
    cdf = off_cdf(seg)
    fit = fit_off_cdf(cdf)
    payload = {
        "bin_width_ps": bin_ps,
        "threshold_counts_per_bin": threshold,
        "n_bins": trace.n_bins,
        "n_segments": len(seg),
        "n_off_events": cdf.n_events,
        "fit": fit.to_dict(),
        "off_cdf": {"durations_s": cdf.durations, "probabilities": cdf.probabilities},
        "intensity_histogram": [[k, v] for k, v in intensity_histogram(trace).items()],
    }
    return trace, seg, fit, payload


def _write_trace_csv(path, trace, seg):
    state = seg.state_per_bin()
    t = (trace.start_ps + trace.bin_width_ps * np.arange(trace.n_bins)) * 1e-12
    write_csv(path, ["time_s", "counts", "state"], zip(t, trace.counts, np.where(state, "ON", "OFF")))


def cmd_blink(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    stream = read_stream(p["input"])
    trace, seg, fit, payload = blink_analysis(stream, p["bin"], p["threshold"])
    if cfg.json_path:
        write_json(cfg.json_path, payload)
    if cfg.csv_path:
        _write_trace_csv(cfg.csv_path, trace, seg)
    say(f"{payload['n_off_events']} OFF periods; m_off = {fit.m_off:.3f}, tau_c = {fit.tau_c_s:.4g} s")
    if fit.levy:
        say("m_off < 1: Levy-like OFF statistics")
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def flid_payload(fm) -> dict:
    return {
        "t0_ns": fm.t0_ns,
        "bandwidths": {"intensity": fm.bandwidths[0], "lifetime_ns": fm.bandwidths[1]},
        "n_points": len(fm.intensities),
        "grid_shape": list(fm.density.shape),
        "mass": fm.mass(),
        "modes": [{"intensity": a, "lifetime_ns": b, "density": c} for a, b, c in fm.modes()],
    }


def _write_flid_csv(path, fm):
    write_csv(path, ["intensity", "lifetime_ns", "density"], fm.csv_rows())


def cmd_flid(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    fm = flid(read_stream(p["input"]), p["bin"], p["grid"])
    if cfg.json_path:
        write_json(cfg.json_path, flid_payload(fm))
    if cfg.csv_path:
        _write_flid_csv(cfg.csv_path, fm)
    for a, b, _ in fm.modes()[:3]:
        say(f"mode at {a:.1f} counts/bin, {b:.3f} ns")
    return EXIT_OK


_METHOD_ALIASES = {
    "gaussian": "gaussian_fit",
    "gaussian_fit": "gaussian_fit",
    "half_max": "half_max_interpolation",
    "half_max_interpolation": "half_max_interpolation",
}


def cmd_spectrum(cfg: RunConfig, say: Reporter) -> int:
    pm = peak_metrics(read_spectrum_csv(cfg.params["input"]), _METHOD_ALIASES[cfg.params["method"]])
    if cfg.json_path:
        write_json(cfg.json_path, pm.to_dict())
    say(f"CEW = {pm.cew_nm:.2f} nm, FWHM = {pm.fwhm_nm:.2f} nm")
    return EXIT_OK if pm.converged else EXIT_NOT_CONVERGED


def cmd_cohort(cfg: RunConfig, say: Reporter) -> int:
    paths = sorted(globmod.glob(cfg.params["glob"]))
    if not paths:
        raise ValueError(f"no files match {cfg.params['glob']!r}")
    metrics = []
    for path in paths:
        d = json.loads(Path(path).read_text())
        metrics.append(PeakMetrics(float(d["cew_nm"]), float(d["fwhm_nm"]), d.get("method", "gaussian_fit")))
    stats = cohort_stats(metrics)
    payload = stats.to_dict()
    payload["files"] = [str(Path(p)) for p in paths]
    if cfg.json_path:
        write_json(cfg.json_path, payload)
    if cfg.csv_path:
        write_csv(cfg.csv_path, ["cew_nm", "fwhm_nm"], stats.scatter)
    say(f"n = {stats.n}: CEW {stats.mean_cew_nm:.2f} +/- {stats.std_cew_nm:.2f} nm, "
        f"FWHM {stats.mean_fwhm_nm:.2f} +/- {stats.std_fwhm_nm:.2f} nm")
    return EXIT_OK


def cmd_convert(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    stream = read_stream(p["input"], p["from"])
    write_stream(stream, p["out"], p["to"])
    say(f"{len(stream)} records -> {p['out']}")
    return EXIT_OK


def _row(name, target, tol, measured, relative=False):
    if target is None or measured is None or not math.isfinite(measured):
        ok = None if target is None else False
    else:
        ok = abs(measured - target) <= (tol * abs(target) if relative else tol)
    return {
        "observable": name,
        "target": target,
        "tolerance": tol,
        "relative_tolerance": relative,
        "measured": measured,
        "pass": ok,
    }


def run_repro(model: EmitterModel, profile: str | None, duration_ps: int, out_dir: Path, threads=None) -> dict:
    """simulate -> g2 -> decay -> blinking -> FLID; writes artifacts into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stream = simulate(model, duration_ps)
    write_stream(stream, out_dir / "stream.psph")

    raw, norm, g2 = _g2_pipeline(stream, DEFAULT_BIN_PS, None, False, None, None, threads)
    write_json(out_dir / "g2.json", g2_payload(raw, norm, g2))
    write_csv(out_dir / "g2.csv", ["delay_ps", "raw", "normalized"], zip(norm.centers_ps, raw.counts, norm.counts))

    hist = decay_histogram(stream, DEFAULT_DECAY_BIN_PS)
    dfit = fit_triexp(hist)
    write_json(out_dir / "decay.json", decay_payload(hist, dfit))
    write_csv(out_dir / "decay.csv", ["time_ns", "counts"], zip(hist.centers_ns, hist.counts))

    trace, seg, bfit, bpayload = blink_analysis(stream, DEFAULT_BIN_WIDTH_PS, DEFAULT_THRESHOLD)
    write_json(out_dir / "blink.json", bpayload)
    _write_trace_csv(out_dir / "trace.csv", trace, seg)

    fm = flid(stream)
    write_json(out_dir / "flid.json", flid_payload(fm))
    _write_flid_csv(out_dir / "flid.csv", fm)

    targets = REPRO_TARGETS.get(profile, {})

    def target(name):
        return targets.get(name, (None, None))

    rows = [
        _row("g2_zero", *target("g2_zero"), g2.g2_zero),
        _row("m_off", *target("m_off"), bfit.m_off),
        _row("tau_c_s", *target("tau_c_s"), bfit.tau_c_s, relative=True),
        _row("average_lifetime_ns", None, None, average_lifetime(dfit, strict=False)),
    ]
    summary = {
        "profile": profile,
        "seed": model.seed,
        "duration_ps": duration_ps,
        "n_photons": len(stream),
        "expected_g2_zero": expected_g2_zero(model),
        "levy": bfit.levy,
        "converged": {"decay": dfit.converged, "blink": bfit.converged},
        "observables": rows,
        "decay_lifetimes_ns": list(dfit.lifetimes_ns),
        "flid_modes": flid_payload(fm)["modes"],
        "artifacts": sorted(
            ["stream.psph", "g2.json", "g2.csv", "decay.json", "decay.csv", "blink.json", "trace.csv",
             "flid.json", "flid.csv", "summary.json"]
        ),
    }
    write_json(out_dir / "summary.json", summary)
    return summary


def cmd_repro(cfg: RunConfig, say: Reporter) -> int:
    p = cfg.params
    if p["model"] is not None:
        model, profile = load_model(p["model"]), None
    else:
        profile = p["profile"] or "x0"
        model = load_model(profile_path(profile))
    if cfg.seed is not None:
        model = replace(model, seed=cfg.seed)
    out_dir = Path(p["out_dir"] or f"repro-{profile or 'model'}")
    summary = run_repro(model, profile, p["duration"], out_dir, cfg.threads)
    if cfg.json_path:
        write_json(cfg.json_path, summary)
    say(f"profile {profile or p['model']}: {summary['n_photons']} photons, seed {summary['seed']}")
    say(f"{'observable':<22}{'target':>10}{'measured':>12}  result")
    for r in summary["observables"]:
        verdict = {True: "PASS", False: "FAIL", None: "-"}[r["pass"]]
        tgt = "-" if r["target"] is None else f"{r['target']:g}"
        say(f"{r['observable']:<22}{tgt:>10}{r['measured']:>12.4g}  {verdict}")
    say(f"artifacts in {out_dir}")
    return EXIT_OK if all(summary["converged"].values()) else EXIT_NOT_CONVERGED


# --- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(csv_output: bool = True) -> argparse.ArgumentParser:
    # SUPPRESS keeps a value given before the subcommand from being reset
    parent = _Parser(add_help=False)
    g = parent.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (overrides the model seed)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (env PHOTONSTAT_THREADS)")
    g.add_argument("--json", metavar="PATH", default=argparse.SUPPRESS, help="write machine-readable results")
    if csv_output:
        g.add_argument("--csv", dest="csv_out", metavar="PATH", default=argparse.SUPPRESS, help="write plot-ready CSV")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="no summary on stdout")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="photonstat", description="Photon statistics of single quantum emitters.",
                     parents=[_common()])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    common, common_no_csv = _common(), _common(csv_output=False)
    dur = parse_duration

    s = sub.add_parser("simulate", parents=[common], help="generate a photon stream from an emitter model")
    s.add_argument("--model", help="EmitterModel JSON (defaults apply when omitted)")
    s.add_argument("--profile", choices=PROFILES, help="bundled model instead of --model")
    s.add_argument("--duration", type=dur, default=DEFAULT_TRACE_PS, help="trace length (default 600s)")
    s.add_argument("--out", required=True, help="output stream (.psph or .tsv)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("g2", parents=[common], help="second-order correlation and g2(0)")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--bin", type=dur, default=DEFAULT_BIN_PS, help="histogram bin (default 1ns)")
    s.add_argument("--max-delay", type=dur, default=None, help="default 25 excitation periods")
    s.add_argument("--clean", action="store_true", help="subtract uncorrelated background first")
    s.add_argument("--tau-b", type=parse_window, default=None, metavar="LO:HI", help="background window")
    s.add_argument("--reference-delay", type=dur, default=None, help="default 10 periods")
    s.set_defaults(func=cmd_g2)

    s = sub.add_parser("decay", parents=[common], help="decay histogram and tri-exponential fit")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--bin", type=dur, default=DEFAULT_DECAY_BIN_PS, help="default 100ps")
    s.add_argument("--fit", choices=("triexp", "none"), default="triexp")
    s.add_argument("--normalize", action="store_true", help="divide by the peak bin")
    s.add_argument("--weighting", choices=("poisson", "neyman", "none"), default="poisson",
                   help="poisson: model variance (default); neyman: 1/max(count,1); none: unweighted")
    s.set_defaults(func=cmd_decay)

    s = sub.add_parser("satfit", parents=[common_no_csv], help="saturation curve fit")
    s.add_argument("--csv", "--in", dest="input", required=True, help="power,intensity rows")
    s.set_defaults(func=cmd_satfit)

    s = sub.add_parser("blink", parents=[common], help="ON/OFF segmentation and OFF-time statistics")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--bin", type=dur, default=DEFAULT_BIN_WIDTH_PS, help="default 10ms")
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="counts per bin (default 15)")
    s.set_defaults(func=cmd_blink)

    s = sub.add_parser("flid", parents=[common], help="fluorescence lifetime-intensity distribution")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--bin", type=dur, default=DEFAULT_BIN_WIDTH_PS, help="default 10ms")
    s.add_argument("--grid", type=parse_grid, default=(128, 128), help="default 128x128")
    s.set_defaults(func=cmd_flid)

    s = sub.add_parser("spectrum", parents=[common_no_csv], help="CEW and FWHM of a spectrum")
    s.add_argument("--csv", "--in", dest="input", required=True, help="wavelength_nm,counts rows")
    s.add_argument("--method", choices=sorted(_METHOD_ALIASES), default="gaussian")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("cohort", parents=[common], help="statistics over spectrum metric files")
    s.add_argument("--glob", required=True, help="pattern matching JSON files written by 'spectrum'")
    s.set_defaults(func=cmd_cohort)

    s = sub.add_parser("repro", parents=[common], help="end-to-end pipeline on a bundled profile")
    s.add_argument("--profile", choices=PROFILES, default=None, help="default x0")
    s.add_argument("--model", default=None, help="custom model JSON instead of a profile")
    s.add_argument("--duration", type=dur, default=DEFAULT_TRACE_PS, help="default 600s")
    s.add_argument("--out-dir", default=None, help="default repro-<profile>")
    s.set_defaults(func=cmd_repro)

    s = sub.add_parser("convert", parents=[common], help="convert between .psph and .tsv")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--from", dest="from", choices=("psph", "tsv"), default=None)
    s.add_argument("--to", choices=("psph", "tsv"), default=None)
    s.set_defaults(func=cmd_convert)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a subcommand is required")
        for name, default in (("seed", None), ("threads", None), ("json", None), ("csv_out", None), ("quiet", False)):
            if not hasattr(ns, name):
                setattr(ns, name, default)
        cfg = RunConfig.from_namespace(ns)
        _apply_threads(cfg.threads)
        return ns.func(cfg, Reporter(cfg.quiet))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"photonstat: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PhotonStatError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"photonstat: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
