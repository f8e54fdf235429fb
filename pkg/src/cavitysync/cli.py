"""Command-line entry points: transient, steady, sweep, oracle-compare, analyze.

Outputs are plain CSV and JSON files written atomically (a ``.partial``
file is renamed into place on success, so interrupted runs never leave a
half-written result under the final name).  Exit codes: 0 success, 1
configuration/validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import detect_sidebands, extract_rabi_frequency, sync_boundary
from .config import (
    ConfigError,
    RunConfig,
    drive_pulse,
    integrator_config,
    parse_config,
    physical_params,
    spectrum_spec,
    sweep_axes,
)
from .eom import ModelSystem, collective_purcell_rate
from .integrate import IntegrationError, IntegratorConfig, integrate
from .model import DrivePulse, ModelError, ground_state
from .oracle import (
    OracleError,
    SmallSystemSpec,
    choose_fock_cutoff,
    compare_channels,
    evolve_exact,
    ground_rho,
)
from .spectra import GAUSSIAN, SpectrumError, discretize_gaussian, discretize_power_law
from .steadystate import find_steady_state, sweep_grid, write_sweep_csv

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

TWO_PI = 2.0 * math.pi


def _version_string() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if described.returncode == 0:
            return f"cavitysync {__version__} ({described.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"cavitysync {__version__}"


def _atomic_write(path: Path, text: str) -> None:
    partial = path.with_suffix(path.suffix + ".partial")
    partial.write_text(text, encoding="utf-8")
    partial.replace(path)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_timeseries_csv(path: Path, series) -> list[str]:
    k = series.sz.shape[1]
    columns = ["t", "n_photons", "a_re", "a_im"]
    columns += [f"sz_{i:03d}" for i in range(k)]
    columns += [f"coh_re_{i:03d}" for i in range(k)] + [f"coh_im_{i:03d}" for i in range(k)]
    rows = [",".join(columns)]
    for s in range(series.times.size):
        cells = [
            _fmt(series.times[s]),
            _fmt(series.n_photons[s]),
            _fmt(series.a[s].real),
            _fmt(series.a[s].imag),
        ]
        cells += [_fmt(v) for v in series.sz[s]]
        cells += [_fmt(v) for v in series.coherence[s].real]
        cells += [_fmt(v) for v in series.coherence[s].imag]
        rows.append(",".join(cells))
    _atomic_write(path, "\n".join(rows) + "\n")
    return columns


def _meta_payload(cfg: RunConfig, extra: dict, overrides: list[str], wall: float) -> dict:
    raw = {f"{section}.{key}": value for (section, key), value in cfg.raw.items()}
    return {
        "version": _version_string(),
        "mode": cfg.mode,
        "config_path": cfg.path,
        "units": "hz_over_2pi",
        "parameters": raw,
        "overrides": overrides,
        "threads": cfg.threads,
        "wall_time_s": wall,
        **extra,
    }


def _build_classes(cfg: RunConfig):
    spec = spectrum_spec(cfg)
    g = cfg.get("physical", "g")
    if spec.kind == GAUSSIAN:
        return discretize_gaussian(spec, g)
    return discretize_power_law(spec, g)


def run_transient(cfg: RunConfig, overrides: list[str]) -> int:
    t_start = time.time()
    out_dir = Path(cfg.get("output", "directory"))
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = _build_classes(cfg)
    system = ModelSystem.build(physical_params(cfg), classes, drive_pulse(cfg))
    t_final = cfg.get("integrator", "t_final")
    grid = np.linspace(0.0, t_final, cfg.get("integrator", "n_samples"))[1:]
    series, final = integrate(
        system, ground_state(system.layout), (0.0, t_final), grid, integrator_config(cfg)
    )
    csv_path = out_dir / cfg.get("output", "timeseries")
    columns = _write_timeseries_csv(csv_path, series)
    meta = _meta_payload(cfg, {
        "columns": columns,
        "reference_class": series.ref_class,
        "class_detunings_hz": [d / TWO_PI for d in series.detunings],
        "class_populations": [c.n_emitters for c in classes],
        "collective_purcell_rate_hz": collective_purcell_rate(system) / TWO_PI,
        "files": {"timeseries": csv_path.name},
    }, overrides, time.time() - t_start)
    _atomic_write(out_dir / cfg.get("output", "meta"), json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def _run_sweep_common(cfg: RunConfig, overrides: list[str]) -> int:
    t_start = time.time()
    out_dir = Path(cfg.get("output", "directory"))
    out_dir.mkdir(parents=True, exist_ok=True)
    etas, deltas = sweep_axes(cfg)
    if cfg.mode == "steady":
        etas = [cfg.get("physical", "eta")]
        deltas = [cfg.get("ensembles", "splitting")]
    base = physical_params(cfg)
    t_max = cfg.get("sweep", "t_max") or None
    result = sweep_grid(
        base,
        int(cfg.get("ensembles", "n_per_ensemble")),
        cfg.get("physical", "g"),
        etas,
        deltas,
        convention=cfg.get("ensembles", "convention"),
        ss_tol=cfg.get("sweep", "ss_tol"),
        t_max=t_max,
        config=IntegratorConfig(
            rel_tol=cfg.get("sweep", "rel_tol"), abs_tol=cfg.get("sweep", "abs_tol")
        ),
        threads=cfg.threads,
    )
    csv_path = out_dir / cfg.get("output", "sweep_csv")
    partial = csv_path.with_suffix(csv_path.suffix + ".partial")
    write_sweep_csv(result, partial)
    partial.replace(csv_path)
    report = sync_boundary(result)
    meta = _meta_payload(cfg, {
        "gamma_c_hz": result.gamma_c / TWO_PI,
        "boundaries_hz": {
            f"{eta / TWO_PI:.6g}": (None if d is None else d / TWO_PI)
            for eta, d in report.boundary.items()
        },
        "files": {"sweep": csv_path.name},
    }, overrides, time.time() - t_start)
    _atomic_write(out_dir / cfg.get("output", "meta"), json.dumps(meta, indent=2) + "\n")
    if cfg.mode == "steady" and not bool(result.converged[0, 0]):
        print("warning: steady state did not converge within t_max", file=sys.stderr)
    return EXIT_OK


def run_oracle_compare(cfg: RunConfig, overrides: list[str]) -> int:
    t_start = time.time()
    out_dir = Path(cfg.get("output", "directory"))
    out_dir.mkdir(parents=True, exist_ok=True)
    params = physical_params(cfg)
    drive = drive_pulse(cfg)
    n_emitters = cfg.get("oracle", "n_emitters")
    detuning = cfg.get("oracle", "detuning")
    g = cfg.get("physical", "g")
    emitters = [(detuning, g)] * n_emitters
    t_final = cfg.get("integrator", "t_final")
    grid = np.linspace(0.0, t_final, cfg.get("integrator", "n_samples"))[1:]

    cutoff = cfg.get("oracle", "fock_cutoff")
    spec = SmallSystemSpec(max(cutoff, 2), tuple(emitters), params, drive)
    if cutoff == 0:
        cutoff, exact = choose_fock_cutoff(spec, ground_rho, (0.0, t_final), grid)
    else:
        exact = evolve_exact(spec, ground_rho(spec), (0.0, t_final), grid)

    from .model import FrequencyClass

    system = ModelSystem.build(params, [FrequencyClass(detuning, n_emitters, g)], drive)
    series, _ = integrate(
        system, ground_state(system.layout), (0.0, t_final), grid, integrator_config(cfg)
    )
    exact_channels = {
        "n_photons": exact.n_photons,
        "sz": exact.moments[("sz", 0)].real,
    }
    approx_channels = {"n_photons": series.n_photons, "sz": series.sz[:, 0]}
    report = compare_channels(series.times, exact_channels, approx_channels)
    payload = _meta_payload(cfg, {
        "fock_cutoff": cutoff,
        "channels": report,
        "peak_exact_photons": float(np.max(exact.n_photons)),
    }, overrides, time.time() - t_start)
    _atomic_write(out_dir / cfg.get("output", "report"), json.dumps(payload, indent=2) + "\n")
    limit = cfg.get("oracle", "rel_deviation_limit")
    if limit:
        worst = max(entry["max_relative_deviation"] for entry in report.values())
        if worst > limit:
            print(f"oracle deviation {worst:.4g} exceeds limit {limit:.4g}", file=sys.stderr)
            return EXIT_NUMERICAL
    return EXIT_OK


def _read_timeseries_csv(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def run_analyze(cfg: RunConfig, overrides: list[str]) -> int:
    t_start = time.time()
    out_dir = Path(cfg.get("output", "directory"))
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(cfg.get("analyze", "input_csv"))
    header, data = _read_timeseries_csv(csv_path)
    meta_path = cfg.get("analyze", "input_meta") or str(csv_path.with_name("meta.json"))
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    detunings = TWO_PI * np.asarray(meta["class_detunings_hz"], dtype=float)
    ref = int(meta["reference_class"])

    times = data[:, header.index("t")]
    n_photons = data[:, header.index("n_photons")]
    sz_cols = [i for i, name in enumerate(header) if name.startswith("sz_")]
    sz = data[:, sz_cols]

    kappa = cfg.get("physical", "kappa")
    t_off = meta["parameters"].get("drive.t_off", 0.0)
    lo = cfg.get("analyze", "window_start") or t_off
    hi = cfg.get("analyze", "window_end") or times[-1]
    method = cfg.get("analyze", "method")

    result: dict = {}
    try:
        est = extract_rabi_frequency(times, sz[:, ref], (lo, hi), method=method)
        result["rabi"] = {
            "omega_hz": est.omega / TWO_PI,
            "method": est.method,
            "confidence": est.confidence,
        }
    except Exception as err:  # flat or too few extrema: report, not fail
        result["rabi"] = {"error": str(err)}
    try:
        est_n = extract_rabi_frequency(times, n_photons, (lo, hi), method=method)
        result["photon_oscillation"] = {
            "omega_hz": est_n.omega / TWO_PI,
            "confidence": est_n.confidence,
        }
    except Exception as err:
        result["photon_oscillation"] = {"error": str(err)}
    threshold = cfg.get("analyze", "sideband_threshold") or None
    sidebands = detect_sidebands(
        detunings, times, sz, kappa,
        threshold=threshold,
        window=(lo + 0.5 * (hi - lo), hi),
        exclusion_linewidths=cfg.get("analyze", "exclusion_linewidths"),
    )
    result["sidebands_hz"] = [d / TWO_PI for d in sidebands]

    payload = _meta_payload(cfg, {"analysis": result, "input": str(csv_path)},
                            overrides, time.time() - t_start)
    _atomic_write(out_dir / cfg.get("output", "report"), json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


_RUNNERS = {
    "transient": run_transient,
    "steady": _run_sweep_common,
    "sweep": _run_sweep_common,
    "oracle-compare": run_oracle_compare,
    "analyze": run_analyze,
}


def run(cfg: RunConfig, overrides: list[str] | None = None) -> int:
    """Execute a parsed configuration; returns the process exit code."""
    return _RUNNERS[cfg.mode](cfg, overrides or [])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cavitysync",
        description="Mean-field simulator for broadened emitter ensembles in a cavity",
    )
    parser.add_argument("--version", action="version", version=_version_string())
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in _RUNNERS:
        p = sub.add_parser(mode, help=f"run a {mode} configuration")
        p.add_argument("config", help="path to the TOML-subset run configuration")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="SECTION.KEY=VALUE", help="override a config key (last one wins)",
        )
        p.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
    args = parser.parse_args(argv)

    overrides = list(args.overrides)
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    try:
        cfg = parse_config(args.config, overrides=overrides)
        if cfg.mode != args.command:
            raise ConfigError(
                f"config declares mode {cfg.mode!r} but subcommand is {args.command!r}"
            )
    except (ConfigError, OSError, ModelError, SpectrumError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return run(cfg, overrides)
    except (ConfigError, ModelError, SpectrumError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrationError, OracleError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
