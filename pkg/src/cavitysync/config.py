"""Run-configuration files: a flat TOML subset with strict validation.

Files are ``key = value`` lines grouped under ``[section]`` headers, with
``#`` comments.  Values are strings, numbers, booleans, or flat lists of
numbers.  Parsing is strict: unknown sections or keys, missing required
keys, type mismatches, and a missing units declaration are hard errors,
each reported with the offending line number.

Every frequency-like quantity in a config is an ordinary frequency
(value/2pi, in Hz); the loader multiplies by 2pi once so the rest of the
package only ever sees angular frequencies.  The file must declare this
explicitly with a root-level ``units = "hz_over_2pi"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

from .integrate import ADAPTIVE, RK4_FIXED, IntegratorConfig
from .model import DrivePulse, PhysicalParams
from .spectra import SpectrumSpec
from .steadystate import ONE_SIDED, SYMMETRIC

TWO_PI = 2.0 * math.pi

MODES = ("transient", "steady", "sweep", "oracle-compare", "analyze")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def parse_toml_subset(text: str):
    """Parse the TOML subset; returns (values, line_numbers) keyed by (section, key)."""
    values: dict = {}
    lines_of: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if not section:
                raise ConfigError("empty section name", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if not key or not rhs:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if (section, key) in values:
            raise ConfigError(f"duplicate key {key!r} in section [{section}]", lineno)
        values[(section, key)] = _parse_value(rhs, lineno)
        lines_of[(section, key)] = lineno
    return values, lines_of


def _strip_comment(rhs: str) -> str:
    out = []
    in_string = False
    for ch in rhs:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out).strip()


def _parse_value(rhs: str, lineno: int):
    rhs = _strip_comment(rhs)
    if not rhs:
        raise ConfigError("empty value", lineno)
    if rhs.startswith('"'):
        if not (rhs.endswith('"') and len(rhs) >= 2):
            raise ConfigError(f"unterminated string {rhs!r}", lineno)
        return rhs[1:-1]
    if rhs in ("true", "false"):
        return rhs == "true"
    if rhs.startswith("["):
        if not rhs.endswith("]"):
            raise ConfigError(f"unterminated list {rhs!r}", lineno)
        body = rhs[1:-1].strip()
        if not body:
            return []
        return [_parse_number(item.strip(), lineno) for item in body.split(",")]
    return _parse_number(rhs, lineno)


def _parse_number(token: str, lineno: int):
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"not a number: {token!r}", lineno) from None


# schema entry: (type or tuple of types, required, default)
NUMBER = (int, float)

_PHYSICAL = {
    "kappa": (NUMBER, True, None),
    "gamma": (NUMBER, True, None),
    "gamma_phi": (NUMBER, False, 0.0),
    "eta": (NUMBER, False, 0.0),
    "delta_c": (NUMBER, False, 0.0),
    "g": (NUMBER, True, None),
}

_SPECTRUM = {
    "kind": (str, True, None),
    "n_classes": (int, True, None),
    "total_emitters": (NUMBER, True, None),
    "center": (NUMBER, False, 0.0),
    "sigma": (NUMBER, False, None),
    "sigma_over_kappa": (NUMBER, False, None),
    "span_sigmas": (NUMBER, False, 2.5),
    "delta_max": (NUMBER, False, None),
    "delta_min": (NUMBER, False, None),
    "floor_one": (bool, False, False),
}

_DRIVE = {
    "amplitude": (NUMBER, True, None),
    "t_on": (NUMBER, False, 0.0),
    "t_off": (NUMBER, True, None),
}

_INTEGRATOR = {
    "rel_tol": (NUMBER, False, 1e-8),
    "abs_tol": (NUMBER, False, 1e-10),
    "max_step": (NUMBER, False, 0.0),
    "initial_step": (NUMBER, False, 0.0),
    "method": (str, False, "adaptive"),
    "t_final": (NUMBER, True, None),
    "n_samples": (int, False, 1000),
}

_ENSEMBLES = {
    "n_per_ensemble": (NUMBER, True, None),
    "splitting": (NUMBER, False, 0.0),
    "convention": (str, False, "symmetric"),
}

_SWEEP = {
    "eta_values": (list, False, None),
    "eta_min": (NUMBER, False, None),
    "eta_max": (NUMBER, False, None),
    "eta_points": (int, False, None),
    "eta_scale": (str, False, "log"),
    "delta_values": (list, False, None),
    "delta_min": (NUMBER, False, None),
    "delta_max": (NUMBER, False, None),
    "delta_points": (int, False, None),
    "ss_tol": (NUMBER, False, 1e-8),
    "t_max": (NUMBER, False, 0.0),
    "rel_tol": (NUMBER, False, 1e-6),
    "abs_tol": (NUMBER, False, 1e-9),
}

_ORACLE = {
    "n_emitters": (int, True, None),
    "fock_cutoff": (int, False, 0),  # 0 = adaptive
    "detuning": (NUMBER, False, 0.0),
    "rel_deviation_limit": (NUMBER, False, 0.0),
}

_ANALYZE = {
    "input_csv": (str, True, None),
    "input_meta": (str, False, ""),
    "window_start": (NUMBER, False, 0.0),
    "window_end": (NUMBER, False, 0.0),
    "sideband_threshold": (NUMBER, False, 0.0),
    "exclusion_linewidths": (NUMBER, False, 5.0),
    "method": (str, False, "peak_spacing"),
}

_OUTPUT = {
    "directory": (str, False, "."),
    "timeseries": (str, False, "timeseries.csv"),
    "meta": (str, False, "meta.json"),
    "sweep_csv": (str, False, "sweep.csv"),
    "report": (str, False, "report.json"),
}

_RUN = {
    "mode": (str, True, None),
    "threads": (int, False, 1),
}

SCHEMAS = {
    "transient": {"run": _RUN, "physical": _PHYSICAL, "spectrum": _SPECTRUM, "drive": _DRIVE,
                  "integrator": _INTEGRATOR, "output": _OUTPUT},
    "steady": {"run": _RUN, "physical": _PHYSICAL, "ensembles": _ENSEMBLES, "sweep": _SWEEP,
               "output": _OUTPUT},
    "sweep": {"run": _RUN, "physical": _PHYSICAL, "ensembles": _ENSEMBLES, "sweep": _SWEEP,
              "output": _OUTPUT},
    "oracle-compare": {"run": _RUN, "physical": _PHYSICAL, "drive": _DRIVE, "oracle": _ORACLE,
                       "integrator": _INTEGRATOR, "output": _OUTPUT},
    "analyze": {"run": _RUN, "physical": _PHYSICAL, "analyze": _ANALYZE, "output": _OUTPUT},
}

# sections whose keys hold ordinary frequencies to be scaled by 2 pi
_FREQUENCY_KEYS = {
    ("physical", "kappa"), ("physical", "gamma"), ("physical", "gamma_phi"),
    ("physical", "eta"), ("physical", "delta_c"), ("physical", "g"),
    ("spectrum", "center"), ("spectrum", "sigma"), ("spectrum", "delta_max"),
    ("spectrum", "delta_min"),
    ("drive", "amplitude"),
    ("ensembles", "splitting"),
    ("sweep", "eta_min"), ("sweep", "eta_max"), ("sweep", "delta_min"),
    ("sweep", "delta_max"),
    ("oracle", "detuning"),
}
_FREQUENCY_LIST_KEYS = {("sweep", "eta_values"), ("sweep", "delta_values")}


@dataclass
class RunConfig:
    """Validated, unit-resolved configuration for one run."""

    mode: str
    threads: int
    path: str
    resolved: dict = field(repr=False)  # (section, key) -> value, rad/s where applicable
    raw: dict = field(repr=False)  # as parsed from the file, before unit scaling

    def get(self, section: str, key: str):
        return self.resolved[(section, key)]

    def section(self, name: str) -> dict:
        return {k: v for (s, k), v in self.resolved.items() if s == name}


def _validate(values: dict, lines_of: dict, mode: str, path: str) -> RunConfig:
    schema = SCHEMAS[mode]
    resolved: dict = {}
    for (section, key), value in values.items():
        if section == "" and key == "units":
            continue
        if section not in schema:
            raise ConfigError(
                f"unknown section [{section}] for mode {mode!r}", lines_of[(section, key)]
            )
        if key not in schema[section]:
            raise ConfigError(
                f"unknown key {key!r} in section [{section}]", lines_of[(section, key)]
            )
        expected, _, _ = schema[section][key]
        if expected is int:
            if isinstance(value, bool) or not isinstance(value, int):
                if isinstance(value, float) and value == int(value):
                    value = int(value)
                else:
                    raise ConfigError(
                        f"key {key!r} must be an integer, got {value!r}",
                        lines_of[(section, key)],
                    )
        elif expected is bool:
            if not isinstance(value, bool):
                raise ConfigError(
                    f"key {key!r} must be true/false, got {value!r}", lines_of[(section, key)]
                )
        elif expected is list:
            if not isinstance(value, list):
                raise ConfigError(
                    f"key {key!r} must be a list, got {value!r}", lines_of[(section, key)]
                )
        elif expected is str:
            if not isinstance(value, str):
                raise ConfigError(
                    f"key {key!r} must be a string, got {value!r}", lines_of[(section, key)]
                )
        else:  # number
            if isinstance(value, bool) or not isinstance(value, NUMBER):
                raise ConfigError(
                    f"key {key!r} must be a number, got {value!r}", lines_of[(section, key)]
                )
        resolved[(section, key)] = value
    for section, keys in schema.items():
        for key, (_, required, default) in keys.items():
            if (section, key) not in resolved:
                if required:
                    raise ConfigError(f"missing required key {key!r} in section [{section}]")
                resolved[(section, key)] = default

    raw = dict(resolved)
    for sk in _FREQUENCY_KEYS:
        if resolved.get(sk) is not None and sk in resolved:
            resolved[sk] = resolved[sk] * TWO_PI
    for sk in _FREQUENCY_LIST_KEYS:
        if resolved.get(sk):
            resolved[sk] = [v * TWO_PI for v in resolved[sk]]

    threads = resolved.get(("run", "threads"), 1)
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return RunConfig(mode=mode, threads=threads, path=path, resolved=resolved, raw=raw)


def parse_config(path, overrides: list[str] | None = None) -> RunConfig:
    """Load, override, validate, and unit-resolve a run configuration."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    values, lines_of = parse_toml_subset(text)

    if ("", "units") not in values:
        raise ConfigError('units declaration missing: add \'units = "hz_over_2pi"\' at the top')
    if values[("", "units")] != "hz_over_2pi":
        raise ConfigError(
            f'unsupported units {values[("", "units")]!r}; this build reads "hz_over_2pi"',
            lines_of[("", "units")],
        )

    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        target, _, rhs = item.partition("=")
        section, _, key = target.strip().partition(".")
        try:
            value = _parse_value(rhs.strip(), 0)
        except ConfigError:
            value = rhs.strip()  # unquoted strings are a CLI convenience
        values[(section, key.strip())] = value
        lines_of[(section, key.strip())] = 0

    mode = values.get(("run", "mode"))
    if mode is None:
        raise ConfigError("missing required key 'mode' in section [run]")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}", lines_of[("run", "mode")])
    return _validate(values, lines_of, mode, str(path))


def physical_params(cfg: RunConfig) -> PhysicalParams:
    return PhysicalParams(
        kappa=cfg.get("physical", "kappa"),
        gamma=cfg.get("physical", "gamma"),
        gamma_phi=cfg.get("physical", "gamma_phi"),
        eta=cfg.get("physical", "eta"),
        delta_c=cfg.get("physical", "delta_c"),
    )


def spectrum_spec(cfg: RunConfig) -> SpectrumSpec:
    kind = cfg.get("spectrum", "kind")
    sigma = cfg.get("spectrum", "sigma")
    if sigma is None and cfg.get("spectrum", "sigma_over_kappa") is not None:
        sigma = cfg.get("spectrum", "sigma_over_kappa") * cfg.get("physical", "kappa")
    return SpectrumSpec(
        kind=kind,
        n_classes=cfg.get("spectrum", "n_classes"),
        total_emitters=int(cfg.get("spectrum", "total_emitters")),
        center=cfg.get("spectrum", "center"),
        sigma=sigma,
        delta_max=cfg.get("spectrum", "delta_max"),
        delta_min=cfg.get("spectrum", "delta_min"),
        span_sigmas=cfg.get("spectrum", "span_sigmas"),
        floor_one=cfg.get("spectrum", "floor_one"),
    )


def drive_pulse(cfg: RunConfig) -> DrivePulse:
    return DrivePulse(
        amplitude=cfg.get("drive", "amplitude"),
        t_on=cfg.get("drive", "t_on"),
        t_off=cfg.get("drive", "t_off"),
    )


def integrator_config(cfg: RunConfig) -> IntegratorConfig:
    method = {"adaptive": ADAPTIVE, "rk4_fixed": RK4_FIXED}.get(cfg.get("integrator", "method"))
    if method is None:
        raise ConfigError(f"unknown integrator method {cfg.get('integrator', 'method')!r}")
    max_step = cfg.get("integrator", "max_step") or math.inf
    initial = cfg.get("integrator", "initial_step") or None
    return IntegratorConfig(
        rel_tol=cfg.get("integrator", "rel_tol"),
        abs_tol=cfg.get("integrator", "abs_tol"),
        max_step=max_step,
        initial_step=initial,
        method=method,
    )


def sweep_axes(cfg: RunConfig):
    """Resolve the (eta, delta) grids of a steady/sweep mode config (rad/s)."""
    import numpy as np

    etas = cfg.get("sweep", "eta_values")
    if etas is None:
        lo, hi, n = (cfg.get("sweep", "eta_min"), cfg.get("sweep", "eta_max"),
                     cfg.get("sweep", "eta_points"))
        if None in (lo, hi, n):
            raise ConfigError("sweep needs eta_values or eta_min/eta_max/eta_points")
        if cfg.get("sweep", "eta_scale") == "log":
            if lo <= 0:
                raise ConfigError("log-scale eta grid needs eta_min > 0")
            etas = list(np.geomspace(lo, hi, n))
        else:
            etas = list(np.linspace(lo, hi, n))
    deltas = cfg.get("sweep", "delta_values")
    if deltas is None:
        lo, hi, n = (cfg.get("sweep", "delta_min"), cfg.get("sweep", "delta_max"),
                     cfg.get("sweep", "delta_points"))
        if None in (lo, hi, n):
            raise ConfigError("sweep needs delta_values or delta_min/delta_max/delta_points")
        deltas = list(np.linspace(lo, hi, n))
    convention = cfg.get("ensembles", "convention")
    if convention not in (SYMMETRIC, ONE_SIDED):
        raise ConfigError(f"unknown detuning convention {convention!r}")
    return etas, deltas
