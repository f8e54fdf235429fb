"""Derived quantities: Rabi frequency, sidebands, synchronization ratio.

Post-processing only; all inputs are sampled observables or steady-state
grids, so everything here is pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.signal import find_peaks

from .model import CumulantState, ModelError
from .steadystate import SweepResult

__all__ = [
    "AnalysisError",
    "RabiEstimate",
    "SyncReport",
    "purcell_rate",
    "extract_rabi_frequency",
    "sigma_ratio",
    "detect_sidebands",
    "sync_boundary",
]

PEAK_SPACING = "peak_spacing"
SPECTRAL_PEAK = "spectral_peak"


class AnalysisError(RuntimeError):
    pass


@dataclass(frozen=True)
class RabiEstimate:
    """Oscillation frequency estimate with a relative-spread confidence."""

    omega: float  # rad/s
    method: str
    confidence: float  # relative spread of the period estimates

    def __post_init__(self):
        if math.isfinite(self.confidence) and not self.omega > 0.0:
            raise ModelError("finite-confidence estimate requires omega > 0")


def purcell_rate(g: float, n_emitters: float, kappa: float) -> float:
    """Collective cavity-enhanced emission rate g^2 N / kappa (rad/s in, rad/s out)."""
    if kappa <= 0.0:
        raise AnalysisError("purcell_rate requires kappa > 0")
    return g * g * n_emitters / kappa


def _refine_peak(times: np.ndarray, values: np.ndarray, idx: int) -> float:
    """Parabolic vertex through three samples around a local maximum."""
    if idx <= 0 or idx >= len(values) - 1:
        return float(times[idx])
    y0, y1, y2 = values[idx - 1], values[idx], values[idx + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0.0:
        return float(times[idx])
    shift = 0.5 * (y0 - y2) / denom
    dt = times[idx + 1] - times[idx]
    return float(times[idx] + shift * dt)


def extract_rabi_frequency(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float],
    method: str = PEAK_SPACING,
) -> RabiEstimate:
    """Oscillation frequency of one channel inside a time window.

    ``peak_spacing`` averages the spacing of successive maxima;
    ``spectral_peak`` takes the dominant non-zero bin of the detrended,
    Hann-windowed spectrum with parabolic bin interpolation.  The estimate
    is invariant under amplitude rescaling of the input.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (times >= lo) & (times <= hi)
    if int(np.count_nonzero(mask)) < 8:
        raise AnalysisError("window contains too few samples")
    t = times[mask]
    v = values[mask]
    span = float(np.max(v) - np.min(v))
    scale = max(abs(float(np.max(v))), abs(float(np.min(v))), 1.0)
    if span < 1e-12 * scale:
        raise AnalysisError("flat signal: no oscillation to measure")

    if method == PEAK_SPACING:
        peaks, _ = find_peaks(v, prominence=0.05 * span)
        if len(peaks) < 3:
            raise AnalysisError(f"too few extrema in window ({len(peaks)} < 3)")
        peak_times = np.array([_refine_peak(t, v, int(i)) for i in peaks])
        spacings = np.diff(peak_times)
        mean_dt = float(np.mean(spacings))
        confidence = float(np.std(spacings) / mean_dt)
        return RabiEstimate(omega=2.0 * math.pi / mean_dt, method=method, confidence=confidence)

    if method == SPECTRAL_PEAK:
        dt = float(np.mean(np.diff(t)))
        sig = (v - np.mean(v)) * np.hanning(len(v))
        spectrum = np.abs(np.fft.rfft(sig))
        if len(spectrum) < 3:
            raise AnalysisError("window contains too few samples")
        idx = int(np.argmax(spectrum[1:])) + 1
        freqs = np.fft.rfftfreq(len(v), d=dt)
        if spectrum[idx] == 0.0:
            raise AnalysisError("flat signal: no oscillation to measure")
        # parabolic interpolation of the log magnitude around the peak bin
        f_peak = freqs[idx]
        if 1 <= idx < len(spectrum) - 1 and spectrum[idx - 1] > 0 and spectrum[idx + 1] > 0:
            la, lb, lc = np.log(spectrum[idx - 1 : idx + 2])
            denom = la - 2.0 * lb + lc
            if denom != 0.0:
                f_peak = freqs[idx] + 0.5 * (la - lc) / denom * (freqs[1] - freqs[0])
        confidence = float((freqs[1] - freqs[0]) / f_peak) if f_peak > 0 else math.inf
        return RabiEstimate(omega=2.0 * math.pi * float(f_peak), method=method, confidence=confidence)

    raise AnalysisError(f"unknown method {method!r}")


def sigma_ratio(state: CumulantState, k: int, kp: int) -> float | None:
    """|cross coherence| / |same-class coherence of class k|.

    Returns None when the same-class coherence is below 1e-15 (undefined
    ratio, flagged instead of returned).  For k == kp the ratio is 1 by
    construction whenever it is defined.
    """
    same = abs(state.get(("smsp", k)))
    if same <= 1e-15:
        return None
    if k == kp:
        return 1.0
    i, j = (k, kp) if k < kp else (kp, k)
    cross = abs(state.get(("spsm", i, j)))
    return float(cross / same)


def detect_sidebands(
    detunings: np.ndarray,
    times: np.ndarray,
    sz_map: np.ndarray,
    kappa: float,
    threshold: float | None = None,
    window: tuple[float, float] | None = None,
    exclusion_linewidths: float = 5.0,
    relative_fraction: float = 0.05,
    absolute_floor: float = 1e-8,
) -> list[float]:
    """Detunings of late-time excitation peaks outside the cavity core.

    The per-class excitation (1 + <sigma^z>)/2 is averaged over ``window``
    (default: the last 40% of the trace), classes with |detuning| below
    ``exclusion_linewidths * kappa`` are masked out, and strict interior
    local maxima above threshold are reported.  Without an explicit
    threshold it defaults to ``relative_fraction`` of the largest masked
    excitation, floored at ``absolute_floor``.  A symmetric spectrum with
    symmetric dynamics yields a symmetric detection list.
    """
    detunings = np.asarray(detunings, dtype=float)
    times = np.asarray(times, dtype=float)
    sz_map = np.asarray(sz_map, dtype=float)
    if sz_map.shape != (times.size, detunings.size):
        raise AnalysisError("population map shape does not match times x detunings")
    if window is None:
        window = (times[0] + 0.6 * (times[-1] - times[0]), times[-1])
    lo, hi = window
    rows = (times >= lo) & (times <= hi)
    if not np.any(rows):
        raise AnalysisError("empty detection window")
    excitation = 0.5 * (1.0 + sz_map[rows].mean(axis=0))

    outside = np.abs(detunings) >= exclusion_linewidths * kappa
    if not np.any(outside):
        return []
    if threshold is None:
        threshold = max(relative_fraction * float(np.max(excitation[outside])), absolute_floor)

    found: list[float] = []
    # scan each contiguous run outside the exclusion zone; run edges are
    # shoulders of the masked core (or the spectrum edge), not true peaks
    idx = np.flatnonzero(outside)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    for run in runs:
        if run.size < 3:
            continue
        e = excitation[run]
        interior = (e[1:-1] > e[:-2]) & (e[1:-1] > e[2:]) & (e[1:-1] >= threshold)
        for local in np.flatnonzero(interior) + 1:
            found.append(float(detunings[run[local]]))
    return sorted(found)


@dataclass
class SyncReport:
    """Per-pump synchronization boundary against the candidate rates.

    ``boundary`` maps each pump rate to the first splitting where the
    coherence ratio drops below the threshold; None means the boundary was
    not crossed inside the scanned range, and entries are absent when the
    ratio was undefined across the whole row (no pump).
    """

    etas: np.ndarray
    boundary: dict
    threshold: float
    gamma: float
    kappa: float
    gamma_c: float
    sigma: np.ndarray
    deltas: np.ndarray

    def defined_boundaries(self) -> list[tuple[float, float]]:
        return [(eta, d) for eta, d in self.boundary.items() if d is not None]


def sync_boundary(sweep: SweepResult, threshold: float = 0.5) -> SyncReport:
    """Locate the splitting where synchronization breaks, per pump value.

    Scans each pump row in order of increasing splitting and records the
    first grid point with a defined ratio below ``threshold``.  Rows whose
    ratio is undefined everywhere (e.g. eta = 0) are flagged by omission.
    """
    boundary: dict = {}
    for i, eta in enumerate(sweep.etas):
        row = sweep.sigma[i]
        defined = np.isfinite(row)
        if not np.any(defined):
            continue
        crossing = None
        for j in np.flatnonzero(defined):
            if row[j] < threshold:
                crossing = float(sweep.deltas[j])
                break
        boundary[float(eta)] = crossing
    return SyncReport(
        etas=sweep.etas.copy(),
        boundary=boundary,
        threshold=threshold,
        gamma=sweep.gamma,
        kappa=sweep.kappa,
        gamma_c=sweep.gamma_c,
        sigma=sweep.sigma.copy(),
        deltas=sweep.deltas.copy(),
    )
