"""Discretize an inhomogeneous emitter spectrum into frequency classes.

Two deterministic quadratures are provided: a Gaussian profile sampled on
an equally spaced window around its center, and a 1/|detuning| profile on
a symmetric window that excludes zero.  Class populations are integers
obtained by largest-remainder rounding, so the total emitter number is
preserved exactly.  Detunings are constructed as exactly mirrored pairs
and remainder units are granted to both members of a pair at once, which
keeps symmetric spectra palindromic whenever the leftover parity allows.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .model import FrequencyClass

__all__ = ["SpectrumSpec", "SpectrumError", "discretize_gaussian", "discretize_power_law"]

GAUSSIAN = "gaussian"
POWER_LAW = "power_law"


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumSpec:
    """Parameters of the discretized inhomogeneous distribution.

    ``center``/``sigma`` apply to the Gaussian kind, ``delta_max`` (and the
    optional inner cutoff ``delta_min``) to the power-law kind.  All
    frequencies are angular (rad/s).  ``span_sigmas`` is the half-width of
    the sampled Gaussian window in units of sigma.

    ``floor_one`` opts into a guaranteed minimum of one emitter per class:
    classes whose largest-remainder share rounds to zero are raised to one
    and the excess is taken from the most populated classes.  The default
    (strict) behaviour rejects such spans instead.  The floor is intended
    for wide windows where the far wings act as probe classes.
    """

    kind: str
    n_classes: int
    total_emitters: int
    center: float = 0.0
    sigma: float | None = None
    delta_max: float | None = None
    delta_min: float | None = None
    span_sigmas: float = 2.5
    floor_one: bool = False

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, POWER_LAW):
            raise SpectrumError(f"unknown spectrum kind {self.kind!r}")
        if int(self.n_classes) != self.n_classes or self.n_classes < 1:
            raise SpectrumError(f"n_classes must be a positive integer, got {self.n_classes!r}")
        if int(self.total_emitters) != self.total_emitters or self.total_emitters < self.n_classes:
            raise SpectrumError(
                f"total_emitters must be an integer >= n_classes, got {self.total_emitters!r}"
            )
        if self.kind == GAUSSIAN:
            if self.sigma is None or not self.sigma > 0.0:
                raise SpectrumError(f"Gaussian spectrum needs sigma > 0, got {self.sigma!r}")
            if not self.span_sigmas > 0.0:
                raise SpectrumError(f"span_sigmas must be > 0, got {self.span_sigmas!r}")
        else:
            if self.delta_max is None or not self.delta_max > 0.0:
                raise SpectrumError(f"power-law spectrum needs delta_max > 0, got {self.delta_max!r}")
            if self.n_classes % 2 != 0:
                raise SpectrumError("power-law spectrum needs an even number of classes")
            if self.delta_min is not None and not self.delta_min > 0.0:
                raise SpectrumError(f"delta_min must be > 0, got {self.delta_min!r}")


def _mirrored_offsets(n: int, half_width: float) -> np.ndarray:
    """Equally spaced offsets on [-half_width, half_width], exact mirror pairs."""
    x = np.linspace(-half_width, half_width, n)
    return (x - x[::-1]) / 2.0  # bit-exact antisymmetry


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of ``total`` units, symmetry aware.

    Weights are assumed ordered along the detuning axis; mirrored positions
    (i, n-1-i) with bit-equal weights are treated as pairs and granted
    remainder units two at a time so exact symmetry survives rounding.
    A final odd unit, if parity forces one, goes to the lower index of the
    best remaining candidate.
    """
    n = len(weights)
    total_w = float(weights.sum())
    if not total_w > 0.0:
        raise SpectrumError("spectrum weights sum to zero")
    quota = weights * (total / total_w)
    counts = np.floor(quota).astype(np.int64)
    frac = quota - counts
    leftover = int(total - counts.sum())

    symmetric = bool(np.all(weights == weights[::-1]))
    if not symmetric:
        order = sorted(range(n), key=lambda i: (-frac[i], i))
        for i in order[:leftover]:
            counts[i] += 1
        return counts

    # candidates: mirrored pairs (cost 2) and, for odd n, the center (cost 1)
    candidates = []
    for i in range(n // 2):
        candidates.append((frac[i], i, n - 1 - i))
    if n % 2 == 1:
        c = n // 2
        candidates.append((frac[c], c, c))
    # larger fractional part first; ties toward the center of the window
    candidates.sort(key=lambda t: (-t[0], -min(t[1], t[2])))
    for f, i, j in candidates:
        if leftover <= 0:
            break
        cost = 1 if i == j else 2
        if cost <= leftover and f > 0.0:
            counts[i] += 1
            if i != j:
                counts[j] += 1
            leftover -= cost
    if leftover > 0:  # parity leftover; palindromicity breaks by one unit
        for f, i, j in candidates:
            if counts[i] == np.floor(quota[i]):
                counts[i] += leftover
                break
        else:
            counts[0] += leftover
        leftover = 0
    return counts


def _apply_floor(counts: np.ndarray) -> np.ndarray:
    """Raise zero classes to one emitter, borrowing from the largest classes."""
    counts = counts.copy()
    deficit = int(np.count_nonzero(counts == 0))
    counts[counts == 0] = 1
    while deficit > 0:
        top = int(np.argmax(counts))
        if counts[top] <= 1:
            raise SpectrumError("cannot floor class populations: not enough emitters")
        take = min(deficit, int(counts[top] - 1))
        # shave one at a time so mirrored maxima alternate
        counts[top] -= 1
        deficit -= 1
    return counts


def _build_classes(detunings: np.ndarray, counts: np.ndarray, g: float) -> list[FrequencyClass]:
    return [
        FrequencyClass(delta_k=float(d), n_emitters=int(c), g=g)
        for d, c in zip(detunings, counts)
    ]


def discretize_gaussian(spec: SpectrumSpec, g: float) -> list[FrequencyClass]:
    """Equally spaced classes over center +- span_sigmas*sigma, Gaussian weights."""
    if spec.kind != GAUSSIAN:
        raise SpectrumError(f"spec kind is {spec.kind!r}, expected {GAUSSIAN!r}")
    if spec.n_classes == 1:
        offsets = np.zeros(1)
    else:
        offsets = _mirrored_offsets(spec.n_classes, spec.span_sigmas * spec.sigma)
    weights = np.exp(-0.5 * (offsets / spec.sigma) ** 2)
    counts = _allocate(weights, int(spec.total_emitters))
    if spec.floor_one:
        counts = _apply_floor(counts)
    elif np.any(counts == 0):
        raise SpectrumError(
            "rounding produced empty classes; reduce span_sigmas or n_classes "
            "(or enable floor_one for probe wings)"
        )
    assert int(counts.sum()) == int(spec.total_emitters)
    return _build_classes(spec.center + offsets, counts, g)


def discretize_power_law(spec: SpectrumSpec, g: float) -> list[FrequencyClass]:
    """Symmetric classes with populations proportional to 1/|detuning|.

    With the default inner cutoff the positive-side detunings sit at the
    midpoints of n_classes/2 equal bins covering (0, delta_max], so the
    innermost class lies at delta_max/n_classes.  An explicit ``delta_min``
    instead spaces classes evenly from delta_min to delta_max inclusive.
    """
    if spec.kind != POWER_LAW:
        raise SpectrumError(f"spec kind is {spec.kind!r}, expected {POWER_LAW!r}")
    m = spec.n_classes // 2
    if spec.delta_min is None:
        pos = (2.0 * np.arange(1, m + 1) - 1.0) * (spec.delta_max / spec.n_classes)
    else:
        if spec.delta_min >= spec.delta_max:
            raise SpectrumError("delta_min must be < delta_max")
        pos = np.linspace(spec.delta_min, spec.delta_max, m) if m > 1 else np.array([spec.delta_min])
    detunings = np.concatenate([-pos[::-1], pos])
    weights = 1.0 / np.abs(detunings)
    counts = _allocate(weights, int(spec.total_emitters))
    if spec.floor_one:
        counts = _apply_floor(counts)
    elif np.any(counts == 0):
        raise SpectrumError("rounding produced empty classes; reduce n_classes")
    assert int(counts.sum()) == int(spec.total_emitters)
    return _build_classes(spec.center + detunings, counts, g)


def fwhm(sigma: float) -> float:
    """Full width at half maximum of a Gaussian with standard deviation sigma."""
    return 2.0 * math.sqrt(2.0 * math.log(2.0)) * sigma
