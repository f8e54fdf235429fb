import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavitysync import SpectrumError, SpectrumSpec, discretize_gaussian, discretize_power_law
from cavitysync.spectra import fwhm

from conftest import hz


def test_fwhm_matches_quoted_inhomogeneous_linewidth():
    # sigma = 10 kappa with kappa/2pi = 160 kHz -> FWHM/2pi close to 3.75 MHz
    sigma = 10 * hz(160e3)
    width_hz = fwhm(sigma) / (2 * math.pi)
    assert width_hz == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 1.6e6)
    assert abs(width_hz - 3.75e6) / 3.75e6 < 0.01


def test_gaussian_hand_computed_example():
    # k=5, N=100, span 2 sigma: densities exp(0), exp(-1/2), exp(-2) at
    # offsets {0, 1, 2} sigma; quotas {40.262, 24.420, 5.449}; two leftover
    # units go to the edge pair (largest fractional part 0.449)
    spec = SpectrumSpec(kind="gaussian", n_classes=5, total_emitters=100, sigma=1.0, span_sigmas=2.0)
    classes = discretize_gaussian(spec, g=1.0)
    counts = [c.n_emitters for c in classes]
    assert counts == [6, 24, 40, 24, 6]
    assert sum(counts) == 100
    deltas = [c.delta_k for c in classes]
    assert deltas == pytest.approx([-2.0, -1.0, 0.0, 1.0, 2.0])


def test_gaussian_symmetric_palindrome_and_peak():
    spec = SpectrumSpec(
        kind="gaussian", n_classes=21, total_emitters=10**6, sigma=hz(1.6e6),
        center=hz(3e5), span_sigmas=2.5,
    )
    classes = discretize_gaussian(spec, g=hz(1.6e3))
    counts = [c.n_emitters for c in classes]
    assert counts == counts[::-1]
    assert int(np.argmax(counts)) == len(counts) // 2
    assert sum(counts) == 10**6
    # monotone with distance from the center
    half = counts[len(counts) // 2 :]
    assert all(a >= b for a, b in zip(half, half[1:]))


def test_gaussian_rejects_empty_classes():
    spec = SpectrumSpec(kind="gaussian", n_classes=41, total_emitters=50, sigma=1.0, span_sigmas=6.0)
    with pytest.raises(SpectrumError):
        discretize_gaussian(spec, g=1.0)


def test_gaussian_floor_one_keeps_total_and_minimum():
    spec = SpectrumSpec(
        kind="gaussian", n_classes=41, total_emitters=10**6, sigma=1.0,
        span_sigmas=10.0, floor_one=True,
    )
    classes = discretize_gaussian(spec, g=1.0)
    counts = np.array([c.n_emitters for c in classes])
    assert counts.min() >= 1
    assert counts.sum() == 10**6
    assert counts[0] == 1 and counts[-1] == 1  # wings are probe classes


def test_gaussian_determinism():
    spec = SpectrumSpec(kind="gaussian", n_classes=33, total_emitters=12345, sigma=2.0, span_sigmas=3.0)
    a = discretize_gaussian(spec, g=0.5)
    b = discretize_gaussian(spec, g=0.5)
    assert a == b


def test_power_law_worked_example():
    # 4 classes at |delta| in {25, 75} MHz for delta_max = 100 MHz:
    # weights 1/25 and 1/75 -> quotas 37.5 / 12.5, ties granted inward
    spec = SpectrumSpec(kind="power_law", n_classes=4, total_emitters=100, delta_max=hz(100e6))
    classes = discretize_power_law(spec, g=1.0)
    by_delta = {round(c.delta_k / hz(1e6)): c.n_emitters for c in classes}
    assert by_delta == {-75: 12, -25: 38, 25: 38, 75: 12}


def test_power_law_two_classes_split_evenly():
    spec = SpectrumSpec(kind="power_law", n_classes=2, total_emitters=101, delta_max=1.0)
    classes = discretize_power_law(spec, g=1.0)
    counts = sorted(c.n_emitters for c in classes)
    assert sum(counts) == 101
    assert counts in ([50, 51],)


def test_power_law_monotone_and_symmetric():
    spec = SpectrumSpec(kind="power_law", n_classes=40, total_emitters=10**8, delta_max=hz(0.1e9))
    classes = discretize_power_law(spec, g=1.0)
    counts = [c.n_emitters for c in classes]
    assert counts == counts[::-1]
    assert sum(counts) == 10**8
    pos = counts[len(counts) // 2 :]
    assert all(a >= b for a, b in zip(pos, pos[1:]))
    # default inner cutoff delta_max / k
    deltas = sorted(c.delta_k for c in classes)
    assert min(abs(d) for d in deltas) == pytest.approx(hz(0.1e9) / 40)


def test_power_law_rejects_bad_specs():
    with pytest.raises(SpectrumError):
        SpectrumSpec(kind="power_law", n_classes=5, total_emitters=100, delta_max=1.0)
    with pytest.raises(SpectrumError):
        SpectrumSpec(kind="power_law", n_classes=4, total_emitters=100, delta_max=1.0, delta_min=-1.0)
    with pytest.raises(SpectrumError):
        SpectrumSpec(kind="power_law", n_classes=4, total_emitters=100, delta_max=-1.0)


def test_kind_mismatch_rejected():
    gauss = SpectrumSpec(kind="gaussian", n_classes=3, total_emitters=10, sigma=1.0)
    with pytest.raises(SpectrumError):
        discretize_power_law(gauss, g=1.0)


@given(
    k=st.integers(min_value=2, max_value=30),
    n=st.integers(min_value=100, max_value=10**7),
    span=st.floats(min_value=0.5, max_value=3.0),
)
@settings(max_examples=40, deadline=None)
def test_gaussian_total_preserved(k, n, span):
    spec = SpectrumSpec(kind="gaussian", n_classes=k, total_emitters=n, sigma=1.0, span_sigmas=span)
    try:
        classes = discretize_gaussian(spec, g=1.0)
    except SpectrumError:
        return  # rounding produced an empty class; rejection is the contract
    counts = [c.n_emitters for c in classes]
    assert sum(counts) == n
    assert min(counts) >= 1
    center = 0.0
    by_distance = sorted(classes, key=lambda c: abs(c.delta_k - center))
    assert all(
        a.n_emitters >= b.n_emitters
        for a, b in zip(by_distance, by_distance[1:])
        if abs(a.delta_k - center) < abs(b.delta_k - center) - 1e-12
    )
