import math

import numpy as np
import pytest

from cavitysync import (
    AnalysisError,
    CumulantState,
    build_layout,
    detect_sidebands,
    extract_rabi_frequency,
    purcell_rate,
    sigma_ratio,
    sync_boundary,
)
from cavitysync.analysis import PEAK_SPACING, SPECTRAL_PEAK
from cavitysync.steadystate import SweepResult

from conftest import hz


def test_purcell_rate_paper_parameters():
    rate = purcell_rate(hz(1.6e3), 1e5, hz(160e3))
    assert rate / (2 * math.pi) == pytest.approx(1.6e6, rel=1e-12)


def test_purcell_rate_trivia():
    assert purcell_rate(1.0, 0.0, 2.0) == 0.0
    assert purcell_rate(2.0, 7.0, 3.0) == pytest.approx(4 * purcell_rate(1.0, 7.0, 3.0))
    with pytest.raises(AnalysisError):
        purcell_rate(1.0, 1.0, 0.0)


def _damped_cosine(f0, tau, t):
    return np.exp(-t / tau) * np.cos(2 * np.pi * f0 * t)


@pytest.mark.parametrize("method", [PEAK_SPACING, SPECTRAL_PEAK])
def test_rabi_extraction_synthetic(method):
    f0 = 1.5e7
    t = np.linspace(0.0, 1e-6, 2001)
    v = _damped_cosine(f0, 4e-7, t)
    est = extract_rabi_frequency(t, v, window=(1e-7, 9e-7), method=method)
    assert est.omega / (2 * np.pi) == pytest.approx(f0, rel=0.02)
    assert est.confidence < 0.5


def test_rabi_extraction_amplitude_invariance():
    f0 = 7e6
    t = np.linspace(0.0, 2e-6, 4001)
    v = _damped_cosine(f0, 8e-7, t)
    a = extract_rabi_frequency(t, v, window=(0.0, 2e-6))
    b = extract_rabi_frequency(t, 137.0 * v, window=(0.0, 2e-6))
    assert a.omega == pytest.approx(b.omega, rel=1e-12)
    assert a.confidence == pytest.approx(b.confidence, rel=1e-12)


def test_rabi_extraction_flat_signal_rejected():
    t = np.linspace(0.0, 1e-6, 500)
    with pytest.raises(AnalysisError, match="flat"):
        extract_rabi_frequency(t, np.full_like(t, 0.7), window=(0.0, 1e-6))


def test_rabi_extraction_too_few_extrema():
    t = np.linspace(0.0, 1e-6, 500)
    v = np.cos(2 * np.pi * 1.2e6 * t)  # just over one period
    with pytest.raises(AnalysisError, match="extrema"):
        extract_rabi_frequency(t, v, window=(0.0, 1e-6))


def test_sigma_ratio_cases():
    lay = build_layout(2)
    state = CumulantState(lay, np.zeros(lay.size, dtype=complex))
    state.set(("smsp", 0), 0.02)
    state.set(("spsm", 0, 1), 0.02)
    assert sigma_ratio(state, 0, 1) == pytest.approx(1.0)
    assert sigma_ratio(state, 0, 0) == 1.0
    state.set(("spsm", 0, 1), 0.0)
    assert sigma_ratio(state, 0, 1) == 0.0
    state.set(("smsp", 0), 0.0)
    assert sigma_ratio(state, 0, 1) is None  # undefined, flagged not returned


def test_detect_sidebands_synthetic_map():
    kappa = hz(160e3)
    deltas = np.linspace(-hz(2e7), hz(2e7), 161)
    times = np.linspace(0.0, 1e-6, 50)
    omega = hz(1.5e7)
    # synchronized core + sideband bumps at +-omega
    profile = 0.3 * np.exp(-((deltas / (3 * kappa)) ** 2))
    profile += 0.05 * np.exp(-(((deltas - omega) / (2 * kappa)) ** 2))
    profile += 0.05 * np.exp(-(((deltas + omega) / (2 * kappa)) ** 2))
    sz_map = np.tile(2.0 * profile - 1.0, (times.size, 1))
    found = detect_sidebands(deltas, times, sz_map, kappa)
    assert len(found) == 2
    assert found[0] == pytest.approx(-omega, abs=2 * (deltas[1] - deltas[0]))
    assert found[1] == pytest.approx(omega, abs=2 * (deltas[1] - deltas[0]))
    # symmetric input, symmetric output
    assert found[0] == pytest.approx(-found[1], rel=1e-12)


def test_detect_sidebands_monotone_wings_yield_nothing():
    kappa = hz(160e3)
    deltas = np.linspace(-hz(2e7), hz(2e7), 161)
    times = np.linspace(0.0, 1e-6, 20)
    profile = 0.3 * np.exp(-((deltas / (5 * kappa)) ** 2))
    sz_map = np.tile(2.0 * profile - 1.0, (times.size, 1))
    assert detect_sidebands(deltas, times, sz_map, kappa) == []


def test_detect_sidebands_threshold_suppresses_weak_peaks():
    kappa = hz(160e3)
    deltas = np.linspace(-hz(1e7), hz(1e7), 81)
    times = np.linspace(0.0, 1e-6, 10)
    profile = 1e-9 * np.exp(-(((deltas - hz(5e6)) / (2 * kappa)) ** 2))
    sz_map = np.tile(2.0 * profile - 1.0, (times.size, 1))
    assert detect_sidebands(deltas, times, sz_map, kappa, threshold=1e-4) == []


def _fake_sweep(etas, deltas, sigma):
    shape = (len(etas), len(deltas))
    return SweepResult(
        etas=np.asarray(etas, dtype=float),
        deltas=np.asarray(deltas, dtype=float),
        n_photons=np.ones(shape),
        coh_cross=np.ones(shape),
        coh_same=np.ones(shape),
        sigma=np.asarray(sigma, dtype=float),
        converged=np.ones(shape, dtype=bool),
        limit_cycle=np.zeros(shape, dtype=bool),
        residual=np.zeros(shape),
        gamma=hz(0.2e6),
        kappa=hz(160e3),
        gamma_c=hz(1.6e6),
    )


def test_sync_boundary_scan():
    deltas = [0.0, 1e6, 2e6, 3e6]
    sweep = _fake_sweep(
        etas=[0.0, 1e5, 1e6],
        deltas=deltas,
        sigma=[
            [np.nan, np.nan, np.nan, np.nan],  # no pump: undefined everywhere
            [1.0, 0.8, 0.4, 0.2],
            [1.0, 0.9, 0.7, 0.6],  # boundary not crossed in range
        ],
    )
    report = sync_boundary(sweep)
    assert 0.0 not in report.boundary  # flagged by omission
    assert report.boundary[1e5] == pytest.approx(2e6)
    assert report.boundary[1e6] is None  # scanned range exhausted
    assert report.gamma_c == pytest.approx(hz(1.6e6))
    assert report.defined_boundaries() == [(1e5, 2e6)]
