"""Time integration of the moment equations with dense output on a grid.

The adaptive method is the embedded Dormand-Prince 5(4) pair provided by
scipy's ``solve_ivp`` (5th order propagation, 4th order error estimate,
complex state supported); a fixed-step classical RK4 with cubic Hermite
resampling is available as a cross-check.  Integration always restarts at
the drive discontinuities, so no step straddles a pulse edge, and grid
sampling uses the step interpolant, never the step size.

scipy's error norm is an RMS over complex components; splitting real and
imaginary parts would rescale it by at most sqrt(2), which is absorbed by
the tolerance conventions documented here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import math

import numpy as np
from scipy.integrate import solve_ivp

from .eom import ModelSystem, rhs_flat
from .model import CumulantState, ModelError

__all__ = ["IntegratorConfig", "TimeSeries", "IntegrationError", "integrate", "advance"]

ADAPTIVE = "adaptive"
RK4_FIXED = "rk4_fixed"


class IntegrationError(RuntimeError):
    """Integration failure, annotated with where it happened."""

    def __init__(self, message: str, time: float | None = None, state_norm: float | None = None):
        detail = message
        if time is not None:
            detail += f" (t = {time:.6e} s"
            if state_norm is not None:
                detail += f", |state| = {state_norm:.3e}"
            detail += ")"
        super().__init__(detail)
        self.time = time
        self.state_norm = state_norm


@dataclass(frozen=True)
class IntegratorConfig:
    """Error control and method selection.

    Defaults resolve the fastest oscillation of the reference parameter
    sets with margin; the tolerance-halving self-consistency test in the
    acceptance suite validates them.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    initial_step: float | None = None
    method: str = ADAPTIVE
    rk4_steps_per_segment: int = 20000

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise ModelError("tolerances must be positive")
        if not self.max_step > 0.0:
            raise ModelError("max_step must be positive")
        if self.method not in (ADAPTIVE, RK4_FIXED):
            raise ModelError(f"unknown integration method {self.method!r}")

    def halved(self) -> "IntegratorConfig":
        return replace(self, rel_tol=0.5 * self.rel_tol, abs_tol=0.5 * self.abs_tol)


@dataclass
class TimeSeries:
    """Sampled observables over a strictly increasing time grid.

    Channels: photon number ``n_photons`` (real), mean field ``a``
    (complex), per-class inversion ``sz`` with shape (T, k), and the
    cross coherences ``coherence[t, k] = <sigma^+_ref sigma^-_k>``
    against the reference class (complex; the ref column holds the
    same-class coherence).
    """

    times: np.ndarray
    n_photons: np.ndarray
    a: np.ndarray
    sz: np.ndarray
    coherence: np.ndarray
    ref_class: int
    detunings: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size and np.any(np.diff(t) <= 0.0):
            raise ModelError("times must be strictly increasing")
        for name in ("n_photons", "a", "sz", "coherence"):
            if getattr(self, name).shape[0] != t.size:
                raise ModelError(f"channel {name} length does not match times")
        if np.iscomplexobj(self.n_photons):
            raise ModelError("photon-number channel must be real")

    def channel(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @property
    def excitation(self) -> np.ndarray:
        """(1 + <sigma^z>)/2 per class, shape (T, k)."""
        return 0.5 * (1.0 + self.sz)


def sample_observables(system: ModelSystem, y: np.ndarray, ref_class: int) -> tuple:
    """Extract (n, a, sz vector, coherence row vs ref_class) from a flat state."""
    k = system.layout.n_classes
    n = y[2].real
    a = y[0]
    sz = y[3 + 1 : 3 + 1 + 9 * k : 9].real
    coh = np.empty(k, dtype=complex)
    layout = system.layout
    for kk in range(k):
        if kk == ref_class:
            # same-class <sigma^+ sigma^-> is the conjugate of the stored <sm sp>
            coh[kk] = np.conj(y[layout.index_of(("smsp", ref_class))])
        elif ref_class < kk:
            coh[kk] = y[layout.index_of(("spsm", ref_class, kk))]
        else:
            coh[kk] = np.conj(y[layout.index_of(("spsm", kk, ref_class))])
    return n, a, sz, coh


def _segments(t0: float, t1: float, system: ModelSystem) -> list[tuple[float, float]]:
    cuts = sorted({t0, t1, *[b for b in system.drive.breakpoints() if t0 < b < t1]})
    return list(zip(cuts[:-1], cuts[1:]))


def _check_finite(y: np.ndarray, t: float):
    if not np.all(np.isfinite(y)):  # complex isfinite checks both parts
        finite = np.isfinite(y)
        norm = float(np.linalg.norm(y[finite])) if np.any(finite) else math.nan
        raise IntegrationError("non-finite state encountered", time=t, state_norm=norm)


def _solve_segment(system, y0, a, b, t_eval, config):
    def fun(t, y):
        return rhs_flat(system, t, y)

    kwargs = dict(
        method="RK45",
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=config.max_step,
    )
    if config.initial_step is not None:
        kwargs["first_step"] = config.initial_step
    sol = solve_ivp(fun, (a, b), y0, t_eval=t_eval, **kwargs)
    if not sol.success:
        t_fail = float(sol.t[-1]) if sol.t.size else a
        norm = float(np.linalg.norm(sol.y[:, -1])) if sol.y.size else float(np.linalg.norm(y0))
        raise IntegrationError(f"adaptive step failed: {sol.message}", time=t_fail, state_norm=norm)
    return sol


def _rk4_segment(system, y0, a, b, t_eval, config):
    """Fixed-step RK4 with cubic Hermite interpolation onto t_eval."""
    span = b - a
    n_steps = max(1, min(config.rk4_steps_per_segment, int(math.ceil(span / config.max_step))
                         if math.isfinite(config.max_step) else config.rk4_steps_per_segment))
    h = span / n_steps
    nodes = a + h * np.arange(n_steps + 1)
    y = y0.copy()
    ys = [y.copy()]
    fs = [rhs_flat(system, a, y)]
    for s in range(n_steps):
        t = nodes[s]
        k1 = fs[-1]
        k2 = rhs_flat(system, t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs_flat(system, t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs_flat(system, t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(y, nodes[s + 1])
        ys.append(y.copy())
        fs.append(rhs_flat(system, nodes[s + 1], y))
    samples = np.empty((len(t_eval), y0.size), dtype=complex)
    for idx, tt in enumerate(t_eval):
        s = min(int((tt - a) / h), n_steps - 1)
        u = (tt - nodes[s]) / h
        y0s, y1s = ys[s], ys[s + 1]
        f0s, f1s = fs[s], fs[s + 1]
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        samples[idx] = h00 * y0s + h * h10 * f0s + h01 * y1s + h * h11 * f1s
    return samples, y


def integrate(
    system: ModelSystem,
    state0: CumulantState,
    t_span: tuple[float, float],
    grid: np.ndarray,
    config: IntegratorConfig | None = None,
    ref_class: int | None = None,
) -> tuple[TimeSeries, CumulantState]:
    """Integrate the moment equations and sample observables on ``grid``.

    Returns the sampled :class:`TimeSeries` and the final full state at
    ``t_span[1]``.  Drive discontinuities inside the span are integration
    breakpoints.
    """
    config = config or IntegratorConfig()
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ModelError(f"t_span must be increasing, got {t_span!r}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ModelError("grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0.0):
        raise ModelError("grid must be strictly increasing")
    if grid[0] < t0 - 1e-18 or grid[-1] > t1 + 1e-18:
        raise ModelError("grid must lie within t_span")
    if state0.layout is not system.layout and state0.layout.n_classes != system.layout.n_classes:
        raise ModelError("state layout does not match system layout")
    _check_finite(state0.data, t0)

    if ref_class is None:
        ref_class = system.resonant_class()

    y = np.ascontiguousarray(state0.data, dtype=complex)
    sample_states: list[np.ndarray] = []
    sample_times: list[float] = []
    for a, b in _segments(t0, t1, system):
        inside = grid[(grid >= a) & (grid < b)] if b < t1 else grid[(grid >= a) & (grid <= b)]
        t_eval = np.unique(np.concatenate([inside, [b]]))
        if config.method == ADAPTIVE:
            sol = _solve_segment(system, y, a, b, t_eval, config)
            states = sol.y.T
            times = sol.t
            y = states[-1].copy()
        else:
            states, y = _rk4_segment(system, y, a, b, t_eval, config)
            times = t_eval
        _check_finite(y, b)
        for tt, yy in zip(times, states):
            if tt == b and not np.any(grid == b):
                continue  # segment endpoint kept only when the grid asks for it
            if sample_times and tt <= sample_times[-1]:
                continue  # segment boundaries would otherwise be sampled twice
            sample_times.append(float(tt))
            sample_states.append(np.asarray(yy))

    k = system.layout.n_classes
    n_t = len(sample_times)
    n_ph = np.empty(n_t)
    a_ch = np.empty(n_t, dtype=complex)
    sz_ch = np.empty((n_t, k))
    coh_ch = np.empty((n_t, k), dtype=complex)
    for s, yy in enumerate(sample_states):
        _check_finite(yy, sample_times[s])
        n_ph[s], a_ch[s], sz_ch[s], coh_ch[s] = sample_observables(system, yy, ref_class)
    series = TimeSeries(
        times=np.array(sample_times),
        n_photons=n_ph,
        a=a_ch,
        sz=sz_ch,
        coherence=coh_ch,
        ref_class=ref_class,
        detunings=system.delta.copy(),
    )
    return series, CumulantState(system.layout, y)


def advance(
    system: ModelSystem,
    y0: np.ndarray,
    t_span: tuple[float, float],
    config: IntegratorConfig | None = None,
) -> np.ndarray:
    """Propagate a flat state vector without sampling (used by steady-state search)."""
    config = config or IntegratorConfig()
    t0, t1 = map(float, t_span)
    y = np.ascontiguousarray(y0, dtype=complex)
    for a, b in _segments(t0, t1, system):
        if config.method == ADAPTIVE:
            sol = _solve_segment(system, y, a, b, np.array([b]), config)
            y = sol.y[:, -1].copy()
        else:
            _, y = _rk4_segment(system, y, a, b, np.array([b]), config)
        _check_finite(y, b)
    return y
