"""Driven-dissipative steady states under incoherent pumping.

The steady state is located by integrating from the ground state:
with no coherent drive the pumped dynamics stays in the phase-invariant
sector, whose attractor is a genuine fixed point above the
synchronization threshold.  Once the weighted residual is small a Newton
polish (scipy ``root``) finishes the job.  Below the threshold the
cross-ensemble coherence keeps rotating at the beat frequency, a limit
cycle of the moment system: that case is detected, reported distinctly,
and the returned observables are time averages over the final stretch.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import math

import numpy as np
from scipy.optimize import root

from .eom import ModelSystem, collective_purcell_rate, rhs_flat
from .integrate import IntegratorConfig, advance
from .model import (
    CumulantState,
    DrivePulse,
    FrequencyClass,
    ModelError,
    PhysicalParams,
    ground_state,
)

__all__ = [
    "SteadyStateResult",
    "SweepResult",
    "find_steady_state",
    "sweep_grid",
    "two_ensemble_system",
    "write_sweep_csv",
    "steady_observables",
]

SYMMETRIC = "symmetric"  # ensembles at delta_c -+ Delta/2
ONE_SIDED = "one_sided"  # ensemble A at delta_c, B at delta_c + Delta


@dataclass
class SteadyStateResult:
    state: CumulantState
    converged: bool
    residual: float
    elapsed_model_time: float
    limit_cycle: bool = False
    tolerance: float = 0.0

    def __post_init__(self):
        if self.converged and self.residual > self.tolerance:
            raise ModelError("converged result with residual above tolerance")


def _weighted_residual(system: ModelSystem, y: np.ndarray) -> float:
    """RMS of the state derivative weighted by 1 + |moment| (rad/s)."""
    r = rhs_flat(system, 0.0, y)
    w = 1.0 + np.abs(y)
    return float(np.sqrt(np.mean((np.abs(r) / w) ** 2)))


def _rate_scale(system: ModelSystem) -> float:
    p = system.params
    return max(p.kappa, p.gamma, p.eta, collective_purcell_rate(system))


def _physical(y: np.ndarray, k: int) -> bool:
    if not np.all(np.isfinite(y)):
        return False
    n = y[2]
    if n.real < -1e-6 or abs(n.imag) > 1e-6 * max(1.0, abs(n.real)):
        return False
    sz = y[4 : 4 + 9 * k : 9]
    return bool(np.all(np.abs(sz.real) <= 1.0 + 1e-5) and np.all(np.abs(sz.imag) <= 1e-6))


def _newton_polish(system: ModelSystem, y: np.ndarray) -> np.ndarray | None:
    """Solve rhs = 0 from a nearby point; None when rejected."""
    size = y.size

    def fun(x):
        z = x[:size] + 1j * x[size:]
        r = rhs_flat(system, 0.0, z)
        return np.concatenate([r.real, r.imag])

    x0 = np.concatenate([y.real, y.imag])
    sol = root(fun, x0, method="hybr", options={"xtol": 1e-12})
    if not sol.success:
        return None
    z = sol.x[:size] + 1j * sol.x[size:]
    if not _physical(z, system.layout.n_classes):
        return None
    # refuse roots far from the integrated point (e.g. the unpumped dark state)
    if np.linalg.norm(z - y) > 0.3 * (1.0 + np.linalg.norm(y)):
        return None
    return z


def find_steady_state(
    system: ModelSystem,
    ss_tol: float = 1e-8,
    t_max: float | None = None,
    config: IntegratorConfig | None = None,
    initial_state: CumulantState | None = None,
    n_chunks: int = 10,
) -> SteadyStateResult:
    """Integrate from the ground state until the dynamics stalls.

    Convergence means the weighted residual of the equations of motion
    drops below ``ss_tol`` times the characteristic rate scale
    ``max(kappa, gamma, eta, Gamma_c)``.  A residual plateau with the
    state still moving is classified as a limit cycle; the returned state
    then holds time-averaged moments over the final chunk.
    """
    if system.drive.amplitude != 0.0:
        raise ModelError("steady-state search requires zero coherent drive")
    p = system.params
    scale = _rate_scale(system)
    if scale <= 0.0:
        raise ModelError("all rates vanish; no steady state to find")
    if t_max is None:
        slowest = min(x for x in (p.kappa, p.gamma + p.eta) if x > 0.0)
        t_max = 50.0 / slowest
    config = config or IntegratorConfig(rel_tol=1e-6, abs_tol=1e-9)
    tol = ss_tol * scale

    y = (initial_state.data.copy() if initial_state is not None
         else ground_state(system.layout).data)
    res = _weighted_residual(system, y)
    if res <= tol:
        return SteadyStateResult(
            CumulantState(system.layout, y), True, res, 0.0, tolerance=tol
        )

    chunk = t_max / n_chunks
    elapsed = 0.0
    history: list[tuple[float, np.ndarray]] = [(res, y.copy())]
    while elapsed < t_max:
        y = advance(system, y, (0.0, chunk), config)
        elapsed += chunk
        res = _weighted_residual(system, y)
        if res <= tol:
            return SteadyStateResult(
                CumulantState(system.layout, y), True, res, elapsed, tolerance=tol
            )
        if res <= 1e-3 * scale:
            polished = _newton_polish(system, y)
            if polished is not None:
                res_p = _weighted_residual(system, polished)
                if res_p <= tol:
                    return SteadyStateResult(
                        CumulantState(system.layout, polished), True, res_p, elapsed,
                        tolerance=tol,
                    )
        history.append((res, y.copy()))

    # residual plateau + state motion -> limit cycle; average the last chunk
    tail = [r for r, _ in history[-3:]]
    plateau = len(tail) == 3 and max(tail) <= 1.5 * min(tail)
    moved = np.linalg.norm(history[-1][1] - history[-2][1]) > 1e3 * ss_tol * (
        1.0 + np.linalg.norm(history[-1][1])
    )
    limit_cycle = bool(plateau and moved)
    if limit_cycle:
        n_avg = 64
        acc = np.zeros_like(y)
        step = chunk / n_avg
        for _ in range(n_avg):
            y = advance(system, y, (0.0, step), config)
            acc += y
        y = acc / n_avg
        elapsed += chunk
        res = _weighted_residual(system, y)
    return SteadyStateResult(
        CumulantState(system.layout, y), False, res, elapsed,
        limit_cycle=limit_cycle, tolerance=tol,
    )


def two_ensemble_system(
    params: PhysicalParams,
    n_per_ensemble: int,
    g: float,
    splitting: float,
    convention: str = SYMMETRIC,
) -> ModelSystem:
    """Two equal ensembles split by ``splitting`` around the cavity.

    ``symmetric`` places them at delta_c -+ splitting/2 (preserves the
    exchange symmetry used by the tests); ``one_sided`` keeps ensemble A
    on the cavity and detunes only B.
    """
    if convention == SYMMETRIC:
        deltas = (params.delta_c - 0.5 * splitting, params.delta_c + 0.5 * splitting)
    elif convention == ONE_SIDED:
        deltas = (params.delta_c, params.delta_c + splitting)
    else:
        raise ModelError(f"unknown detuning convention {convention!r}")
    classes = [FrequencyClass(d, n_per_ensemble, g) for d in deltas]
    return ModelSystem.build(params, classes, DrivePulse.off())


def steady_observables(system: ModelSystem, state: CumulantState) -> dict:
    """Scalar observables of a two-ensemble steady state."""
    coh_cross = state.get(("spsm", 0, 1))
    coh_same = np.conj(state.get(("smsp", 0)))
    sigma = abs(coh_cross) / abs(coh_same) if abs(coh_same) > 1e-15 else math.nan
    return {
        "n_photons": state.n_photons,
        "coh_cross": abs(coh_cross),
        "coh_same": abs(coh_same),
        "sigma_ratio": sigma,
        "sz": state.sz(),
    }


@dataclass
class SweepResult:
    """Steady-state observables over an (eta, splitting) grid."""

    etas: np.ndarray
    deltas: np.ndarray
    n_photons: np.ndarray
    coh_cross: np.ndarray
    coh_same: np.ndarray
    sigma: np.ndarray
    converged: np.ndarray
    limit_cycle: np.ndarray
    residual: np.ndarray
    gamma: float
    kappa: float
    gamma_c: float

    def point(self, i: int, j: int) -> dict:
        return {
            "eta": float(self.etas[i]),
            "delta": float(self.deltas[j]),
            "n_photons": float(self.n_photons[i, j]),
            "sigma_ratio": float(self.sigma[i, j]),
            "converged": bool(self.converged[i, j]),
        }


def sweep_grid(
    base_params: PhysicalParams,
    n_per_ensemble: int,
    g: float,
    etas,
    deltas,
    convention: str = SYMMETRIC,
    ss_tol: float = 1e-8,
    t_max: float | None = None,
    config: IntegratorConfig | None = None,
    threads: int = 1,
) -> SweepResult:
    """Two-ensemble steady-state sweep over pump rate and splitting.

    Every grid point owns an independent system and state, so points can
    run on any number of threads with bitwise identical results.
    Non-convergence is recorded per point, never raised.
    """
    etas = np.asarray(list(etas), dtype=float)
    deltas = np.asarray(list(deltas), dtype=float)
    if etas.size == 0 or deltas.size == 0:
        raise ModelError("sweep grids must be non-empty")
    shape = (etas.size, deltas.size)
    n_ph = np.zeros(shape)
    coh_cross = np.zeros(shape)
    coh_same = np.zeros(shape)
    sigma = np.full(shape, math.nan)
    converged = np.zeros(shape, dtype=bool)
    limit_cycle = np.zeros(shape, dtype=bool)
    residual = np.zeros(shape)

    def solve_point(idx):
        i, j = idx
        params = PhysicalParams(
            kappa=base_params.kappa,
            gamma=base_params.gamma,
            gamma_phi=base_params.gamma_phi,
            eta=float(etas[i]),
            delta_c=base_params.delta_c,
        )
        system = two_ensemble_system(params, n_per_ensemble, g, float(deltas[j]), convention)
        result = find_steady_state(system, ss_tol=ss_tol, t_max=t_max, config=config)
        return idx, system, result

    indices = [(i, j) for i in range(etas.size) for j in range(deltas.size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(solve_point, indices))
    else:
        outcomes = [solve_point(idx) for idx in indices]

    for (i, j), system, result in outcomes:
        obs = steady_observables(system, result.state)
        n_ph[i, j] = obs["n_photons"]
        coh_cross[i, j] = obs["coh_cross"]
        coh_same[i, j] = obs["coh_same"]
        sigma[i, j] = obs["sigma_ratio"]
        converged[i, j] = result.converged
        limit_cycle[i, j] = result.limit_cycle
        residual[i, j] = result.residual

    gamma_c = g * g * n_per_ensemble / base_params.kappa if base_params.kappa > 0 else 0.0
    return SweepResult(
        etas=etas,
        deltas=deltas,
        n_photons=n_ph,
        coh_cross=coh_cross,
        coh_same=coh_same,
        sigma=sigma,
        converged=converged,
        limit_cycle=limit_cycle,
        residual=residual,
        gamma=base_params.gamma,
        kappa=base_params.kappa,
        gamma_c=gamma_c,
    )


def write_sweep_csv(result: SweepResult, path) -> None:
    """One row per grid point: eta, delta, photon number, coherences, ratio."""
    lines = ["eta,delta,n_photons,coh_cross,coh_same,sigma_ratio,converged,status"]
    for i in range(result.etas.size):
        for j in range(result.deltas.size):
            if result.limit_cycle[i, j]:
                status = "limit_cycle"
            elif result.converged[i, j]:
                status = "converged"
            else:
                status = "max_time"
            lines.append(
                f"{result.etas[i]:.17g},{result.deltas[j]:.17g},"
                f"{result.n_photons[i, j]:.17g},{result.coh_cross[i, j]:.17g},"
                f"{result.coh_same[i, j]:.17g},{result.sigma[i, j]:.17g},"
                f"{str(bool(result.converged[i, j])).lower()},{status}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
