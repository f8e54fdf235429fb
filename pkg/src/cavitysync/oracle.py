"""Exact Lindblad solver for small emitter-cavity systems.

Builds the full master equation on a truncated Fock space times a handful
of explicit two-level emitters and propagates the density operator, so the
mean-field closure can be checked against exact moments.  Everything is
dense; memory grows as dim**4 for the superoperator, which is practical
for Hilbert dimensions up to roughly 100 (all shipped comparisons stay
below 40).

The dissipators are ``kappa D[a] + sum_i (gamma D[sm_i] + gamma_phi
D[sz_i] + eta D[sp_i])`` with ``D[O]rho = O rho O^dag - (1/2){O^dag O,
rho}``.  Note that ``gamma_phi D[sz]`` damps single-emitter coherences at
``2*gamma_phi``, while the mean-field module follows the linear-in-Gamma
convention of its shifted frequencies; comparisons between the two are
therefore meaningful at gamma_phi = 0 (see docs/EQUATIONS.md).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import CumulantState, DrivePulse, ModelError, PhysicalParams, StateLayout

__all__ = [
    "SmallSystemSpec",
    "OracleError",
    "Liouvillian",
    "build_liouvillian",
    "evolve_exact",
    "ground_rho",
    "ExactTimeSeries",
    "compare_channels",
]

DIM_GUARD = 256


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SmallSystemSpec:
    """Exact-oracle description: Fock cutoff plus an explicit emitter list.

    ``emitters`` is a sequence of (detuning, coupling) tuples in rad/s; no
    class degeneracy, every emitter is individual.
    """

    fock_cutoff: int
    emitters: tuple
    params: PhysicalParams
    drive: DrivePulse = field(default_factory=DrivePulse.off)

    def __post_init__(self):
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 1:
            raise ModelError(f"fock_cutoff must be an integer >= 1, got {self.fock_cutoff!r}")
        object.__setattr__(self, "emitters", tuple((float(d), float(g)) for d, g in self.emitters))
        if self.dim > DIM_GUARD:
            raise OracleError(
                f"Hilbert dimension {self.dim} exceeds the guard rail {DIM_GUARD}; "
                "reduce fock_cutoff or the emitter count"
            )

    @property
    def n_emitters(self) -> int:
        return len(self.emitters)

    @property
    def dim(self) -> int:
        return (self.fock_cutoff + 1) * 2 ** self.n_emitters

    def with_cutoff(self, n_max: int) -> "SmallSystemSpec":
        return SmallSystemSpec(n_max, self.emitters, self.params, self.drive)


def _site_operator(op: np.ndarray, slot: int, dims: list[int]) -> np.ndarray:
    """Embed a single-site operator into the tensor product space."""
    out = np.eye(1, dtype=complex)
    for s, d in enumerate(dims):
        out = np.kron(out, op if s == slot else np.eye(d, dtype=complex))
    return out


class Operators:
    """Dense mode and emitter operators on the truncated product space."""

    def __init__(self, spec: SmallSystemSpec):
        n_ph = spec.fock_cutoff + 1
        dims = [n_ph] + [2] * spec.n_emitters
        destroy = np.diag(np.sqrt(np.arange(1, n_ph)), k=1).astype(complex)
        # emitter basis: index 0 = excited, 1 = ground, so sm = |g><e|
        sm2 = np.array([[0, 0], [1, 0]], dtype=complex)
        sz2 = np.array([[1, 0], [0, -1]], dtype=complex)
        self.dims = dims
        self.a = _site_operator(destroy, 0, dims)
        self.ad = self.a.conj().T
        self.sm = [_site_operator(sm2, 1 + i, dims) for i in range(spec.n_emitters)]
        self.sp = [m.conj().T for m in self.sm]
        self.sz = [_site_operator(sz2, 1 + i, dims) for i in range(spec.n_emitters)]
        self.identity = np.eye(int(np.prod(dims)), dtype=complex)
        self.n_op = self.ad @ self.a

    def number_projectors(self) -> np.ndarray:
        """Diagonal 0/1 masks selecting each photon-number sector."""
        n_ph = self.dims[0]
        rest = int(np.prod(self.dims[1:]))
        masks = np.zeros((n_ph, n_ph * rest))
        for n in range(n_ph):
            masks[n, n * rest : (n + 1) * rest] = 1.0
        return masks


def _hamiltonian(spec: SmallSystemSpec, ops: Operators) -> tuple[np.ndarray, np.ndarray]:
    """Static part and unit-amplitude drive part of the Hamiltonian."""
    p = spec.params
    h0 = p.delta_c * ops.n_op
    for i, (delta, g) in enumerate(spec.emitters):
        h0 = h0 + 0.5 * delta * ops.sz[i] + g * (ops.a @ ops.sp[i] + ops.ad @ ops.sm[i])
    hd = ops.a + ops.ad
    return h0, hd


def _dissipator_superop(op: np.ndarray, dim: int) -> np.ndarray:
    """Superoperator of D[op] acting on row-major vec(rho)."""
    eye = np.eye(dim, dtype=complex)
    opd = op.conj().T
    anti = opd @ op
    return (
        np.kron(op, op.conj())
        - 0.5 * np.kron(anti, eye)
        - 0.5 * np.kron(eye, anti.T)
    )


def _commutator_superop(h: np.ndarray, dim: int) -> np.ndarray:
    eye = np.eye(dim, dtype=complex)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


@dataclass
class Liouvillian:
    """Dense generator split into a static part and a drive part.

    The full action at time t is ``(l_static + F(t) * l_drive) @ vec(rho)``
    with row-major vectorization.
    """

    spec: SmallSystemSpec
    ops: Operators
    l_static: np.ndarray
    l_drive: np.ndarray

    @property
    def dim(self) -> int:
        return self.spec.dim

    def matrix(self, drive_amplitude: float = 0.0) -> np.ndarray:
        if drive_amplitude == 0.0:
            return self.l_static
        return self.l_static + drive_amplitude * self.l_drive

    def apply(self, rho: np.ndarray, drive_amplitude: float = 0.0) -> np.ndarray:
        vec = self.matrix(drive_amplitude) @ rho.reshape(-1)
        return vec.reshape(rho.shape)


def build_liouvillian(spec: SmallSystemSpec) -> Liouvillian:
    """Assemble the dense master-equation generator for ``spec``."""
    ops = Operators(spec)
    dim = spec.dim
    p = spec.params
    h0, hd = _hamiltonian(spec, ops)
    l0 = _commutator_superop(h0, dim) + p.kappa * _dissipator_superop(ops.a, dim)
    for i in range(spec.n_emitters):
        if p.gamma:
            l0 += p.gamma * _dissipator_superop(ops.sm[i], dim)
        if p.gamma_phi:
            l0 += p.gamma_phi * _dissipator_superop(ops.sz[i], dim)
        if p.eta:
            l0 += p.eta * _dissipator_superop(ops.sp[i], dim)
    ld = _commutator_superop(hd, dim)
    return Liouvillian(spec=spec, ops=ops, l_static=l0, l_drive=ld)


def ground_rho(spec: SmallSystemSpec) -> np.ndarray:
    """Vacuum cavity, all emitters in the ground state."""
    dim = spec.dim
    rho = np.zeros((dim, dim), dtype=complex)
    rest = 2 ** spec.n_emitters
    rho[rest - 1, rest - 1] = 1.0  # photon sector 0, all spins at index 1 (ground)
    return rho


def _moment_operators(liou: Liouvillian, grouping: list[tuple[int, ...]]) -> dict:
    """Moment-id -> operator map matching the mean-field layout.

    ``grouping`` assigns oracle emitters to layout classes.  Same-class
    second moments use the first two emitters of a group; cross-class
    moments use the first emitter of each group.  Expectations of identical
    emitters within a group coincide for group-symmetric states.
    """
    ops = liou.ops
    mops: dict = {("a",): ops.a, ("a2",): ops.a @ ops.a, ("n",): ops.n_op}
    first = [g[0] for g in grouping]
    for k, group in enumerate(grouping):
        i = group[0]
        mops[("sm", k)] = ops.sm[i]
        mops[("sz", k)] = ops.sz[i]
        mops[("asz", k)] = ops.a @ ops.sz[i]
        mops[("asm", k)] = ops.a @ ops.sm[i]
        mops[("asp", k)] = ops.a @ ops.sp[i]
        if len(group) >= 2:
            j = group[1]
            mops[("smsz", k)] = ops.sm[i] @ ops.sz[j]
            mops[("smsp", k)] = ops.sm[i] @ ops.sp[j]
            mops[("smsm", k)] = ops.sm[i] @ ops.sm[j]
            mops[("szsz", k)] = ops.sz[i] @ ops.sz[j]
    for a in range(len(grouping)):
        for b in range(a + 1, len(grouping)):
            i, j = first[a], first[b]
            mops[("smsm", a, b)] = ops.sm[i] @ ops.sm[j]
            mops[("szsz", a, b)] = ops.sz[i] @ ops.sz[j]
            mops[("szsm", a, b)] = ops.sz[i] @ ops.sm[j]
            mops[("szsm", b, a)] = ops.sz[j] @ ops.sm[i]
            mops[("spsm", a, b)] = ops.sp[i] @ ops.sm[j]
    return mops


@dataclass
class ExactTimeSeries:
    """Exact moments on a time grid, channel-aligned with the mean-field state."""

    times: np.ndarray
    moments: dict
    trace_error: np.ndarray
    hermiticity_error: np.ndarray
    min_eigenvalue: np.ndarray
    top_fock_population: np.ndarray
    final_rho: np.ndarray

    def channel(self, moment) -> np.ndarray:
        return self.moments[moment]

    @property
    def n_photons(self) -> np.ndarray:
        return self.moments[("n",)].real


def evolve_exact(
    spec: SmallSystemSpec,
    rho0: np.ndarray,
    t_span: tuple[float, float],
    grid: np.ndarray,
    grouping: list[tuple[int, ...]] | None = None,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
    trace_tol: float = 1e-8,
) -> ExactTimeSeries:
    """Propagate rho exactly and sample every tracked moment on ``grid``.

    Integration runs piecewise between drive discontinuities with the same
    adaptive embedded Runge-Kutta contract as the mean-field integrator.
    Aborts if the trace drifts beyond ``trace_tol`` (cutoff too small or
    tolerance too loose).
    """
    liou = build_liouvillian(spec)
    if grouping is None:
        grouping = [(i,) for i in range(spec.n_emitters)]
    grid = np.asarray(grid, dtype=float)
    t0, t1 = map(float, t_span)
    if not (t1 > t0):
        raise OracleError(f"empty time span {t_span!r}")
    if grid.size and (grid[0] < t0 - 1e-18 or grid[-1] > t1 + 1e-18):
        raise OracleError("grid extends beyond t_span")

    cuts = sorted({t0, t1, *[b for b in spec.drive.breakpoints() if t0 < b < t1]})
    vec = np.asarray(rho0, dtype=complex).reshape(-1).copy()
    if vec.shape != (spec.dim * spec.dim,):
        raise OracleError(f"rho0 has wrong shape {np.shape(rho0)} for dim {spec.dim}")

    sample_times: list[float] = []
    sample_vecs: list[np.ndarray] = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        fmid = spec.drive.amplitude_at(0.5 * (a + b))
        lmat = liou.matrix(fmid)
        inside = grid[(grid >= a) & (grid < b)] if b < t1 else grid[(grid >= a) & (grid <= b)]
        t_eval = np.unique(np.concatenate([inside, [b]]))
        sol = solve_ivp(
            lambda t, y: lmat @ y,
            (a, b),
            vec,
            method="RK45",
            t_eval=t_eval,
            rtol=rel_tol,
            atol=abs_tol,
        )
        if not sol.success:
            raise OracleError(f"exact propagation failed at t={sol.t[-1] if sol.t.size else a}: {sol.message}")
        for tt, yy in zip(sol.t, sol.y.T):
            if tt == b and not np.any(grid == b):
                continue  # segment endpoint kept only when the grid asks for it
            if sample_times and tt <= sample_times[-1]:
                continue
            sample_times.append(tt)
            sample_vecs.append(yy)
        vec = sol.y[:, -1].copy()

    mops = _moment_operators(liou, grouping)
    times = np.array(sample_times)
    n_t = times.size
    moments = {m: np.empty(n_t, dtype=complex) for m in mops}
    trace_err = np.empty(n_t)
    herm_err = np.empty(n_t)
    min_eig = np.empty(n_t)
    top_pop = np.empty(n_t)
    top_mask = liou.ops.number_projectors()[-1]
    for s, v in enumerate(sample_vecs):
        rho = v.reshape(spec.dim, spec.dim)
        tr = np.trace(rho)
        trace_err[s] = abs(tr - 1.0)
        herm_err[s] = float(np.max(np.abs(rho - rho.conj().T)))
        min_eig[s] = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
        top_pop[s] = float(np.real(np.sum(top_mask * np.diag(rho))))
        for m, op in mops.items():
            # Tr(rho O) with row-major contraction
            moments[m][s] = np.einsum("ij,ji->", rho, op)
    if np.any(trace_err > trace_tol):
        worst = float(times[int(np.argmax(trace_err))])
        raise OracleError(
            f"trace drifted by {trace_err.max():.2e} (> {trace_tol:.0e}) at t={worst:.3e}; "
            "increase fock_cutoff or tighten tolerances"
        )
    return ExactTimeSeries(
        times=times,
        moments=moments,
        trace_error=trace_err,
        hermiticity_error=herm_err,
        min_eigenvalue=min_eig,
        top_fock_population=top_pop,
        final_rho=sample_vecs[-1].reshape(spec.dim, spec.dim),
    )


def choose_fock_cutoff(
    spec: SmallSystemSpec,
    rho0_builder,
    t_span: tuple[float, float],
    grid: np.ndarray,
    start: int = 2,
    observable_tol: float = 1e-6,
    max_cutoff: int = 30,
) -> tuple[int, ExactTimeSeries]:
    """Raise the Fock cutoff until photon-number traces stop changing.

    Reruns with n_max + 2 and accepts once the maximum change of <a^dag a>
    over the grid falls below ``observable_tol``.
    """
    n_max = start
    prev = evolve_exact(spec.with_cutoff(n_max), rho0_builder(spec.with_cutoff(n_max)), t_span, grid)
    while n_max + 2 <= max_cutoff:
        trial_spec = spec.with_cutoff(n_max + 2)
        trial = evolve_exact(trial_spec, rho0_builder(trial_spec), t_span, grid)
        if np.max(np.abs(trial.n_photons - prev.n_photons)) < observable_tol:
            return n_max + 2, trial
        n_max += 2
        prev = trial
    raise OracleError(f"Fock cutoff did not converge below n_max={max_cutoff}")


def compare_channels(
    times: np.ndarray,
    exact: dict,
    approximate: dict,
    floor: float = 1e-30,
) -> dict:
    """Per-channel deviation report between exact and approximate traces.

    The relative deviation of a channel is max_t |approx - exact| divided
    by max_t |exact| (trace-maximum normalization, robust at zero
    crossings).  Returns a JSON-ready dict.
    """
    report = {}
    for name, ex in exact.items():
        ap = approximate[name]
        diff = np.abs(np.asarray(ap) - np.asarray(ex))
        scale = max(float(np.max(np.abs(ex))), floor)
        idx = int(np.argmax(diff))
        report[name] = {
            "max_relative_deviation": float(diff[idx] / scale),
            "time_of_max_deviation": float(times[idx]),
            "scale": scale,
        }
    return report


def state_from_exact(layout: StateLayout, series: ExactTimeSeries, sample: int) -> CumulantState:
    """Pack the exact moments at one sample into a mean-field state vector."""
    data = np.zeros(layout.size, dtype=complex)
    state = CumulantState(layout, data)
    for m in layout:
        if m in series.moments:  # singleton groups have no same-class moments
            state.set(m, series.moments[m][sample])
    return state
