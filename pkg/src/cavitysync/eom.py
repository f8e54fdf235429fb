"""Right-hand side of the second-order mean-field moment equations.

The hierarchy of moment equations is closed at second order: every
third-order correlation is replaced by the factorization

    <ABC> ~ <AB><C> + <BC><A> + <AC><B> - 2<A><B><C>

after rewriting non-normal-ordered field products once via
``<a a^dag X> = <a^dag a X> + <X>``.  The full equation set, including the
conventions adopted for the shifted frequencies and the dissipator terms,
is written out in docs/EQUATIONS.md; every coefficient is validated at
machine precision against the exact Lindblad generator in the test suite.

Two evaluation routes exist on purpose: :func:`rhs_reference` is a plain,
readable transcription with a pluggable third-order moment provider, and
the compiled kernel in :mod:`cavitysync._kernel` is the production path.
Both are serial and deterministic; the test suite pins them against each
other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    CumulantState,
    DrivePulse,
    FrequencyClass,
    ModelError,
    PhysicalParams,
    StateLayout,
    build_layout,
    expand_pair_moment,
    pair_offset,
)

__all__ = [
    "ModelSystem",
    "factorize_third_order",
    "rhs",
    "rhs_flat",
    "rhs_reference",
    "total_excitation",
    "collective_purcell_rate",
]

AS_PRINTED = "as_printed"
NO_COMMUTATOR = "no_commutator"
ORDERING_VARIANTS = (AS_PRINTED, NO_COMMUTATOR)


def factorize_third_order(ab, bc, ac, a, b, c):
    """Second-order factorization of a third-order moment <ABC>."""
    return ab * c + bc * a + ac * b - 2.0 * a * b * c


@dataclass
class ModelSystem:
    """Everything the equations of motion need, with derived arrays cached.

    ``ordering_variant`` switches the constant term produced by the
    ``<a a^dag sigma^->`` product in the <a sigma^z> equation:
    ``as_printed`` keeps the commutator (+<sigma^->), ``no_commutator``
    treats the product as already normal ordered.  The default is the
    commutator form, which is what the operator algebra gives.
    """

    params: PhysicalParams
    classes: tuple
    drive: DrivePulse
    layout: StateLayout
    ordering_variant: str = AS_PRINTED
    delta: np.ndarray = field(init=False, repr=False)
    g: np.ndarray = field(init=False, repr=False)
    n_emitters: np.ndarray = field(init=False, repr=False)
    g_n: np.ndarray = field(init=False, repr=False)
    n_minus_1: np.ndarray = field(init=False, repr=False)
    omega_k: np.ndarray = field(init=False, repr=False)
    omega_c: complex = field(init=False, repr=False)

    def __post_init__(self):
        self.classes = tuple(self.classes)
        if not self.classes:
            raise ModelError("at least one frequency class is required")
        if not all(isinstance(c, FrequencyClass) for c in self.classes):
            raise ModelError("classes must be FrequencyClass instances")
        if self.layout.n_classes != len(self.classes):
            raise ModelError(
                f"layout has {self.layout.n_classes} classes, got {len(self.classes)}"
            )
        if self.ordering_variant not in ORDERING_VARIANTS:
            raise ModelError(f"unknown ordering variant {self.ordering_variant!r}")
        p = self.params
        self.delta = np.array([c.delta_k for c in self.classes])
        self.g = np.array([c.g for c in self.classes])
        self.n_emitters = np.array([float(c.n_emitters) for c in self.classes])
        self.g_n = self.g * self.n_emitters
        self.n_minus_1 = self.n_emitters - 1.0
        # shifted complex frequencies; the dephasing rate enters linearly
        self.omega_k = self.delta - 1j * (0.5 * (p.gamma + p.eta) + p.gamma_phi)
        self.omega_c = p.delta_c - 0.5j * p.kappa
        assert np.all(self.omega_k.imag <= 0.0) and self.omega_c.imag <= 0.0

    @classmethod
    def build(
        cls,
        params: PhysicalParams,
        classes,
        drive: DrivePulse | None = None,
        ordering_variant: str = AS_PRINTED,
    ) -> "ModelSystem":
        classes = tuple(classes)
        return cls(
            params=params,
            classes=classes,
            drive=drive if drive is not None else DrivePulse.off(),
            layout=build_layout(len(classes)),
            ordering_variant=ordering_variant,
        )

    @property
    def n_classes(self) -> int:
        return self.layout.n_classes

    def drive_amplitude(self, t: float) -> float:
        return self.drive.amplitude_at(t)

    def resonant_class(self) -> int:
        """Index of the class closest to the cavity detuning."""
        return int(np.argmin(np.abs(self.delta - self.params.delta_c)))


def collective_purcell_rate(system: ModelSystem) -> float:
    """g^2 N / kappa with N summed over all classes (rad/s)."""
    if system.params.kappa <= 0.0:
        return 0.0
    return float(np.sum(system.g ** 2 * system.n_emitters) / system.params.kappa)


def total_excitation(system: ModelSystem, state: CumulantState) -> float:
    """<a^dag a> + sum_k N_k (<sigma^z_k> + 1) / 2.

    Conserved along trajectories of the closed system (all rates and the
    drive zero); the cancellation between the photon-number and inversion
    equations is exact and independent of the closure.
    """
    n = state.data[2].real
    sz = state.sz()
    return float(n + np.sum(system.n_emitters * (sz + 1.0) * 0.5))


def _closure_provider(system: ModelSystem, state: CumulantState):
    """Third-order moments from the second-order factorization."""
    get = state.get

    def pair(kind, i, j):
        return expand_pair_moment(state, (kind, i, j))

    al = get(("a",))
    a2 = get(("a2",))
    n = get(("n",))

    def provider(req):
        kind = req[0]
        if kind in ("a2sz", "a2sp", "nsm", "nsz", "a_szsz", "a_smsp", "ad_smsm",
                    "a_spsz", "a_smsz") and len(req) == 2:
            k = req[1]
            sm = get(("sm", k))
            sz = get(("sz", k))
            asz = get(("asz", k))
            asm = get(("asm", k))
            asp = get(("asp", k))
            sp = np.conj(sm)
            if kind == "a2sz":
                return factorize_third_order(a2, asz, asz, al, al, sz)
            if kind == "a2sp":
                return factorize_third_order(a2, asp, asp, al, al, sp)
            if kind == "nsm":
                # <a^dag a sm>: pairings (a^dag a), (a sm), (a^dag sm)
                return factorize_third_order(n, asm, np.conj(asp), np.conj(al), al, sm)
            if kind == "nsz":
                return factorize_third_order(n, asz, np.conj(asz), np.conj(al), al, sz)
            smsz = get(("smsz", k))
            smsp = get(("smsp", k))
            smsm = get(("smsm", k))
            szsz = get(("szsz", k))
            if kind == "a_szsz":
                return factorize_third_order(asz, szsz, asz, al, sz, sz)
            if kind == "a_smsp":
                return factorize_third_order(asm, smsp, asp, al, sm, sp)
            if kind == "ad_smsm":
                return factorize_third_order(np.conj(asp), smsm, np.conj(asp), np.conj(al), sm, sm)
            if kind == "a_spsz":
                return factorize_third_order(asp, np.conj(smsz), asz, al, sp, sz)
            if kind == "a_smsz":
                return factorize_third_order(asm, smsz, asz, al, sm, sz)
        if len(req) == 3:
            _, i, j = req
            sm_i, sz_i = get(("sm", i)), get(("sz", i))
            sm_j, sz_j = get(("sm", j)), get(("sz", j))
            asz_i, asm_i, asp_i = get(("asz", i)), get(("asm", i)), get(("asp", i))
            asz_j, asm_j, asp_j = get(("asz", j)), get(("asm", j)), get(("asp", j))
            if kind == "a_szsm":
                return factorize_third_order(asz_i, pair("szsm", i, j), asm_j, al, sz_i, sm_j)
            if kind == "ad_smsm":
                return factorize_third_order(
                    np.conj(asp_i), pair("smsm", i, j), np.conj(asp_j), np.conj(al), sm_i, sm_j
                )
            if kind == "a_spsm":
                return factorize_third_order(
                    asp_i, pair("spsm", i, j), asm_j, al, np.conj(sm_i), sm_j
                )
            if kind == "a_szsz":
                return factorize_third_order(asz_i, pair("szsz", i, j), asz_j, al, sz_i, sz_j)
            if kind == "a_spsz":
                return factorize_third_order(
                    asp_i, np.conj(pair("szsm", j, i)), asz_j, al, np.conj(sm_i), sz_j
                )
            if kind == "ad_szsm":
                return factorize_third_order(
                    np.conj(asz_i), pair("szsm", i, j), np.conj(asp_j), np.conj(al), sz_i, sm_j
                )
        raise ModelError(f"unknown third-order request {req!r}")

    return provider


def rhs_reference(
    system: ModelSystem,
    t: float,
    y: np.ndarray,
    third_order=None,
) -> np.ndarray:
    """Plain transcription of the moment equations (validation route).

    ``third_order`` maps a third-order moment request to its value; by
    default the second-order factorization closure is used.  Passing exact
    moments instead turns this into the exact (pre-closure) equation set.
    """
    layout = system.layout
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (layout.size,):
        raise ModelError(f"state length {y.shape} does not match layout size {layout.size}")
    state = CumulantState(layout, y.copy())
    provider = third_order if third_order is not None else _closure_provider(system, state)
    get = state.get
    p = system.params
    gamma, eta, kappa = p.gamma, p.eta, p.kappa
    wc = system.omega_c
    f_t = system.drive_amplitude(t)
    keep_commutator = system.ordering_variant == AS_PRINTED

    dy = np.zeros_like(y)
    out = CumulantState(layout, dy)

    al = get(("a",))
    a2 = get(("a2",))
    n = get(("n",))
    k_count = layout.n_classes

    # cross-class sums entering the per-class equations
    c_szsm = np.zeros(k_count, dtype=complex)
    c_smsm = np.zeros(k_count, dtype=complex)
    c_spsm = np.zeros(k_count, dtype=complex)
    for k in range(k_count):
        for j in range(k_count):
            if j == k:
                continue
            gn = system.g_n[j]
            c_szsm[k] += gn * expand_pair_moment(state, ("szsm", k, j))
            c_smsm[k] += gn * expand_pair_moment(state, ("smsm", k, j))
            c_spsm[k] += gn * expand_pair_moment(state, ("spsm", k, j))

    sm_all = np.array([get(("sm", k)) for k in range(k_count)])
    asm_all = np.array([get(("asm", k)) for k in range(k_count)])
    asp_all = np.array([get(("asp", k)) for k in range(k_count)])

    out.set(("a",), -1j * wc * al - 1j * np.sum(system.g_n * sm_all) - 1j * f_t)
    out.set(("a2",), -2j * wc * a2 - 2j * np.sum(system.g_n * asm_all) - 2j * f_t * al)
    out.set(("n",), -2.0 * np.sum(system.g_n * asp_all.imag) - 2.0 * f_t * al.imag - kappa * n)

    for k in range(k_count):
        g = system.g[k]
        nm1 = system.n_minus_1[k]
        w = system.omega_k[k]
        sm = get(("sm", k))
        sz = get(("sz", k))
        asz = get(("asz", k))
        asm = get(("asm", k))
        asp = get(("asp", k))
        smsz = get(("smsz", k))
        smsp = get(("smsp", k))
        smsm = get(("smsm", k))
        szsz = get(("szsz", k))
        sp = np.conj(sm)

        a2sp = provider(("a2sp", k))
        a2sz = provider(("a2sz", k))
        aadag_sm = provider(("nsm", k)) + (sm if keep_commutator else 0.0)
        aadag_sz = provider(("nsz", k)) + sz
        a_szsz = provider(("a_szsz", k))
        a_smsp = provider(("a_smsp", k))
        ad_smsm = provider(("ad_smsm", k))
        a_spsz = provider(("a_spsz", k))
        a_smsz = provider(("a_smsz", k))

        out.set(("sm", k), -1j * w * sm + 1j * g * asz)
        out.set(("sz", k), 4.0 * g * asp.imag - gamma * (1.0 + sz) + eta * (1.0 - sz))
        out.set(
            ("asz", k),
            -1j * wc * asz
            - 1j * g * (sm + nm1 * smsz)
            - 1j * c_szsm[k]
            - 2j * g * (a2sp - aadag_sm)
            - gamma * (al + asz)
            + eta * (al - asz)
            - 1j * f_t * sz,
        )
        out.set(
            ("asm", k),
            -1j * (wc + w) * asm
            - 1j * g * (nm1 * smsm - a2sz)
            - 1j * c_smsm[k]
            - 1j * f_t * sm,
        )
        out.set(
            ("asp", k),
            1j * (np.conj(w) - wc) * asp
            - 0.5j * g * (1.0 - sz)
            - 1j * g * nm1 * smsp
            - 1j * c_spsm[k]
            - 1j * g * aadag_sz
            - 1j * f_t * sp,
        )
        out.set(
            ("smsz", k),
            -1j * w * smsz
            + 1j * g * a_szsz
            - 2j * g * (a_smsp - ad_smsm)
            - gamma * (sm + smsz)
            + eta * (sm - smsz),
        )
        out.set(("smsp", k), 2.0 * w.imag * smsp - 2.0 * g * a_spsz.imag)
        out.set(("smsm", k), -2j * w * smsm + 2j * g * a_smsz)
        out.set(
            ("szsz", k),
            8.0 * g * a_spsz.imag - 2.0 * gamma * (sz + szsz) + 2.0 * eta * (sz - szsz),
        )

    for i in range(k_count):
        for j in range(i + 1, k_count):
            g_i, g_j = system.g[i], system.g[j]
            w_i, w_j = system.omega_k[i], system.omega_k[j]
            sm_i, sz_i = get(("sm", i)), get(("sz", i))
            sm_j, sz_j = get(("sm", j)), get(("sz", j))
            smsm = get(("smsm", i, j))
            szsz = get(("szsz", i, j))
            szsm_ij = get(("szsm", i, j))
            szsm_ji = get(("szsm", j, i))
            spsm = get(("spsm", i, j))

            a_szsm_ij = provider(("a_szsm", i, j))
            a_szsm_ji = provider(("a_szsm", j, i))
            a_szsz_ij = provider(("a_szsz", i, j))
            ad_smsm_ij = provider(("ad_smsm", i, j))
            a_spsm_ij = provider(("a_spsm", i, j))
            a_spsm_ji = provider(("a_spsm", j, i))
            a_spsz_ij = provider(("a_spsz", i, j))
            a_spsz_ji = provider(("a_spsz", j, i))
            ad_szsm_ij = provider(("ad_szsm", i, j))

            out.set(
                ("smsm", i, j),
                -1j * (w_i + w_j) * smsm + 1j * g_i * a_szsm_ij + 1j * g_j * a_szsm_ji,
            )
            out.set(
                ("szsz", i, j),
                4.0 * g_i * a_spsz_ij.imag
                + 4.0 * g_j * a_spsz_ji.imag
                - gamma * (sz_i + sz_j + 2.0 * szsz)
                + eta * (sz_i + sz_j - 2.0 * szsz),
            )
            out.set(
                ("szsm", i, j),
                -1j * w_j * szsm_ij
                + 1j * g_j * a_szsz_ij
                - 2j * g_i * (a_spsm_ij - ad_smsm_ij)
                - gamma * (sm_j + szsm_ij)
                + eta * (sm_j - szsm_ij),
            )
            out.set(
                ("szsm", j, i),
                -1j * w_i * szsm_ji
                + 1j * g_i * a_szsz_ij
                - 2j * g_j * (a_spsm_ji - ad_smsm_ij)
                - gamma * (sm_i + szsm_ji)
                + eta * (sm_i - szsm_ji),
            )
            out.set(
                ("spsm", i, j),
                -1j * (w_j - np.conj(w_i)) * spsm
                + 1j * g_j * a_spsz_ij
                - 1j * g_i * ad_szsm_ij,
            )
    return dy


_kernel_rhs = None


def _load_kernel():
    global _kernel_rhs
    if _kernel_rhs is None:
        from ._kernel import kernel_rhs

        _kernel_rhs = kernel_rhs
    return _kernel_rhs


def rhs_flat(system: ModelSystem, t: float, y: np.ndarray, fast: bool = True) -> np.ndarray:
    """Derivative of the flat moment vector at time ``t``."""
    if not fast:
        return rhs_reference(system, t, y)
    kernel = _load_kernel()
    y = np.ascontiguousarray(y, dtype=np.complex128)
    if y.shape != (system.layout.size,):
        raise ModelError(
            f"state length {y.shape} does not match layout size {system.layout.size}"
        )
    dy = np.empty_like(y)
    kernel(
        y,
        dy,
        float(system.drive_amplitude(t)),
        system.omega_c,
        float(system.params.kappa),
        float(system.params.gamma),
        float(system.params.eta),
        system.omega_k,
        system.g,
        system.g_n,
        system.n_minus_1,
        system.layout.n_classes,
        system.ordering_variant == AS_PRINTED,
    )
    return dy


def rhs(system: ModelSystem, t: float, state: CumulantState, fast: bool = True) -> CumulantState:
    """Derivative of every stored moment, as a state-shaped object."""
    return CumulantState(system.layout, rhs_flat(system, t, state.data, fast=fast))
