"""Domain types and the canonical flat layout of the moment vector.

The simulator tracks first and second moments of a cavity mode coupled to
``k`` frequency classes of identical two-level emitters.  All moments are
stored in one flat complex array.  Cross-class second moments are stored
once per unordered class pair; the redundant orderings follow from exact
operator identities (see :func:`expand_pair_moment`).

Unit convention: every rate and detuning held by these types is an angular
frequency in rad/s.  Configuration files use ordinary frequencies (Hz,
i.e. value/2pi) and are converted once at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import math

import numpy as np

__all__ = [
    "PhysicalParams",
    "FrequencyClass",
    "DrivePulse",
    "StateLayout",
    "CumulantState",
    "build_layout",
    "expand_pair_moment",
    "ground_state",
    "MomentId",
    "CAVITY_KINDS",
    "CLASS_KINDS",
    "PAIR_BLOCK",
]

# A moment identifier is a tuple: ("a",), ("n",), ("a2",) for the cavity
# block; (kind, k) for class k; (kind, k, k') for a cross-class pair.
MomentId = tuple

# Cavity block, in storage order.
CAVITY_KINDS = ("a", "a2", "n")

# Per-class block, in storage order:
#   sm   = <sigma^-_k>            sz   = <sigma^z_k>
#   asz  = <a sigma^z_k>          asm  = <a sigma^-_k>      asp = <a sigma^+_k>
#   smsz = <sigma^-_i sigma^z_i'> (same class, i != i')
#   smsp = <sigma^-_i sigma^+_i'> smsm = <sigma^-_i sigma^-_i'>
#   szsz = <sigma^z_i sigma^z_i'>
CLASS_KINDS = ("sm", "sz", "asz", "asm", "asp", "smsz", "smsp", "smsm", "szsz")

# Per unordered pair (i, j) with i < j, in storage order:
#   smsm = <sigma^-_i sigma^-_j>    szsz = <sigma^z_i sigma^z_j>
#   szsm (i, j) = <sigma^z_i sigma^-_j> and the reversed orientation (j, i);
#   spsm = <sigma^+_i sigma^-_j>
# The szsm moment has no conjugation symmetry, so both orientations are kept.
PAIR_BLOCK = (("smsm", 0, 1), ("szsz", 0, 1), ("szsm", 0, 1), ("szsm", 1, 0), ("spsm", 0, 1))

CAVITY_LEN = 3
CLASS_LEN = 9
PAIR_LEN = 5


class ModelError(ValueError):
    """Invalid physical parameters or state bookkeeping."""


@dataclass(frozen=True)
class PhysicalParams:
    """Global rates and detunings, all in rad/s.

    Attributes
    ----------
    kappa : float
        Cavity energy decay rate.
    gamma : float
        Emitter decay rate.
    gamma_phi : float
        Emitter dephasing rate (enters coherence decay linearly).
    eta : float
        Incoherent pump rate per emitter.
    delta_c : float
        Cavity-pump detuning.
    """

    kappa: float
    gamma: float
    gamma_phi: float = 0.0
    eta: float = 0.0
    delta_c: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "gamma", "gamma_phi", "eta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ModelError(f"{name} must be finite and >= 0, got {v!r}")
        if not math.isfinite(self.delta_c):
            raise ModelError(f"delta_c must be finite, got {self.delta_c!r}")


@dataclass(frozen=True)
class FrequencyClass:
    """One spectral bin: ``n_emitters`` identical emitters at one detuning."""

    delta_k: float  # emitter-pump detuning, rad/s
    n_emitters: int
    g: float  # single-emitter coupling, rad/s

    def __post_init__(self):
        if not math.isfinite(self.delta_k):
            raise ModelError(f"delta_k must be finite, got {self.delta_k!r}")
        if int(self.n_emitters) != self.n_emitters or self.n_emitters < 1:
            raise ModelError(f"n_emitters must be a positive integer, got {self.n_emitters!r}")
        if not math.isfinite(self.g) or self.g < 0.0:
            raise ModelError(f"g must be finite and >= 0, got {self.g!r}")


@dataclass(frozen=True)
class DrivePulse:
    """Square coherent drive: amplitude for t in [t_on, t_off), 0 otherwise."""

    amplitude: float  # rad/s
    t_on: float = 0.0
    t_off: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.amplitude) or self.amplitude < 0.0:
            raise ModelError(f"amplitude must be finite and >= 0, got {self.amplitude!r}")
        if self.t_on > self.t_off:
            raise ModelError(f"t_on ({self.t_on}) must be <= t_off ({self.t_off})")

    def amplitude_at(self, t: float) -> float:
        if self.t_on <= t < self.t_off:
            return self.amplitude
        return 0.0

    def breakpoints(self) -> tuple[float, ...]:
        """Times where the drive is discontinuous."""
        if self.amplitude == 0.0 or self.t_on == self.t_off:
            return ()
        return (self.t_on, self.t_off)

    @property
    def duration(self) -> float:
        return self.t_off - self.t_on

    @staticmethod
    def off() -> "DrivePulse":
        return DrivePulse(0.0, 0.0, 0.0)


def pair_offset(n_classes: int, i: int, j: int) -> int:
    """Index of the unordered pair (i, j), i < j, in lexicographic order."""
    return i * (2 * n_classes - i - 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class StateLayout:
    """Bijective map between moment identifiers and flat-array positions.

    Storage order: cavity block, then per-class blocks in ascending class
    index, then pair blocks in lexicographic (i, j) order with i < j.
    """

    n_classes: int
    index: dict = field(repr=False)
    ids: tuple = field(repr=False)

    @property
    def size(self) -> int:
        k = self.n_classes
        return CAVITY_LEN + CLASS_LEN * k + PAIR_LEN * (k * (k - 1) // 2)

    @property
    def n_pairs(self) -> int:
        k = self.n_classes
        return k * (k - 1) // 2

    def naive_equation_count(self) -> int:
        """Unreduced bookkeeping count (all ordered cross-class moments)."""
        k = self.n_classes
        return 3 + 9 * k + 4 * k * k

    def index_of(self, moment: MomentId) -> int:
        try:
            return self.index[moment]
        except KeyError:
            raise ModelError(f"unknown moment id {moment!r}") from None

    def id_of(self, position: int) -> MomentId:
        return self.ids[position]

    def class_block(self, k: int) -> slice:
        base = CAVITY_LEN + CLASS_LEN * k
        return slice(base, base + CLASS_LEN)

    def pair_block(self, i: int, j: int) -> slice:
        if not 0 <= i < j < self.n_classes:
            raise ModelError(f"pair block requires 0 <= i < j < k, got ({i}, {j})")
        base = CAVITY_LEN + CLASS_LEN * self.n_classes + PAIR_LEN * pair_offset(self.n_classes, i, j)
        return slice(base, base + PAIR_LEN)

    def __iter__(self) -> Iterator[MomentId]:
        return iter(self.ids)


def build_layout(n_classes: int) -> StateLayout:
    """Build the canonical moment layout for ``n_classes`` frequency classes."""
    if int(n_classes) != n_classes or n_classes < 1:
        raise ModelError(f"n_classes must be a positive integer, got {n_classes!r}")
    n_classes = int(n_classes)
    ids: list[MomentId] = [(kind,) for kind in CAVITY_KINDS]
    for k in range(n_classes):
        ids.extend((kind, k) for kind in CLASS_KINDS)
    for i in range(n_classes):
        for j in range(i + 1, n_classes):
            ids.extend((kind, (i, j)[a], (i, j)[b]) for kind, a, b in PAIR_BLOCK)
    index = {m: p for p, m in enumerate(ids)}
    layout = StateLayout(n_classes=n_classes, index=index, ids=tuple(ids))
    assert len(index) == layout.size
    return layout


@dataclass
class CumulantState:
    """Flat complex vector of all stored moments plus its layout."""

    layout: StateLayout
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != (self.layout.size,):
            raise ModelError(
                f"state length {self.data.shape} does not match layout size {self.layout.size}"
            )

    def get(self, moment: MomentId) -> complex:
        return complex(self.data[self.layout.index_of(moment)])

    def set(self, moment: MomentId, value: complex) -> None:
        self.data[self.layout.index_of(moment)] = value

    def copy(self) -> "CumulantState":
        return CumulantState(self.layout, self.data.copy())

    @property
    def n_photons(self) -> float:
        return float(self.data[2].real)

    def sz(self) -> np.ndarray:
        """Real <sigma^z_k> for every class."""
        k = self.layout.n_classes
        base = CAVITY_LEN
        return self.data[base + 1 : base + 1 + CLASS_LEN * k : CLASS_LEN].real.copy()

    def validate(self, atol: float = 1e-9, pop_slack: float = 1e-6) -> list[str]:
        """Return a list of violated state invariants (empty when valid)."""
        problems = []
        k = self.layout.n_classes
        n = self.get(("n",))
        if abs(n.imag) > atol:
            problems.append(f"<a^dag a> has imaginary part {n.imag:.3e}")
        if n.real < -atol:
            problems.append(f"<a^dag a> is negative: {n.real:.3e}")
        for kk in range(k):
            sz = self.get(("sz", kk))
            if abs(sz.imag) > atol:
                problems.append(f"<sz_{kk}> has imaginary part {sz.imag:.3e}")
            if not -1.0 - pop_slack <= sz.real <= 1.0 + pop_slack:
                problems.append(f"<sz_{kk}> = {sz.real:.6f} outside [-1, 1]")
            for kind in ("smsp", "szsz"):
                v = self.get((kind, kk))
                if abs(v.imag) > atol:
                    problems.append(f"<{kind}_{kk}> has imaginary part {v.imag:.3e}")
        return problems


def ground_state(layout: StateLayout) -> CumulantState:
    """All emitters in the ground state, cavity in vacuum.

    <sigma^z> = -1 everywhere, so every z-z second moment equals +1; all
    other moments vanish.
    """
    data = np.zeros(layout.size, dtype=np.complex128)
    state = CumulantState(layout, data)
    for k in range(layout.n_classes):
        state.set(("sz", k), -1.0)
        state.set(("szsz", k), 1.0)
    for i in range(layout.n_classes):
        for j in range(i + 1, layout.n_classes):
            state.set(("szsz", i, j), 1.0)
    return state


_PAIR_KINDS = {"smsm", "szsz", "szsm", "spsm"}


def expand_pair_moment(state: CumulantState, moment: MomentId) -> complex:
    """Value of a cross-class second moment in either orientation.

    Stored orientations (i < j) are returned directly.  Reversed orderings
    follow from exact operator identities for distinct emitters:

    * ``<sm_j sm_i> = <sm_i sm_j>`` and ``<sz_j sz_i> = <sz_i sz_j>``
      (operators on distinct emitters commute);
    * ``<sp_j sm_i> = conj(<sp_i sm_j>)`` (Hermitian conjugate pair);
    * ``<sz_j sm_i>`` is stored explicitly for both orientations.
    """
    if len(moment) != 3 or moment[0] not in _PAIR_KINDS:
        raise ModelError(f"not a cross-class second moment: {moment!r}")
    kind, i, j = moment
    k = state.layout.n_classes
    if i == j or not (0 <= i < k and 0 <= j < k):
        raise ModelError(f"invalid class pair in {moment!r}")
    if kind == "szsm" or i < j:
        return state.get(moment)
    if kind == "spsm":
        return complex(np.conj(state.get(("spsm", j, i))))
    return state.get((kind, j, i))
