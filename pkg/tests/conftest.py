import itertools

import numpy as np
import pytest

from cavitysync import (
    DrivePulse,
    FrequencyClass,
    ModelSystem,
    PhysicalParams,
    SmallSystemSpec,
    build_liouvillian,
)

TWO_PI = 2.0 * np.pi


def hz(value):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * value


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_density_matrix(rng, dim):
    """Random positive trace-one density matrix."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_density_matrix_below_cutoff(rng, spec, margin=2):
    """Random density matrix with no support in the top Fock sectors.

    Truncated mode operators satisfy [a, a^dag] = 1 only away from the
    ceiling, so exact moment identities require ``margin`` empty photon
    levels at the top.
    """
    from cavitysync.oracle import Operators

    dim = spec.dim
    rho = random_density_matrix(rng, dim)
    masks = Operators(spec).number_projectors()
    keep = np.zeros(dim)
    for level in range(spec.fock_cutoff + 1 - margin):
        keep += masks[level]
    proj = np.diag(keep)
    rho = proj @ rho @ proj
    return rho / np.trace(rho)


def spin_permutation_matrix(n_photon_levels, n_spins, perm):
    """Permutation operator of the emitter slots on the product space."""
    dim = n_photon_levels * 2 ** n_spins
    p = np.zeros((dim, dim))
    for idx in range(dim):
        n, rest = divmod(idx, 2 ** n_spins)
        bits = [(rest >> (n_spins - 1 - s)) & 1 for s in range(n_spins)]
        permuted = [bits[perm[s]] for s in range(n_spins)]
        new_rest = 0
        for b in permuted:
            new_rest = (new_rest << 1) | b
        p[n * 2 ** n_spins + new_rest, idx] = 1.0
    return p


def symmetrize_groups(rho, n_photon_levels, n_spins, groups):
    """Average rho over emitter permutations within each group."""
    out = np.zeros_like(rho)
    group_perms = []
    for group in groups:
        group_perms.append(list(itertools.permutations(group)))
    count = 0
    for combo in itertools.product(*group_perms):
        perm = list(range(n_spins))
        for group, arrangement in zip(groups, combo):
            for slot, source in zip(group, arrangement):
                perm[slot] = source
        p = spin_permutation_matrix(n_photon_levels, n_spins, perm)
        out += p @ rho @ p.conj().T
        count += 1
    return out / count


def exact_moments_from_rho(liou, rho, grouping):
    """Every stored moment id evaluated exactly on rho."""
    from cavitysync.oracle import _moment_operators

    mops = _moment_operators(liou, grouping)
    return {m: complex(np.einsum("ij,ji->", rho, op)) for m, op in mops.items()}


def exact_third_order_provider(liou, rho, grouping):
    """Third-order moment provider computing exact traces on rho."""
    ops = liou.ops
    first = [g[0] for g in grouping]

    def trace(op):
        return complex(np.einsum("ij,ji->", rho, op))

    def provider(req):
        kind = req[0]
        if len(req) == 2:
            k = req[1]
            group = grouping[k]
            e = group[0]
            if kind == "a2sz":
                return trace(ops.a @ ops.a @ ops.sz[e])
            if kind == "a2sp":
                return trace(ops.a @ ops.a @ ops.sp[e])
            if kind == "nsm":
                return trace(ops.ad @ ops.a @ ops.sm[e])
            if kind == "nsz":
                return trace(ops.ad @ ops.a @ ops.sz[e])
            if len(group) < 2:
                # same-class moments of a singleton class only ever enter
                # the equations multiplied by (N_k - 1) = 0
                return 0.0
            e2 = group[1]
            if kind == "a_szsz":
                return trace(ops.a @ ops.sz[e] @ ops.sz[e2])
            if kind == "a_smsp":
                return trace(ops.a @ ops.sm[e] @ ops.sp[e2])
            if kind == "ad_smsm":
                return trace(ops.ad @ ops.sm[e] @ ops.sm[e2])
            if kind == "a_spsz":
                return trace(ops.a @ ops.sp[e] @ ops.sz[e2])
            if kind == "a_smsz":
                return trace(ops.a @ ops.sm[e] @ ops.sz[e2])
        if len(req) == 3:
            _, i, j = req
            ei, ej = first[i], first[j]
            if kind == "a_szsm":
                return trace(ops.a @ ops.sz[ei] @ ops.sm[ej])
            if kind == "ad_smsm":
                return trace(ops.ad @ ops.sm[ei] @ ops.sm[ej])
            if kind == "a_spsm":
                return trace(ops.a @ ops.sp[ei] @ ops.sm[ej])
            if kind == "a_szsz":
                return trace(ops.a @ ops.sz[ei] @ ops.sz[ej])
            if kind == "a_spsz":
                return trace(ops.a @ ops.sp[ei] @ ops.sz[ej])
            if kind == "ad_szsm":
                return trace(ops.ad @ ops.sz[ei] @ ops.sm[ej])
        raise KeyError(req)

    return provider


def oracle_twin(params, emitters, drive, grouping, fock_cutoff):
    """Matched (exact Liouvillian, mean-field system) pair.

    ``emitters`` lists (detuning, coupling) per oracle emitter; ``grouping``
    collects emitters into mean-field classes, which must hold identical
    emitters.
    """
    spec = SmallSystemSpec(fock_cutoff, emitters, params, drive)
    liou = build_liouvillian(spec)
    classes = []
    for group in grouping:
        d0, g0 = emitters[group[0]]
        for e in group:
            assert emitters[e] == (d0, g0), "grouped emitters must be identical"
        classes.append(FrequencyClass(d0, len(group), g0))
    system = ModelSystem.build(params, classes, drive)
    return spec, liou, system


def make_drive(amplitude, t_on=0.0, t_off=1.0):
    return DrivePulse(amplitude, t_on, t_off)


def default_params(**overrides):
    base = dict(kappa=hz(160e3), gamma=hz(2e6), gamma_phi=0.0, eta=0.0, delta_c=0.0)
    base.update(overrides)
    return PhysicalParams(**base)
