"""Machine-precision validation of the moment equations against the
exact Lindblad generator.

With the third-order closure replaced by exact traces on a density
matrix, every stored moment equation is an operator identity: its value
must equal d<O>/dt = Tr(O L(rho)) for arbitrary rho (group-symmetrized
when a class holds several emitters).  This pins every coefficient,
prefactor and sign of the right-hand side, independent of the closure.

Dephasing stays at zero here: the mean-field shifted frequencies use the
linear-in-Gamma convention while D[sigma_z] damps coherences at twice the
rate (see docs/EQUATIONS.md), so the two routes are compared where their
conventions coincide.
"""

import numpy as np
import pytest

from cavitysync import PhysicalParams
from cavitysync.eom import rhs_reference
from cavitysync.oracle import _moment_operators, state_from_exact

from conftest import (
    exact_moments_from_rho,
    exact_third_order_provider,
    hz,
    make_drive,
    oracle_twin,
    random_density_matrix_below_cutoff,
    symmetrize_groups,
)

SKIP_SINGLETON = ("smsz", "smsp", "smsm", "szsz")


def _pack_state(layout, moments):
    data = np.zeros(layout.size, dtype=complex)
    for m in layout:
        if m in moments:
            data[layout.index_of(m)] = moments[m]
    return data


def _compare_all(liou, system, grouping, rho, t, atol_scale=1e-10):
    moments = exact_moments_from_rho(liou, rho, grouping)
    y = _pack_state(system.layout, moments)
    provider = exact_third_order_provider(liou, rho, grouping)
    dy = rhs_reference(system, t, y, third_order=provider)

    f_t = system.drive_amplitude(t)
    drho = liou.apply(rho, f_t)
    mops = _moment_operators(liou, grouping)

    scale = max(np.max(np.abs(y)), 1.0) * max(
        system.params.kappa, system.params.gamma, np.max(system.g_n), 1.0
    )
    for m, op in mops.items():
        if len(m) == 2 and m[0] in SKIP_SINGLETON and len(grouping[m[1]]) < 2:
            continue
        exact = complex(np.einsum("ij,ji->", rho, op))
        del exact  # value itself already packed; we compare derivatives
        d_exact = complex(np.einsum("ij,ji->", drho, op))
        d_model = dy[system.layout.index_of(m)]
        assert abs(d_model - d_exact) <= atol_scale * scale, (
            f"moment {m}: model {d_model:.12e} vs exact {d_exact:.12e} "
            f"(diff {abs(d_model - d_exact):.3e}, scale {scale:.3e})"
        )


@pytest.mark.parametrize("seed", [0, 1])
def test_two_singleton_classes_with_drive(seed):
    rng = np.random.default_rng(seed)
    params = PhysicalParams(
        kappa=hz(160e3), gamma=hz(400e3), gamma_phi=0.0, eta=hz(50e3), delta_c=hz(30e3)
    )
    emitters = [(hz(-120e3), hz(40e3)), (hz(250e3), hz(25e3))]
    drive = make_drive(hz(80e3), 0.0, 1.0)
    spec, liou, system = oracle_twin(params, emitters, drive, [(0,), (1,)], fock_cutoff=4)
    rho = random_density_matrix_below_cutoff(rng, spec)
    _compare_all(liou, system, [(0,), (1,)], rho, t=0.5)


def test_three_singleton_classes_pumped():
    rng = np.random.default_rng(7)
    params = PhysicalParams(
        kappa=hz(100e3), gamma=hz(1e6), gamma_phi=0.0, eta=hz(300e3), delta_c=0.0
    )
    emitters = [(hz(-1e6), hz(10e3)), (0.0, hz(20e3)), (hz(2e6), hz(15e3))]
    spec, liou, system = oracle_twin(
        params, emitters, make_drive(0.0), [(0,), (1,), (2,)], fock_cutoff=3
    )
    rho = random_density_matrix_below_cutoff(rng, spec)
    _compare_all(liou, system, [(0,), (1,), (2,)], rho, t=0.0)


@pytest.mark.parametrize("n_in_class", [2, 3])
def test_same_class_block_with_identical_emitters(n_in_class):
    # (N_k - 1) prefactors: one class of identical emitters, symmetrized rho
    rng = np.random.default_rng(11 + n_in_class)
    params = PhysicalParams(
        kappa=hz(200e3), gamma=hz(500e3), gamma_phi=0.0, eta=hz(120e3), delta_c=hz(-40e3)
    )
    emitters = [(hz(90e3), hz(30e3))] * n_in_class
    grouping = [tuple(range(n_in_class))]
    drive = make_drive(hz(60e3), 0.0, 1.0)
    spec, liou, system = oracle_twin(params, emitters, drive, grouping, fock_cutoff=3)
    rho = random_density_matrix_below_cutoff(rng, spec)
    rho = symmetrize_groups(rho, spec.fock_cutoff + 1, n_in_class, grouping)
    _compare_all(liou, system, grouping, rho, t=0.2)


def test_mixed_grouping_cross_and_same_class():
    rng = np.random.default_rng(3)
    params = PhysicalParams(
        kappa=hz(150e3), gamma=hz(700e3), gamma_phi=0.0, eta=hz(90e3), delta_c=0.0
    )
    emitters = [(hz(50e3), hz(20e3)), (hz(50e3), hz(20e3)), (hz(-300e3), hz(35e3))]
    grouping = [(0, 1), (2,)]
    drive = make_drive(hz(45e3), 0.0, 1.0)
    spec, liou, system = oracle_twin(params, emitters, drive, grouping, fock_cutoff=3)
    rho = random_density_matrix_below_cutoff(rng, spec)
    rho = symmetrize_groups(rho, spec.fock_cutoff + 1, 3, grouping)
    _compare_all(liou, system, grouping, rho, t=0.1)


def test_ordering_variant_changes_only_the_commutator_term():
    rng = np.random.default_rng(5)
    params = PhysicalParams(kappa=hz(1e5), gamma=hz(1e5), gamma_phi=0.0, eta=0.0, delta_c=0.0)
    emitters = [(0.0, hz(10e3))]
    spec, liou, system = oracle_twin(params, emitters, make_drive(0.0), [(0,)], fock_cutoff=3)
    import dataclasses

    variant = dataclasses.replace(system, ordering_variant="no_commutator")
    rho = random_density_matrix_below_cutoff(rng, spec)
    moments = exact_moments_from_rho(liou, rho, [(0,)])
    y = _pack_state(system.layout, moments)
    d_printed = rhs_reference(system, 0.0, y)
    d_variant = rhs_reference(variant, 0.0, y)
    diff = d_printed - d_variant
    idx_asz = system.layout.index_of(("asz", 0))
    g = system.g[0]
    sm = moments[("sm", 0)]
    # only the <a sigma_z> row changes, by exactly the commutator term 2i g <sm>
    assert abs(diff[idx_asz] - 2j * g * sm) < 1e-12 * max(1.0, abs(g * sm))
    diff[idx_asz] = 0.0
    assert np.max(np.abs(diff)) == 0.0


def test_state_from_exact_round_trip():
    rng = np.random.default_rng(9)
    params = PhysicalParams(kappa=hz(1e5), gamma=hz(2e5), gamma_phi=0.0, eta=0.0, delta_c=0.0)
    emitters = [(0.0, hz(10e3)), (hz(1e5), hz(10e3))]
    spec, liou, system = oracle_twin(params, emitters, make_drive(0.0), [(0,), (1,)], 3)
    rho = random_density_matrix_below_cutoff(rng, spec)
    moments = {m: np.array([v]) for m, v in exact_moments_from_rho(liou, rho, [(0,), (1,)]).items()}

    class FakeSeries:
        pass

    series = FakeSeries()
    series.moments = moments
    state = state_from_exact(system.layout, series, 0)
    for m in system.layout:
        if m in moments:
            assert state.get(m) == moments[m][0]
