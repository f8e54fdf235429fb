"""Compiled right-hand-side kernel for the moment equations.

Mirrors :func:`cavitysync.eom.rhs_reference` term by term with the closure
inlined; the test suite keeps the two in lockstep.  Loops are serial so
evaluation is bitwise deterministic.  fastmath stays off: the dark-state
fixed point relies on exact cancellation of the vacuum terms.

Flat layout (must match cavitysync.model.build_layout):
  0: <a>   1: <a^2>   2: <a^dag a>
  class k at 3 + 9k: sm, sz, asz, asm, asp, smsz, smsp, smsm, szsz
  pair (i < j) at 3 + 9K + 5p, p lexicographic:
      smsm, szsz, szsm(i,j), szsm(j,i), spsm(i,j)
"""

import numpy as np
from numba import njit

__all__ = ["kernel_rhs"]


@njit(cache=True, nogil=True, fastmath=False)
def kernel_rhs(y, dy, f_t, wc, kappa, gamma, eta, wk, g, g_n, n_minus_1, n_classes, commutator):
    K = n_classes
    pair_base = 3 + 9 * K

    al = y[0]
    a2 = y[1]
    n = y[2]
    alc = np.conj(al)
    al_sq = al * al
    al_abs2 = (al * alc).real

    # accumulated sums over classes / pairs
    s_sm = 0.0 + 0.0j
    s_asm = 0.0 + 0.0j
    s_im_asp = 0.0
    for k in range(K):
        cb = 3 + 9 * k
        s_sm += g_n[k] * y[cb]
        s_asm += g_n[k] * y[cb + 3]
        s_im_asp += g_n[k] * y[cb + 4].imag

    # cross-class sums entering the per-class equations
    c_szsm = np.zeros(K, dtype=np.complex128)
    c_smsm = np.zeros(K, dtype=np.complex128)
    c_spsm = np.zeros(K, dtype=np.complex128)
    p = 0
    for i in range(K):
        for j in range(i + 1, K):
            pb = pair_base + 5 * p
            p += 1
            smsm_p = y[pb]
            szsm_ij = y[pb + 2]
            szsm_ji = y[pb + 3]
            spsm_ij = y[pb + 4]
            c_szsm[i] += g_n[j] * szsm_ij
            c_szsm[j] += g_n[i] * szsm_ji
            c_smsm[i] += g_n[j] * smsm_p
            c_smsm[j] += g_n[i] * smsm_p
            c_spsm[i] += g_n[j] * spsm_ij
            c_spsm[j] += g_n[i] * np.conj(spsm_ij)

    dy[0] = -1j * wc * al - 1j * s_sm - 1j * f_t
    dy[1] = -2j * wc * a2 - 2j * s_asm - 2j * f_t * al
    dy[2] = -2.0 * s_im_asp - 2.0 * f_t * al.imag - kappa * n

    for k in range(K):
        cb = 3 + 9 * k
        gk = g[k]
        nm1 = n_minus_1[k]
        w = wk[k]
        sm = y[cb]
        sz = y[cb + 1]
        asz = y[cb + 2]
        asm = y[cb + 3]
        asp = y[cb + 4]
        smsz = y[cb + 5]
        smsp = y[cb + 6]
        smsm = y[cb + 7]
        szsz = y[cb + 8]
        sp = np.conj(sm)

        a2sp = a2 * sp + 2.0 * asp * al - 2.0 * al_sq * sp
        a2sz = a2 * sz + 2.0 * asz * al - 2.0 * al_sq * sz
        nsm = n * sm + asm * alc + np.conj(asp) * al - 2.0 * al_abs2 * sm
        nsz = n * sz + asz * alc + np.conj(asz) * al - 2.0 * al_abs2 * sz
        if commutator:
            aadag_sm = nsm + sm
        else:
            aadag_sm = nsm
        aadag_sz = nsz + sz
        a_szsz = 2.0 * asz * sz + szsz * al - 2.0 * al * sz * sz
        a_smsp = asm * sp + asp * sm + smsp * al - 2.0 * al * sm * sp
        ad_smsm = 2.0 * np.conj(asp) * sm + smsm * alc - 2.0 * alc * sm * sm
        a_spsz = asp * sz + np.conj(smsz) * al + asz * sp - 2.0 * al * sp * sz
        a_smsz = asm * sz + smsz * al + asz * sm - 2.0 * al * sm * sz

        dy[cb] = -1j * w * sm + 1j * gk * asz
        dy[cb + 1] = 4.0 * gk * asp.imag - gamma * (1.0 + sz) + eta * (1.0 - sz)
        dy[cb + 2] = (
            -1j * wc * asz
            - 1j * gk * (sm + nm1 * smsz)
            - 1j * c_szsm[k]
            - 2j * gk * (a2sp - aadag_sm)
            - gamma * (al + asz)
            + eta * (al - asz)
            - 1j * f_t * sz
        )
        dy[cb + 3] = (
            -1j * (wc + w) * asm
            - 1j * gk * (nm1 * smsm - a2sz)
            - 1j * c_smsm[k]
            - 1j * f_t * sm
        )
        dy[cb + 4] = (
            1j * (np.conj(w) - wc) * asp
            - 0.5j * gk * (1.0 - sz)
            - 1j * gk * nm1 * smsp
            - 1j * c_spsm[k]
            - 1j * gk * aadag_sz
            - 1j * f_t * sp
        )
        dy[cb + 5] = (
            -1j * w * smsz
            + 1j * gk * a_szsz
            - 2j * gk * (a_smsp - ad_smsm)
            - gamma * (sm + smsz)
            + eta * (sm - smsz)
        )
        dy[cb + 6] = 2.0 * w.imag * smsp - 2.0 * gk * a_spsz.imag
        dy[cb + 7] = -2j * w * smsm + 2j * gk * a_smsz
        dy[cb + 8] = (
            8.0 * gk * a_spsz.imag - 2.0 * gamma * (sz + szsz) + 2.0 * eta * (sz - szsz)
        )

    p = 0
    for i in range(K):
        cbi = 3 + 9 * i
        g_i = g[i]
        w_i = wk[i]
        sm_i = y[cbi]
        sz_i = y[cbi + 1]
        asz_i = y[cbi + 2]
        asm_i = y[cbi + 3]
        asp_i = y[cbi + 4]
        sp_i = np.conj(sm_i)
        for j in range(i + 1, K):
            cbj = 3 + 9 * j
            g_j = g[j]
            w_j = wk[j]
            sm_j = y[cbj]
            sz_j = y[cbj + 1]
            asz_j = y[cbj + 2]
            asm_j = y[cbj + 3]
            asp_j = y[cbj + 4]
            sp_j = np.conj(sm_j)

            pb = pair_base + 5 * p
            p += 1
            smsm = y[pb]
            szsz = y[pb + 1]
            szsm_ij = y[pb + 2]
            szsm_ji = y[pb + 3]
            spsm = y[pb + 4]

            a_szsm_ij = asz_i * sm_j + szsm_ij * al + asm_j * sz_i - 2.0 * al * sz_i * sm_j
            a_szsm_ji = asz_j * sm_i + szsm_ji * al + asm_i * sz_j - 2.0 * al * sz_j * sm_i
            a_szsz_ij = asz_i * sz_j + szsz * al + asz_j * sz_i - 2.0 * al * sz_i * sz_j
            ad_smsm_ij = (
                np.conj(asp_i) * sm_j
                + smsm * alc
                + np.conj(asp_j) * sm_i
                - 2.0 * alc * sm_i * sm_j
            )
            a_spsm_ij = asp_i * sm_j + spsm * al + asm_j * sp_i - 2.0 * al * sp_i * sm_j
            a_spsm_ji = (
                asp_j * sm_i + np.conj(spsm) * al + asm_i * sp_j - 2.0 * al * sp_j * sm_i
            )
            a_spsz_ij = (
                asp_i * sz_j + np.conj(szsm_ji) * al + asz_j * sp_i - 2.0 * al * sp_i * sz_j
            )
            a_spsz_ji = (
                asp_j * sz_i + np.conj(szsm_ij) * al + asz_i * sp_j - 2.0 * al * sp_j * sz_i
            )
            ad_szsm_ij = (
                np.conj(asz_i) * sm_j
                + szsm_ij * alc
                + np.conj(asp_j) * sz_i
                - 2.0 * alc * sz_i * sm_j
            )

            dy[pb] = -1j * (w_i + w_j) * smsm + 1j * g_i * a_szsm_ij + 1j * g_j * a_szsm_ji
            dy[pb + 1] = (
                4.0 * g_i * a_spsz_ij.imag
                + 4.0 * g_j * a_spsz_ji.imag
                - gamma * (sz_i + sz_j + 2.0 * szsz)
                + eta * (sz_i + sz_j - 2.0 * szsz)
            )
            dy[pb + 2] = (
                -1j * w_j * szsm_ij
                + 1j * g_j * a_szsz_ij
                - 2j * g_i * (a_spsm_ij - ad_smsm_ij)
                - gamma * (sm_j + szsm_ij)
                + eta * (sm_j - szsm_ij)
            )
            dy[pb + 3] = (
                -1j * w_i * szsm_ji
                + 1j * g_i * a_szsz_ij
                - 2j * g_j * (a_spsm_ji - ad_smsm_ij)
                - gamma * (sm_i + szsm_ji)
                + eta * (sm_i - szsm_ji)
            )
            dy[pb + 4] = (
                -1j * (w_j - np.conj(w_i)) * spsm
                + 1j * g_j * a_spsz_ij
                - 1j * g_i * ad_szsm_ij
            )
