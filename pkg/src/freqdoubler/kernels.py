"""Inner-loop numerics: square-law stamping, MNA assembly, dense LU, Goertzel.

Everything here is written in the subset of Python/numpy that numba compiles,
so the same source is the fallback path when numba is switched off.

Node indices follow the circuit numbering: 0 is ground, node ``i`` owns
unknown ``i - 1``. Branch unknowns (voltage sources, then VCVS) follow the
node unknowns.
"""
import math

import numpy as np

from ._jit import njit

CUTOFF = 0
TRIODE = 1
SATURATION = 2


@njit
def square_law(vgs, vds, vt, k, lam):
    """NMOS-frame drain current and partials for ``vds >= 0``.

    Returns ``(id, gm, gds, region)``.
    """
    ov = vgs - vt
    if ov <= 0.0:
        return 0.0, 0.0, 0.0, CUTOFF
    clm = 1.0 + lam * vds
    if vds >= ov:
        base = k * ov * ov
        return base * clm, 2.0 * k * ov * clm, base * lam, SATURATION
    # written as (2ov - vds)*vds so the boundary value equals k*ov*ov bit for bit
    base = k * (2.0 * ov - vds) * vds
    gm = 2.0 * k * vds * clm
    gds = 2.0 * k * (ov - vds) * clm + base * lam
    return base * clm, gm, gds, TRIODE


@njit
def mos_terminal(pol, k, vto, lam, vd, vg, vs):
    """Drain-to-source current of a MOS device at absolute terminal voltages.

    ``pol`` is +1 for NMOS, -1 for PMOS. Source and drain swap roles when the
    reflected drain sits below the source. Returns
    ``(ids, d_ids/d_vd, d_ids/d_vg, d_ids/d_vs, region)``.
    """
    d = pol * vd
    g = pol * vg
    s = pol * vs
    vt = pol * vto
    if d >= s:
        i, gm, gds, reg = square_law(g - s, d - s, vt, k, lam)
        return pol * i, gds, gm, -gm - gds, reg
    i, gm, gds, reg = square_law(g - d, s - d, vt, k, lam)
    return -pol * i, gm + gds, -gm, -gds, reg


@njit
def _v(x, node):
    if node == 0:
        return 0.0
    return x[node - 1]


@njit
def _stamp_conductance(jac, res, scale, a, b, g, i):
    # i flows a -> b through the element, g = di/d(va - vb)
    if a > 0:
        res[a - 1] += i
        scale[a - 1] += abs(i)
        jac[a - 1, a - 1] += g
        if b > 0:
            jac[a - 1, b - 1] -= g
    if b > 0:
        res[b - 1] -= i
        scale[b - 1] += abs(i)
        jac[b - 1, b - 1] += g
        if a > 0:
            jac[b - 1, a - 1] -= g


@njit
def _stamp_current(res, scale, a, b, i):
    if a > 0:
        res[a - 1] += i
        scale[a - 1] += abs(i)
    if b > 0:
        res[b - 1] -= i
        scale[b - 1] += abs(i)


@njit
def assemble(x, n_nodes,
             r_a, r_b, r_g,
             c_a, c_b, c_geq, c_hist,
             v_p, v_n, v_val,
             i_p, i_n, i_val,
             m_d, m_g, m_s, m_pol, m_k, m_vto, m_lam,
             e_p, e_n, e_cp, e_cn, e_gain,
             f_p, f_n, f_ctrl, f_gain,
             gmin, jac, res, scale):
    """Fill the Jacobian and residual of the MNA system at ``x``.

    Node rows hold the sum of currents leaving the node; branch rows hold the
    constraint violation. ``scale`` collects the magnitudes of all currents
    incident on each node (used by the KCL convergence bound).
    """
    jac[:, :] = 0.0
    res[:] = 0.0
    scale[:] = 0.0
    n_v = v_p.shape[0]

    for j in range(r_a.shape[0]):
        a = r_a[j]
        b = r_b[j]
        g = r_g[j]
        _stamp_conductance(jac, res, scale, a, b, g, g * (_v(x, a) - _v(x, b)))

    for j in range(c_a.shape[0]):
        a = c_a[j]
        b = c_b[j]
        g = c_geq[j]
        if g != 0.0 or c_hist[j] != 0.0:
            i = g * (_v(x, a) - _v(x, b)) - c_hist[j]
            _stamp_conductance(jac, res, scale, a, b, g, i)

    for j in range(n_v):
        br = n_nodes + j
        a = v_p[j]
        b = v_n[j]
        cur = x[br]
        _stamp_current(res, scale, a, b, cur)
        if a > 0:
            jac[a - 1, br] += 1.0
            jac[br, a - 1] += 1.0
        if b > 0:
            jac[b - 1, br] -= 1.0
            jac[br, b - 1] -= 1.0
        res[br] = _v(x, a) - _v(x, b) - v_val[j]

    for j in range(i_p.shape[0]):
        _stamp_current(res, scale, i_p[j], i_n[j], i_val[j])

    for j in range(m_d.shape[0]):
        d = m_d[j]
        g = m_g[j]
        s = m_s[j]
        ids, dd, dg, ds, _ = mos_terminal(m_pol[j], m_k[j], m_vto[j], m_lam[j],
                                          _v(x, d), _v(x, g), _v(x, s))
        if d > 0:
            res[d - 1] += ids
            scale[d - 1] += abs(ids)
            jac[d - 1, d - 1] += dd
            if g > 0:
                jac[d - 1, g - 1] += dg
            if s > 0:
                jac[d - 1, s - 1] += ds
        if s > 0:
            res[s - 1] -= ids
            scale[s - 1] += abs(ids)
            jac[s - 1, s - 1] -= ds
            if g > 0:
                jac[s - 1, g - 1] -= dg
            if d > 0:
                jac[s - 1, d - 1] -= dd

    for j in range(e_p.shape[0]):
        br = n_nodes + n_v + j
        a = e_p[j]
        b = e_n[j]
        ca = e_cp[j]
        cb = e_cn[j]
        gain = e_gain[j]
        _stamp_current(res, scale, a, b, x[br])
        if a > 0:
            jac[a - 1, br] += 1.0
            jac[br, a - 1] += 1.0
        if b > 0:
            jac[b - 1, br] -= 1.0
            jac[br, b - 1] -= 1.0
        if ca > 0:
            jac[br, ca - 1] -= gain
        if cb > 0:
            jac[br, cb - 1] += gain
        res[br] = _v(x, a) - _v(x, b) - gain * (_v(x, ca) - _v(x, cb))

    for j in range(f_p.shape[0]):
        a = f_p[j]
        b = f_n[j]
        br = n_nodes + f_ctrl[j]
        gain = f_gain[j]
        _stamp_current(res, scale, a, b, gain * x[br])
        if a > 0:
            jac[a - 1, br] += gain
        if b > 0:
            jac[b - 1, br] -= gain

    if gmin > 0.0:
        for i in range(n_nodes):
            cur = gmin * x[i]
            res[i] += cur
            scale[i] += abs(cur)
            jac[i, i] += gmin


@njit
def lu_factor(a, rel_tiny):
    """In-place LU with partial pivoting.

    Returns ``(perm, bad)`` where ``bad`` is -1 on success or the column whose
    best pivot fell below ``rel_tiny * max|a|``.
    """
    n = a.shape[0]
    perm = np.arange(n)
    if n == 0:
        return perm, -1
    tiny = rel_tiny * np.max(np.abs(a))
    for k in range(n):
        p = k + np.argmax(np.abs(a[k:, k]))
        if not abs(a[p, k]) > tiny:
            return perm, k
        if p != k:
            row = a[k, :].copy()
            a[k, :] = a[p, :]
            a[p, :] = row
            t = perm[k]
            perm[k] = perm[p]
            perm[p] = t
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return perm, -1


@njit
def lu_solve(lu, perm, b):
    n = lu.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = b[perm[i]]
    for i in range(n):
        y[i] -= np.sum(lu[i, :i] * y[:i])
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - np.sum(lu[i, i + 1:] * y[i + 1:])) / lu[i, i]
    return y


@njit
def goertzel_bin(x, omega):
    """Single DFT bin ``sum x[n] exp(-j omega n)`` via the Goertzel recurrence."""
    c = 2.0 * math.cos(omega)
    s1 = 0.0
    s2 = 0.0
    for n in range(x.shape[0]):
        s0 = x[n] + c * s1 - s2
        s2 = s1
        s1 = s0
    return math.cos(omega) * s1 - s2, math.sin(omega) * s1
