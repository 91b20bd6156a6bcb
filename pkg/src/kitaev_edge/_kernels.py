"""Numba amplitude kernels.

Index convention: qubit ``q`` is bit ``q`` of the amplitude index.  Every
Pauli enters as ``(x, z, ph)`` with ``P|m> = ph * (-1)**|m & z| |m ^ x>``.

Loops are sequential so reductions have a fixed order and results are
bit-reproducible.  The exception is ``expvals``, whose sums may be
vectorised; its results are reproducible on a given machine.
"""

import numba as nb
import numpy as np

_NJIT = dict(cache=True, nogil=True)


@nb.njit(inline="always")
def _par(v):
    v ^= v >> 32
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return v & 1


@nb.njit(inline="always")
def _sgn(v):
    return 1.0 - 2.0 * _par(v)


@nb.njit(inline="always")
def _insert_zero(k, bit):
    low = k & ((1 << bit) - 1)
    return ((k >> bit) << (bit + 1)) | low


@nb.njit(**_NJIT)
def apply_pauli(psi, x, z, ph):
    n = psi.shape[0]
    if x == 0:
        for k in range(n):
            psi[k] = ph * _sgn(k & z) * psi[k]
        return
    piv = x & (-x)
    bit = 0
    while (1 << bit) != piv:
        bit += 1
    for h in range(n >> 1):
        k = _insert_zero(h, bit)
        j = k ^ x
        a = psi[k]
        b = psi[j]
        psi[k] = ph * _sgn(j & z) * b
        psi[j] = ph * _sgn(k & z) * a


@nb.njit(**_NJIT)
def add_pauli_image(psi, x, z, ph, sign):
    """psi <- psi + sign * P psi, one pass."""
    n = psi.shape[0]
    if x == 0:
        for k in range(n):
            psi[k] = psi[k] * (1.0 + sign * ph * _sgn(k & z))
        return
    piv = x & (-x)
    bit = 0
    while (1 << bit) != piv:
        bit += 1
    for h in range(n >> 1):
        k = _insert_zero(h, bit)
        j = k ^ x
        a = psi[k]
        b = psi[j]
        psi[k] = a + sign * ph * _sgn(j & z) * b
        psi[j] = b + sign * ph * _sgn(k & z) * a


@nb.njit(**_NJIT)
def expval(psi, x, z, ph):
    """<psi| P |psi> (complex; real for Hermitian P)."""
    n = psi.shape[0]
    acc = 0j
    if x == 0:
        for k in range(n):
            v = psi[k]
            acc += _sgn(k & z) * (v.real * v.real + v.imag * v.imag)
        return ph * acc
    for k in range(n):
        j = k ^ x
        acc += np.conj(psi[k]) * _sgn(j & z) * psi[j]
    return ph * acc


@nb.njit(**_NJIT)
def matrix_element(bra, ket, x, z, ph):
    """<bra| P |ket>."""
    n = ket.shape[0]
    acc = 0j
    for k in range(n):
        j = k ^ x
        acc += np.conj(bra[k]) * _sgn(j & z) * ket[j]
    return ph * acc


@nb.njit(**_NJIT)
def controlled_pauli(psi, control, x, z, ph):
    """Apply P on the control=1 subspace; P must not touch the control qubit."""
    n = psi.shape[0]
    cbit = 1 << control
    for k in range(n):
        if not (k & cbit):
            continue
        j = k ^ x
        if j < k:
            continue
        if x == 0:
            psi[k] = ph * _sgn(k & z) * psi[k]
        else:
            a = psi[k]
            b = psi[j]
            psi[k] = ph * _sgn(j & z) * b
            psi[j] = ph * _sgn(k & z) * a


@nb.njit(**_NJIT)
def fused_rotations(psi, pivots, span, emask, zs, phs, cs, ss, table):
    """Apply exp(i theta_g P_g) for g = 0..G-1 in order, in a single sweep.

    The flip masks of all gates lie in the GF(2) span of ``r`` basis masks;
    each orbit ``k0 ^ span`` is loaded into a local buffer, every gate is
    applied to it, and it is written back.  ``span[e]`` is the XOR of the
    basis masks selected by the bits of ``e``, ``emask[g]`` expresses the
    gate's flip mask in that basis and ``table[g, e] = (-1)**|span[e] & z_g|``.
    """
    n = psi.shape[0]
    r = pivots.shape[0]
    m = 1 << r
    G = emask.shape[0]
    buf = np.empty(m, dtype=np.complex128)
    sig = np.empty(G, dtype=np.float64)
    for h in range(n >> r):
        k0 = h
        for t in range(r):
            k0 = _insert_zero(k0, pivots[t])
        for e in range(m):
            buf[e] = psi[k0 ^ span[e]]
        for g in range(G):
            sig[g] = _sgn(k0 & zs[g])
        for g in range(G):
            c = cs[g]
            isp = 1j * ss[g] * phs[g] * sig[g]
            em = emask[g]
            if em == 0:
                for e in range(m):
                    buf[e] = buf[e] * (c + isp * table[g, e])
            else:
                low = em & (-em)
                for e in range(m):
                    if e & low:
                        continue
                    f = e ^ em
                    a = buf[e]
                    b = buf[f]
                    buf[e] = c * a + isp * table[g, f] * b
                    buf[f] = c * b + isp * table[g, e] * a
        for e in range(m):
            psi[k0 ^ span[e]] = buf[e]


@nb.njit(**_NJIT)
def fused_adjoint(psi, lam, pivots, span, emask, zs, phs, cs, ss, table, grad):
    """Reverse sweep of a fused block for adjoint differentiation.

    On entry ``psi`` is the state after the block and ``lam`` the backward
    state at the same cut.  For each gate in reverse order accumulates
    ``grad[g] += <lam| i P_g |psi>`` and then undoes the gate on both
    vectors.  On exit both vectors sit at the cut before the block.
    """
    n = psi.shape[0]
    r = pivots.shape[0]
    m = 1 << r
    G = emask.shape[0]
    a = np.empty(m, dtype=np.complex128)
    l = np.empty(m, dtype=np.complex128)
    sig = np.empty(G, dtype=np.float64)
    for h in range(n >> r):
        k0 = h
        for t in range(r):
            k0 = _insert_zero(k0, pivots[t])
        for e in range(m):
            idx = k0 ^ span[e]
            a[e] = psi[idx]
            l[e] = lam[idx]
        for g in range(G):
            sig[g] = _sgn(k0 & zs[g])
        for g in range(G - 1, -1, -1):
            c = cs[g]
            pp = phs[g] * sig[g]
            isp = -1j * ss[g] * pp
            em = emask[g]
            acc = 0j
            if em == 0:
                for e in range(m):
                    acc += np.conj(l[e]) * pp * table[g, e] * a[e]
                    fac = c + isp * table[g, e]
                    a[e] = a[e] * fac
                    l[e] = l[e] * fac
            else:
                low = em & (-em)
                for e in range(m):
                    if e & low:
                        continue
                    f = e ^ em
                    ae = a[e]
                    af = a[f]
                    le = l[e]
                    lf = l[f]
                    te = table[g, e]
                    tf = table[g, f]
                    acc += np.conj(le) * pp * tf * af + np.conj(lf) * pp * te * ae
                    a[e] = c * ae + isp * tf * af
                    a[f] = c * af + isp * te * ae
                    l[e] = c * le + isp * tf * lf
                    l[f] = c * lf + isp * te * le
            grad[g] += 1j * acc
        for e in range(m):
            idx = k0 ^ span[e]
            psi[idx] = a[e]
            lam[idx] = l[e]


@nb.njit(**_NJIT)
def pauli_sum_apply(psi, out, gx, gstart, zs, cph, block_bits):
    """out = sum_t c_t P_t psi with terms grouped by flip mask.

    ``gx[g]`` is the flip mask of group ``g`` whose terms are
    ``gstart[g]:gstart[g+1]``; ``cph[t]`` already folds coefficient and
    kernel phase.
    """
    n = psi.shape[0]
    B = min(1 << block_bits, n)
    lomask = B - 1
    ng = gx.shape[0]
    nt = zs.shape[0]
    # low-bit sign tables per term
    tbl = np.empty((nt, B), dtype=np.float64)
    for t in range(nt):
        zl = zs[t] & lomask
        for lo in range(B):
            tbl[t, lo] = _sgn(lo & zl)
    w = np.empty(B, dtype=np.complex128)
    for k0 in range(0, n, B):
        for lo in range(B):
            out[k0 + lo] = 0j
        for g in range(ng):
            x = gx[g]
            m0 = k0 ^ (x & ~lomask)
            xl = x & lomask
            for lo in range(B):
                w[lo] = 0j
            for t in range(gstart[g], gstart[g + 1]):
                c = cph[t] * _sgn(m0 & zs[t] & ~lomask)
                for lo in range(B):
                    w[lo] += c * tbl[t, lo ^ xl]
            for lo in range(B):
                out[k0 + lo] += w[lo] * psi[m0 + (lo ^ xl)]


@nb.njit(**_NJIT)
def product_state(vecs):
    """Amplitudes of the tensor product of single-qubit states ``vecs[q]``."""
    nq = vecs.shape[0]
    n = 1 << nq
    out = np.empty(n, dtype=np.complex128)
    out[0] = 1.0
    size = 1
    for q in range(nq):
        a0 = vecs[q, 0]
        a1 = vecs[q, 1]
        for k in range(size):
            v = out[k]
            out[k] = v * a0
            out[k + size] = v * a1
        size <<= 1
    return out


@nb.njit(**_NJIT)
def fused_sequence(psi, out_psi, pivots, span, emask, zs, phs, table, kinds, signs, acc, scale):
    """Projectors, Paulis and expectation probes applied orbit by orbit in one sweep.

    ``kinds[g]``: 0 multiplies by (1 + signs[g] P_g) / 2, 1 applies P_g,
    2 adds <buf|P_g|buf> to ``acc[g]`` without changing the buffer.
    ``acc[G]`` receives the squared norm of the result.  When ``out_psi``
    has the size of ``psi`` the result times ``scale`` is written there
    (it may be ``psi`` itself); an empty ``out_psi`` makes the sweep read-only.
    """
    n = psi.shape[0]
    r = pivots.shape[0]
    m = 1 << r
    G = emask.shape[0]
    write = out_psi.shape[0] == n
    buf = np.empty(m, dtype=np.complex128)
    sig = np.empty(G, dtype=np.float64)
    loc = np.zeros(G + 1, dtype=np.complex128)
    for h in range(n >> r):
        k0 = h
        for t in range(r):
            k0 = _insert_zero(k0, pivots[t])
        for e in range(m):
            buf[e] = psi[k0 ^ span[e]]
        for g in range(G):
            sig[g] = _sgn(k0 & zs[g])
        for g in range(G):
            pp = phs[g] * sig[g]
            em = emask[g]
            kind = kinds[g]
            if kind == 2:
                a = 0j
                row = table[g]
                if em == 0:
                    for e in range(m):
                        v = buf[e]
                        a += (v.real * v.real + v.imag * v.imag) * row[e]
                else:
                    low = em & (-em)
                    for e in range(m):
                        if e & low:
                            continue
                        f = e ^ em
                        be = buf[e]
                        bf = buf[f]
                        a += np.conj(be) * bf * row[f] + np.conj(bf) * be * row[e]
                loc[g] += pp * a
            elif kind == 0:
                sp = 0.5 * signs[g] * pp
                if em == 0:
                    for e in range(m):
                        buf[e] = buf[e] * (0.5 + sp * table[g, e])
                else:
                    low = em & (-em)
                    for e in range(m):
                        if e & low:
                            continue
                        f = e ^ em
                        a = buf[e]
                        b = buf[f]
                        buf[e] = 0.5 * a + sp * table[g, f] * b
                        buf[f] = 0.5 * b + sp * table[g, e] * a
            else:
                if em == 0:
                    for e in range(m):
                        buf[e] = buf[e] * pp * table[g, e]
                else:
                    low = em & (-em)
                    for e in range(m):
                        if e & low:
                            continue
                        f = e ^ em
                        a = buf[e]
                        b = buf[f]
                        buf[e] = pp * table[g, f] * b
                        buf[f] = pp * table[g, e] * a
        nrm = 0.0
        for e in range(m):
            v = buf[e]
            nrm += v.real * v.real + v.imag * v.imag
        loc[G] += nrm
        if write:
            for e in range(m):
                out_psi[k0 ^ span[e]] = scale * buf[e]
    for g in range(G + 1):
        acc[g] += loc[g]


@nb.njit(inline="always")
def _subset_signs(k0, zs, sv):
    """sv[S] = prod_{i in S} (-1)**|k0 & zs[i]| for every subset S."""
    k = zs.shape[0]
    sv[0] = 1.0
    for i in range(k):
        si = _sgn(k0 & zs[i])
        half = 1 << i
        for S in range(half):
            sv[S | half] = sv[S] * si


@nb.njit(**_NJIT)
def joint_project(psi, pivots, xS, zs, cS):
    """In place, unnormalised: psi <- prod_i (1 + o_i W_i) / 2 psi; returns the squared norm.

    The W_i commute and have independent flip masks, so every orbit
    ``k0 ^ span`` holds a one-dimensional joint eigenspace with entries
    ``cS[S] * sv[S] / sqrt(m)``, where ``cS[S] = o_S * phase(W_S)`` and
    ``xS[S]`` is the flip mask of W_S = prod_{i in S} W_i.  The signs sv
    depend on k0 only through the parities |k0 & zs[i]|, so the orbit
    coefficients are tabulated per parity pattern.
    """
    n = psi.shape[0]
    r = pivots.shape[0]
    m = 1 << r
    sv = np.empty(m, dtype=np.float64)
    fwd = np.empty((m, m), dtype=np.complex128)
    back = np.empty((m, m), dtype=np.complex128)
    for b in range(m):
        sv[0] = 1.0
        for i in range(r):
            si = -1.0 if b >> i & 1 else 1.0
            half = 1 << i
            for S in range(half):
                sv[S | half] = sv[S] * si
        for S in range(m):
            fwd[b, S] = np.conj(cS[S]) * sv[S] / m
            back[b, S] = cS[S] * sv[S]
    nrm = 0.0
    for h in range(n >> r):
        k0 = h
        for t in range(r):
            k0 = _insert_zero(k0, pivots[t])
        b = 0
        for i in range(r):
            b |= _par(k0 & zs[i]) << i
        fr = fwd[b]
        br = back[b]
        c = 0j
        for S in range(m):
            c += fr[S] * psi[k0 ^ xS[S]]
        for S in range(m):
            psi[k0 ^ xS[S]] = c * br[S]
        nrm += m * (c.real * c.real + c.imag * c.imag)
    return nrm


@nb.njit(**_NJIT)
def joint_distribution(psi, pivots, xS, zs, cS, dist):
    """dist[b] += probability of outcomes o_i = (-1)**bit_i(b) for commuting W_i (see joint_project)."""
    n = psi.shape[0]
    r = pivots.shape[0]
    m = 1 << r
    sv = np.empty(m, dtype=np.float64)
    a = np.empty(m, dtype=np.complex128)
    loc = np.zeros(m, dtype=np.float64)
    for h in range(n >> r):
        k0 = h
        for t in range(r):
            k0 = _insert_zero(k0, pivots[t])
        _subset_signs(k0, zs, sv)
        for S in range(m):
            a[S] = np.conj(cS[S]) * sv[S] * psi[k0 ^ xS[S]]
        half = 1
        while half < m:
            for s0 in range(0, m, 2 * half):
                for j in range(s0, s0 + half):
                    u = a[j]
                    v = a[j + half]
                    a[j] = u + v
                    a[j + half] = u - v
            half *= 2
        for b in range(m):
            v = a[b]
            loc[b] += (v.real * v.real + v.imag * v.imag) / m
    for b in range(m):
        dist[b] += loc[b]


@nb.njit(fastmath={"reassoc", "contract"}, **_NJIT)
def expvals(f, xs, zs, phs, out):
    """out[g] = <psi| P_g |psi> for Hermitian Paulis, ``f`` being psi viewed as float64 pairs.

    Within a block the partner index m ^ x runs contiguously over stretches
    set by the lowest flipped bit, so the inner sums are plain float dot
    products.  Only the part of the sum that survives the phase is formed.
    """
    n = f.shape[0] // 2
    G = xs.shape[0]
    B = min(2048, n)
    lomask = B - 1
    F = 2 * B
    wr = np.empty((G, F), dtype=np.float64)
    wi = np.empty((G, F), dtype=np.float64)
    for g in range(G):
        for k in range(F):
            w = _sgn((k >> 1) & zs[g])
            wr[g, k] = w
            wi[g, k] = w if k & 1 == 0 else -w
    loc = np.zeros(G, dtype=np.complex128)
    buf = np.empty(F, dtype=np.float64)
    sgn = np.empty(F, dtype=np.float64)
    for k0 in range(0, n, B):
        pb = 2 * k0
        for g in range(G):
            x = xs[g]
            xl = x & lomask
            j0 = k0 ^ (x & ~lomask)
            qb = 2 * j0
            x2 = 2 * xl
            run = F if xl == 0 else 2 * (xl & -xl)
            ar = 0.0
            ai = 0.0
            if run < 16:
                # short runs: gather the partner block so the sums stay contiguous
                for lo in range(B):
                    jl = 2 * (lo ^ xl)
                    buf[2 * lo] = f[qb + jl]
                    buf[2 * lo + 1] = f[qb + jl + 1]
                    sgn[2 * lo] = wr[g, jl]
                    sgn[2 * lo + 1] = wr[g, jl]
                pv = f[pb:pb + F]
                if phs[g].real != 0.0:
                    for i in range(F):
                        ar += sgn[i] * pv[i] * buf[i]
                if phs[g].imag != 0.0:
                    for i in range(0, F, 2):
                        ai += sgn[i] * (pv[i] * buf[i + 1] - pv[i + 1] * buf[i])
                loc[g] += _sgn(j0 & zs[g]) * (ar + 1j * ai)
                continue
            if phs[g].real != 0.0:
                row = wr[g]
                for r in range(0, F, run):
                    rq = r ^ x2
                    wv = row[rq:rq + run]
                    pv = f[pb + r:pb + r + run]
                    qv = f[qb + rq:qb + rq + run]
                    for i in range(run):
                        ar += wv[i] * pv[i] * qv[i]
            if phs[g].imag != 0.0:
                row = wi[g]
                for r in range(0, F, run):
                    rq = r ^ x2
                    wv = row[rq:rq + run]
                    pv = f[pb + r:pb + r + run]
                    qv = f[qb + rq:qb + rq + run]
                    for i in range(0, run, 2):
                        ai += wv[i] * pv[i] * qv[i + 1] + wv[i + 1] * pv[i + 1] * qv[i]
            loc[g] += _sgn(j0 & zs[g]) * (ar + 1j * ai)
    for g in range(G):
        out[g] += phs[g] * loc[g]
