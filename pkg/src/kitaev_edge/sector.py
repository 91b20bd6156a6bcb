"""Exact restriction of a Pauli-sum Hamiltonian to a joint +1 eigenspace of commuting Pauli symmetries.

With ``P`` the projector onto the sector and generators whose X-masks are
linearly independent, the states ``|e_r> = sqrt(|G|) P |r>`` for ``r``
running over bitstrings with every pivot bit cleared form an orthonormal
basis of the sector (``|G| = 2**k`` is the size of the symmetry group).
Any ``|m>`` maps to a representative by multiplying in generators, which
gives ``P|m> = phase * P|rep(m)>``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .pauli import PauliString, commutes, multiply

__all__ = ["SectorBasis"]


def _sign(bits: np.ndarray) -> np.ndarray:
    return 1.0 - 2.0 * (np.bitwise_count(bits) & 1)


class SectorBasis:
    def __init__(self, generators, n_qubits: int):
        gens = [g for g in generators]
        if any(not g.is_hermitian() for g in gens):
            raise ValueError("symmetry generators must be Hermitian")
        if any(not commutes(a, b) for a in gens for b in gens):
            raise ValueError("symmetry generators must commute")
        rows: list[tuple[int, PauliString]] = []
        for g in gens:
            for piv, r in rows:
                if g.x >> piv & 1:
                    g = multiply(g, r)
            if g.x == 0:
                raise ValueError("generator X-masks must be linearly independent")
            piv = (g.x & -g.x).bit_length() - 1
            rows = [(p, multiply(r, g)) if r.x >> piv & 1 else (p, r) for p, r in rows]
            rows.append((piv, g))
        self.n_qubits = n_qubits
        self.generators = gens
        self._rows = rows
        self.pivot_mask = sum(1 << p for p, _ in rows)
        full = np.arange(1 << n_qubits, dtype=np.int64)
        self.reps = full[(full & self.pivot_mask) == 0]
        self.dim = len(self.reps)
        self._scale = float(np.sqrt(2.0 ** len(rows)))

    def canonical(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Representatives and phases with P|m> = phase * P|rep>."""
        cur = np.array(m, dtype=np.int64, copy=True)
        phase = np.ones(len(cur), dtype=np.complex128)
        for piv, g in self._rows:
            sel = (cur >> piv & 1).astype(bool)
            phase[sel] *= g.kernel_phase * _sign(cur[sel] & g.z)
            cur[sel] ^= g.x
        return cur, phase

    def restrict(self, hs) -> sp.csr_matrix:
        if not all(hs.commutes_with(g) for g in self.generators):
            raise ValueError("the Hamiltonian does not commute with the symmetry generators")
        rows, cols, data = [], [], []
        col = np.arange(self.dim)
        for c, p in zip(hs.coeffs, hs.terms):
            m = self.reps ^ p.x
            val = c * p.kernel_phase * _sign(self.reps & p.z)
            rep, ph = self.canonical(m)
            rows.append(np.searchsorted(self.reps, rep))
            cols.append(col)
            data.append(val * ph)
        return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.dim, self.dim))

    def project(self, v: np.ndarray) -> np.ndarray:
        v = np.array(v, dtype=np.complex128, copy=True)
        for g in self.generators:
            _kernels.add_pauli_image(v, g.x, g.z, g.kernel_phase, 1.0)
            v *= 0.5
        return v

    def embed(self, a: np.ndarray) -> np.ndarray:
        v = np.zeros(1 << self.n_qubits, dtype=np.complex128)
        v[self.reps] = self._scale * np.asarray(a)
        return self.project(v)

    def reduce(self, v: np.ndarray) -> np.ndarray:
        return self._scale * self.project(v)[self.reps]
