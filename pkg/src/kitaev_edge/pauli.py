"""Multi-qubit Pauli strings in symplectic bitmask form.

A Pauli string on ``n`` qubits is stored as two integers ``x`` and ``z``
(bit ``q`` set when the factor on qubit ``q`` contains an X or a Z part;
both bits set means Y) together with a phase exponent ``e`` so that the
operator equals ``i**e`` times the tensor product of the single-qubit
factors.

For amplitude kernels the same operator is written as

    P = i**(e + ny) * X^x Z^z,

with ``ny`` the number of Y factors, so that ``P|m> = ph * (-1)**|m & z| |m ^ x>``
where ``ph = i**((e + ny) % 4)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "DimensionError",
    "PauliString",
    "multiply",
    "commutes",
    "apply_to_state",
    "pauli_matrix",
    "parity",
]

_PHASES = (1, 1j, -1, -1j)
_LABELS = {(1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_TOKEN = re.compile(r"([XYZ])(\d+)")


class DimensionError(ValueError):
    """Raised when operands live on different qubit counts."""


def parity(v: int) -> int:
    return bin(v).count("1") & 1


@dataclass(frozen=True)
class PauliString:
    n_qubits: int
    x: int = 0
    z: int = 0
    e: int = 0

    def __post_init__(self):
        if self.n_qubits < 0:
            raise ValueError("n_qubits must be non-negative")
        limit = 1 << self.n_qubits
        if self.x < 0 or self.z < 0 or self.x >= limit or self.z >= limit:
            raise ValueError(f"Pauli support outside {self.n_qubits} qubits")
        object.__setattr__(self, "e", self.e % 4)

    # construction -----------------------------------------------------
    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls(n_qubits)

    @classmethod
    def from_factors(cls, n_qubits: int, factors: Mapping[int, str] | Iterable[tuple[int, str]],
                     phase: complex = 1) -> PauliString:
        """Build from ``{site: 'X'|'Y'|'Z'}``; repeated sites are not allowed."""
        items = factors.items() if isinstance(factors, Mapping) else factors
        x = z = 0
        for site, label in items:
            if not 0 <= site < n_qubits:
                raise ValueError(f"site {site} outside {n_qubits} qubits")
            bit = 1 << site
            if (x | z) & bit:
                raise ValueError(f"site {site} given twice")
            label = label.upper()
            if label in ("X", "Y"):
                x |= bit
            if label in ("Z", "Y"):
                z |= bit
            if label not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli label {label!r}")
        return cls(n_qubits, x, z, _phase_exponent(phase))

    @classmethod
    def single(cls, n_qubits: int, site: int, label: str) -> PauliString:
        return cls.from_factors(n_qubits, {site: label})

    @classmethod
    def parse(cls, text: str, n_qubits: int) -> PauliString:
        """Parse the debug form ``"+ X3 Y7 Z12"``, ``"-i Z0"`` or ``"+ I"``."""
        s = text.strip()
        m = re.match(r"^([+-]?)(i?)\s*(.*)$", s)
        if m is None:
            raise ValueError(f"cannot parse Pauli string {text!r}")
        sign, imag, rest = m.groups()
        e = (2 if sign == "-" else 0) + (1 if imag else 0)
        rest = rest.strip()
        factors = {}
        if rest and rest != "I":
            for tok in rest.split():
                tm = _TOKEN.fullmatch(tok)
                if tm is None:
                    raise ValueError(f"bad Pauli factor {tok!r} in {text!r}")
                site = int(tm.group(2))
                if site in factors:
                    raise ValueError(f"site {site} given twice")
                factors[site] = tm.group(1)
        p = cls.from_factors(n_qubits, factors)
        return cls(n_qubits, p.x, p.z, e)

    # views ------------------------------------------------------------
    @property
    def phase(self) -> complex:
        return _PHASES[self.e]

    @property
    def support(self) -> int:
        return self.x | self.z

    @property
    def weight(self) -> int:
        return bin(self.support).count("1")

    @property
    def n_y(self) -> int:
        return bin(self.x & self.z).count("1")

    @property
    def kernel_phase(self) -> complex:
        """Phase ``ph`` in ``P = ph * X^x Z^z``."""
        return _PHASES[(self.e + self.n_y) % 4]

    @property
    def factors(self) -> dict[int, str]:
        out = {}
        sup = self.support
        q = 0
        while sup:
            if sup & 1:
                out[q] = _LABELS[((self.x >> q) & 1, (self.z >> q) & 1)]
            sup >>= 1
            q += 1
        return out

    def is_hermitian(self) -> bool:
        return self.e in (0, 2)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0 and self.e == 0

    def with_phase(self, phase: complex) -> PauliString:
        return PauliString(self.n_qubits, self.x, self.z, _phase_exponent(phase))

    def unsigned(self) -> PauliString:
        return PauliString(self.n_qubits, self.x, self.z, 0)

    def restricted(self, sites: Iterable[int]) -> PauliString:
        mask = 0
        for s in sites:
            mask |= 1 << s
        return PauliString(self.n_qubits, self.x & mask, self.z & mask, self.e)

    def factor_at(self, site: int) -> str:
        return _LABELS.get(((self.x >> site) & 1, (self.z >> site) & 1), "I")

    def __mul__(self, other: PauliString) -> PauliString:
        return multiply(self, other)

    def __neg__(self) -> PauliString:
        return PauliString(self.n_qubits, self.x, self.z, self.e + 2)

    def __str__(self) -> str:
        head = ("-" if self.e >= 2 else "+") + ("i" if self.e % 2 else "")
        f = self.factors
        body = " ".join(f"{lab}{q}" for q, lab in f.items()) if f else "I"
        return f"{head} {body}"

    def to_matrix(self) -> np.ndarray:
        return pauli_matrix(self)


def _phase_exponent(phase: complex) -> int:
    for k, p in enumerate(_PHASES):
        if abs(complex(phase) - p) < 1e-12:
            return k
    raise ValueError(f"phase {phase!r} is not a fourth root of unity")


def _check(a: PauliString, b: PauliString):
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}")


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Exact product ``a * b`` including the phase."""
    _check(a, b)
    # a = i^(ea+nya) X^xa Z^za, and Z^za X^xb = (-1)^|za & xb| X^xb Z^za
    x = a.x ^ b.x
    z = a.z ^ b.z
    k = a.e + a.n_y + b.e + b.n_y + 2 * parity(a.z & b.x)
    k -= bin(x & z).count("1")
    return PauliString(a.n_qubits, x, z, k)


def commutes(a: PauliString, b: PauliString) -> bool:
    _check(a, b)
    return parity((a.x & b.z) ^ (a.z & b.x)) == 0


def apply_to_state(p: PauliString, state):
    """Apply ``p`` in place to a :class:`StateVector` (or raw amplitude array)."""
    from . import _kernels
    from .statevector import StateVector

    amps = state.amplitudes if isinstance(state, StateVector) else state
    n = amps.shape[0].bit_length() - 1
    if n != p.n_qubits:
        raise DimensionError(f"state has {n} qubits, Pauli has {p.n_qubits}")
    _kernels.apply_pauli(amps, p.x, p.z, p.kernel_phase)
    return state


_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(p: PauliString) -> np.ndarray:
    """Dense matrix in the little-endian convention (qubit 0 = least significant bit).

    Built by Kronecker products, independent of the bitmask kernels; used as
    a test oracle on small systems.
    """
    m = np.ones((1, 1), dtype=complex)
    for q in range(p.n_qubits - 1, -1, -1):
        m = np.kron(m, _SINGLE[p.factor_at(q)])
    return p.phase * m
