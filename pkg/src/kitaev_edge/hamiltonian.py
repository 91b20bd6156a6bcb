"""Kitaev-Heisenberg model Hamiltonians as merged Pauli sums."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import _kernels
from .lattice import HoneycombLattice
from .pauli import DimensionError, PauliString, commutes
from .sector import SectorBasis
from .statevector import StateVector, _run_rotations, plan_blocks

__all__ = [
    "HamiltonianSpec",
    "PauliSum",
    "ConvergenceError",
    "GroundState",
    "PRESETS",
    "build_hamiltonian",
    "apply_hamiltonian",
    "ground_state_exact",
    "trotter_evolve",
    "trotter_sequence",
    "CATEGORIES",
]

log = logging.getLogger(__name__)

CATEGORIES = ("x-bonds", "y-bonds", "z-bonds", "heisenberg", "field", "three-body")
BLOCK_BITS = 10


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class HamiltonianSpec:
    K_x: float = -1.0
    K_y: float = -1.0
    K_z: float = -1.0
    V: float = 0.3
    h: float = 0.1
    J: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{k} must be finite, got {v}")

    def K(self, kind: str) -> float:
        return {"x": self.K_x, "y": self.K_y, "z": self.K_z}[kind]

    def replace(self, **kw) -> HamiltonianSpec:
        d = asdict(self)
        d.update(kw)
        return HamiltonianSpec(**d)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "non-abelian": HamiltonianSpec(-1.0, -1.0, -1.0, 0.3, 0.1, 0.0),
    "abelian": HamiltonianSpec(-1.0 / 6, -1.0 / 6, -1.0, 0.3, 0.1, 0.0),
    "heis-weak": HamiltonianSpec(-1.0, -1.0, -1.0, 0.3, 0.1, 0.05),
    "heis-strong": HamiltonianSpec(-1.0, -1.0, -1.0, 0.3, 0.1, 0.2),
}


class PauliSum:
    """Real linear combination of Hermitian Pauli strings with unique terms.

    Every term is stored with phase +1; signs live in the coefficients.
    ``categories`` tags each term for term-resolved energies.
    """

    def __init__(self, n_qubits: int, items=()):
        self.n_qubits = n_qubits
        merged: dict[tuple[int, int], list] = {}
        for item in items:
            coef, p = item[0], item[1]
            cat = item[2] if len(item) > 2 else ""
            if p.n_qubits != n_qubits:
                raise DimensionError(f"term on {p.n_qubits} qubits in a {n_qubits}-qubit sum")
            if not p.is_hermitian():
                raise ValueError(f"non-Hermitian term {p}")
            c = float(np.real(coef)) * p.phase.real
            key = (p.x, p.z)
            if key in merged:
                merged[key][0] += c
            else:
                merged[key] = [c, cat]
        keys = [k for k, v in merged.items() if v[0] != 0.0]
        self.terms = tuple(PauliString(n_qubits, x, z) for x, z in keys)
        self.coeffs = np.array([merged[k][0] for k in keys], dtype=float)
        self.categories = tuple(merged[k][1] for k in keys)
        self._groups = None

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(zip(self.coeffs, self.terms))

    def __add__(self, other: PauliSum) -> PauliSum:
        return PauliSum(self.n_qubits, list(self.items()) + list(other.items()))

    def items(self):
        return zip(self.coeffs, self.terms, self.categories)

    def scaled(self, factor: float) -> PauliSum:
        return PauliSum(self.n_qubits, [(c * factor, p, k) for c, p, k in self.items()])

    def select(self, category: str) -> PauliSum:
        return PauliSum(self.n_qubits, [t for t in self.items() if t[2] == category])

    def commutes_with(self, p: PauliString) -> bool:
        return all(commutes(t, p) for t in self.terms)

    # fast action --------------------------------------------------------
    @property
    def groups(self):
        """Terms grouped by flip mask: (gx, gstart, zs, cph) arrays for the kernels."""
        if self._groups is None:
            order = sorted(range(len(self.terms)), key=lambda t: (self.terms[t].x, self.terms[t].z))
            xs = [self.terms[t].x for t in order]
            gx, gstart = [], []
            for pos, x in enumerate(xs):
                if not gx or gx[-1] != x:
                    gx.append(x)
                    gstart.append(pos)
            gstart.append(len(order))
            zs = np.array([self.terms[t].z for t in order], dtype=np.int64)
            cph = np.array([self.coeffs[t] * self.terms[t].kernel_phase for t in order], dtype=np.complex128)
            self._groups = (np.array(gx, dtype=np.int64), np.array(gstart, dtype=np.int64), zs, cph)
        return self._groups

    def matvec(self, amps: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        amps = np.ascontiguousarray(amps, dtype=np.complex128)
        if amps.shape[0] != 1 << self.n_qubits:
            raise DimensionError(f"vector of length {amps.shape[0]} for {self.n_qubits} qubits")
        if out is None:
            out = np.empty_like(amps)
        gx, gstart, zs, cph = self.groups
        _kernels.pauli_sum_apply(amps, out, gx, gstart, zs, cph, BLOCK_BITS)
        return out

    def expectation(self, s: StateVector | np.ndarray) -> float:
        amps = s.amplitudes if isinstance(s, StateVector) else s
        return float(np.vdot(amps, self.matvec(amps)).real)

    def term_expectations(self, s: StateVector | np.ndarray) -> np.ndarray:
        amps = s.amplitudes if isinstance(s, StateVector) else s
        return np.array([_kernels.expval(amps, p.x, p.z, p.kernel_phase).real for p in self.terms])

    def category_expectations(self, s: StateVector | np.ndarray) -> dict[str, float]:
        vals = self.term_expectations(s) * self.coeffs
        out = {}
        for v, cat in zip(vals, self.categories):
            out[cat] = out.get(cat, 0.0) + float(v)
        return out

    def linear_operator(self) -> LinearOperator:
        n = 1 << self.n_qubits
        return LinearOperator((n, n), matvec=lambda v: self.matvec(v.ravel()), dtype=np.complex128)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((1 << self.n_qubits,) * 2, dtype=complex)
        for c, p in self:
            out += c * p.to_matrix()
        return out

    # text form ------------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"# n_qubits {self.n_qubits}"]
        for c, p, cat in self.items():
            lines.append(f"{float(c)!r} {p}" + (f"  # {cat}" if cat else ""))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, n_qubits: int | None = None) -> PauliSum:
        items = []
        for line in text.splitlines():
            body, _, comment = line.partition("#")
            comment = comment.strip()
            if not body.strip():
                if comment.startswith("n_qubits") and n_qubits is None:
                    n_qubits = int(comment.split()[1])
                continue
            coef, _, pstr = body.strip().partition(" ")
            items.append((float(coef), pstr, comment))
        if n_qubits is None:
            raise ValueError("qubit count missing")
        return cls(n_qubits, [(c, PauliString.parse(p, n_qubits), k) for c, p, k in items])


def build_hamiltonian(spec: HamiltonianSpec, lat: HoneycombLattice) -> PauliSum:
    items = []
    for b in lat.bonds:
        items.append((spec.K(b.kind) + spec.J, lat.bond_pauli(b), f"{b.kind}-bonds"))
        if spec.J != 0.0:
            for other in "xyz":
                if other != b.kind:
                    items.append((spec.J, lat.bond_pauli(b, other), "heisenberg"))
    if spec.V != 0.0:
        for t in lat.triples:
            items.append((spec.V, lat.triple_pauli(t), "three-body"))
    if spec.h != 0.0:
        for site, kind in lat.boundary_terms:
            items.append((spec.h, lat.boundary_pauli(site, kind), "field"))
    return PauliSum(lat.n_sites, items)


def apply_hamiltonian(hs: PauliSum, s: StateVector) -> StateVector:
    """Unnormalised H|s>."""
    if s.n_qubits != hs.n_qubits:
        raise DimensionError(f"state has {s.n_qubits} qubits, H has {hs.n_qubits}")
    return StateVector(hs.matvec(s.amplitudes), s.n_qubits)


@dataclass
class GroundState:
    energy: float
    state: StateVector
    residual: float
    gap: float
    energies: np.ndarray


def ground_state_exact(hs: PauliSum, tol: float = 1e-8, seed: int = 0, k: int = 2,
                       maxiter: int = 2000, symmetries=None, v0=None) -> GroundState:
    """Lowest eigenpair by implicitly restarted Lanczos (ARPACK).

    ``k`` eigenpairs are requested so the gap to the next level can be
    reported; the returned state is normalised and its residual
    ``||H psi - E0 psi||`` is checked against ``tol``.

    ``symmetries`` restricts the search to their joint +1 eigenspace (they
    must commute with every term); Lanczos then runs on the Hamiltonian
    restricted to that sector and the reported gap is the gap inside it.
    """
    n = hs.n_qubits
    if n > 24:
        raise ValueError("exact ground states are limited to 24 qubits")
    dim = 1 << n
    if v0 is None:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    else:
        v0 = np.asarray(v0, dtype=np.complex128).ravel()
        if v0.shape != (dim,):
            raise DimensionError(f"start vector has length {v0.shape[0]}, expected {dim}")
    if symmetries:
        basis = SectorBasis(symmetries, n)
        op = basis.restrict(hs)
        v0 = basis.reduce(v0)
        small = basis.dim <= 256
    else:
        basis = None
        op = hs.linear_operator()
        small = dim <= 256
    if small:
        w, v = np.linalg.eigh(op.toarray() if basis is not None else hs.to_dense())
        vals, vecs = w[:k], v[:, :k]
    else:
        try:
            vals, vecs = eigsh(op, k=k, which="SA", v0=v0, tol=tol * 1e-2, maxiter=maxiter)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    psi = np.ascontiguousarray(vecs[:, 0], dtype=np.complex128)
    if basis is not None:
        psi = basis.embed(psi)
    psi /= np.linalg.norm(psi)
    # fix the global phase on the largest amplitude for reproducibility
    big = int(np.argmax(np.abs(psi)))
    psi *= abs(psi[big]) / psi[big]
    e0 = float(np.vdot(psi, hs.matvec(psi)).real)
    res = float(np.linalg.norm(hs.matvec(psi) - e0 * psi))
    gap = float(vals[1] - vals[0]) if len(vals) > 1 else float("nan")
    if res > tol:
        raise ConvergenceError(f"ground-state residual {res:.3e} exceeds {tol:.1e}", res)
    return GroundState(e0, StateVector(psi, n), res, gap, np.asarray(vals))


def trotter_sequence(hs: PauliSum, dt: float) -> list[tuple[PauliString, float]]:
    """Rotations of one symmetric second-order step exp(-i H dt), sorted by flip mask for fusion."""
    order = sorted(range(len(hs)), key=lambda t: (hs.terms[t].x, hs.terms[t].z))
    half = [(hs.terms[t], -0.5 * dt * hs.coeffs[t]) for t in order]
    return half + half[::-1]


def trotter_evolve(hs: PauliSum, amps: np.ndarray, t: float, dt: float = 0.01) -> np.ndarray:
    """Second-order Trotter approximation of exp(-i H t) applied in place.

    The number of steps is ``round(|t| / dt)`` so the actual step divides
    ``t`` exactly.
    """
    n_steps = int(round(abs(t) / dt))
    if n_steps == 0:
        return amps
    seq = trotter_sequence(hs, t / n_steps)
    plan = plan_blocks([p for p, _ in seq])
    for _ in range(n_steps):
        _run_rotations(amps, seq, plan)
    return amps
