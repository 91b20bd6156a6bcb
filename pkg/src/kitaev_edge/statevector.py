"""Dense statevector simulation driven by the bitmask kernels."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .pauli import DimensionError, PauliString, commutes, multiply

MAX_QUBITS = 28
NORM_TOL = 1e-10
FUSE_RANK = 5
SEQUENCE_RANK = 12     # largest flip-mask span handled by one fused measurement sweep

__all__ = [
    "StateVector",
    "ProjectionError",
    "CircuitError",
    "PauliRotation",
    "ControlledPauli",
    "MidCircuitMeasure",
    "ConditionedPauli",
    "StochasticPauliNoise",
    "Circuit",
    "apply_pauli_rotation",
    "measure_pauli",
    "project",
    "run_circuit",
    "expectation",
    "inner",
    "fidelity",
    "product_state",
    "product_environments",
    "rotation_overlap_gradient",
    "plan_blocks",
]


class ProjectionError(RuntimeError):
    """Projection or measurement branch with (numerically) zero weight."""


class CircuitError(ValueError):
    """Malformed circuit: qubit out of range or register read before write."""


class StateVector:
    """``2**n`` complex amplitudes; qubit ``q`` is bit ``q`` of the index."""

    __slots__ = ("amplitudes", "n_qubits")

    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None):
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        n = amps.shape[0].bit_length() - 1
        if amps.ndim != 1 or (1 << n) != amps.shape[0]:
            raise DimensionError("amplitude count must be a power of two")
        if n_qubits is not None and n_qubits != n:
            raise DimensionError(f"{amps.shape[0]} amplitudes but n_qubits={n_qubits}")
        if n > MAX_QUBITS:
            raise MemoryError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit guard")
        self.amplitudes = amps
        self.n_qubits = n

    @classmethod
    def zeros(cls, n_qubits: int) -> StateVector:
        if n_qubits > MAX_QUBITS:
            raise MemoryError(f"{n_qubits} qubits exceeds the {MAX_QUBITS}-qubit guard")
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def random(cls, n_qubits: int, rng: np.random.Generator) -> StateVector:
        dim = 1 << n_qubits
        amps = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        amps /= np.linalg.norm(amps)
        return cls(amps)

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy())

    def norm(self) -> float:
        return math.sqrt(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalize(self) -> StateVector:
        nrm = self.norm()
        if nrm == 0.0:
            raise ProjectionError("cannot normalize the zero vector")
        self.amplitudes /= nrm
        return self

    def probabilities(self) -> np.ndarray:
        a = self.amplitudes
        return a.real**2 + a.imag**2

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"

    # snapshot format: 8-byte little-endian N, then interleaved re/im float64
    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", self.n_qubits))
            fh.write(self.amplitudes.astype("<c16").tobytes())

    @classmethod
    def load(cls, path) -> StateVector:
        raw = Path(path).read_bytes()
        (n,) = struct.unpack("<Q", raw[:8])
        if n > MAX_QUBITS:
            raise MemoryError(f"snapshot declares {n} qubits")
        amps = np.frombuffer(raw, dtype="<c16", offset=8)
        if amps.shape[0] != 1 << n:
            raise DimensionError(f"snapshot header says {n} qubits, payload has {amps.shape[0]} amplitudes")
        return cls(amps.astype(np.complex128))


def _check_dims(s: StateVector, p: PauliString):
    if s.n_qubits != p.n_qubits:
        raise DimensionError(f"state has {s.n_qubits} qubits, Pauli has {p.n_qubits}")


def _require_hermitian(p: PauliString):
    if not p.is_hermitian():
        raise ValueError(f"Pauli {p} is not Hermitian")


# ---------------------------------------------------------------------------
# single operations


def apply_pauli_rotation(s: StateVector, P: PauliString, theta: float) -> StateVector:
    """In place ``s <- exp(i theta P) s``."""
    _check_dims(s, P)
    _require_hermitian(P)
    _run_rotations(s.amplitudes, [(P, float(theta))])
    return s


def expectation(s: StateVector, P: PauliString) -> float:
    _check_dims(s, P)
    _require_hermitian(P)
    return float(_kernels.expval(s.amplitudes, P.x, P.z, P.kernel_phase).real)


def matrix_element(bra: StateVector, P: PauliString, ket: StateVector) -> complex:
    _check_dims(ket, P)
    if bra.n_qubits != ket.n_qubits:
        raise DimensionError("bra and ket sizes differ")
    return complex(_kernels.matrix_element(bra.amplitudes, ket.amplitudes, P.x, P.z, P.kernel_phase))


def inner(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"{a.n_qubits} vs {b.n_qubits} qubits")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|^2`` for normalized inputs; global phases drop out."""
    return abs(inner(a, b)) ** 2


def project(s: StateVector, P: PauliString, sign: int = 1) -> StateVector:
    """In place ``s <- (1 + sign P) s / norm`` via one addition pass."""
    _check_dims(s, P)
    _require_hermitian(P)
    _kernels.add_pauli_image(s.amplitudes, P.x, P.z, P.kernel_phase, float(sign))
    nrm = s.norm()
    if nrm < 1e-7:
        raise ProjectionError(f"state lies in the {-sign:+d} eigenspace of {P}")
    s.amplitudes /= nrm
    return s


def measure_pauli(s: StateVector, P: PauliString, rng: np.random.Generator | None = None,
                  forced: int | None = None) -> tuple[int, float, StateVector]:
    """Projective measurement of Hermitian ``P``; returns (outcome, prob, s) with ``s`` collapsed."""
    _check_dims(s, P)
    _require_hermitian(P)
    ev = expectation(s, P)
    p_plus = min(max(0.5 * (1.0 + ev), 0.0), 1.0)
    if forced is None:
        if rng is None:
            raise ValueError("need an rng or a forced outcome")
        outcome = 1 if rng.random() < p_plus else -1
    else:
        if forced not in (1, -1):
            raise ValueError("forced outcome must be +1 or -1")
        outcome = forced
    prob = p_plus if outcome == 1 else 1.0 - p_plus
    if prob < 1e-14:
        raise ProjectionError(f"outcome {outcome:+d} of {P} has probability {prob:.3g}")
    _kernels.add_pauli_image(s.amplitudes, P.x, P.z, P.kernel_phase, float(outcome))
    s.amplitudes /= np.sqrt(4.0 * prob)
    return outcome, prob, s


# ---------------------------------------------------------------------------
# fused rotation blocks


@dataclass
class FusedBlock:
    pivots: np.ndarray
    span: np.ndarray
    emask: np.ndarray
    zs: np.ndarray
    phs: np.ndarray
    table: np.ndarray


def _reduce(vec: int, basis: list[tuple[int, int]]) -> int:
    for piv, b in basis:
        if vec >> piv & 1:
            vec ^= b
    return vec


def plan_blocks(paulis: Sequence[PauliString], max_rank: int = FUSE_RANK) -> list[tuple[int, int, FusedBlock]]:
    """Split a rotation sequence into consecutive runs whose flip masks span at most ``max_rank`` dimensions."""
    out = []
    start = 0
    basis: list[tuple[int, int]] = []
    for i, p in enumerate(paulis):
        r = _reduce(p.x, basis)
        if r:
            if len(basis) == max_rank:
                out.append((start, i, _make_block(paulis[start:i], basis)))
                start, basis = i, []
                r = p.x
            piv = (r & -r).bit_length() - 1
            basis = [(pv, b ^ r if b >> piv & 1 else b) for pv, b in basis]
            basis.append((piv, r))
    if start < len(paulis):
        out.append((start, len(paulis), _make_block(paulis[start:], basis)))
    return out


def _make_block(paulis: Sequence[PauliString], basis: list[tuple[int, int]]) -> FusedBlock:
    basis = sorted(basis)
    r = len(basis)
    span = np.zeros(1 << r, dtype=np.int64)
    for e in range(1, 1 << r):
        low = (e & -e).bit_length() - 1
        span[e] = span[e & (e - 1)] ^ basis[low][1]
    G = len(paulis)
    emask = np.zeros(G, dtype=np.int64)
    zs = np.zeros(G, dtype=np.int64)
    phs = np.zeros(G, dtype=np.complex128)
    table = np.empty((G, 1 << r), dtype=np.float64)
    for g, p in enumerate(paulis):
        em = 0
        for j, (piv, _) in enumerate(basis):
            if p.x >> piv & 1:
                em |= 1 << j
        emask[g] = em
        zs[g] = p.z
        phs[g] = p.kernel_phase
        for e in range(1 << r):
            table[g, e] = 1.0 - 2.0 * (bin(int(span[e]) & p.z).count("1") & 1)
    pivots = np.array([piv for piv, _ in basis], dtype=np.int64)
    return FusedBlock(pivots, span, emask, zs, phs, table)


_EMPTY = np.zeros(0, dtype=np.complex128)
PROJECT, APPLY, PROBE = 0, 1, 2


def _sequence(amps: np.ndarray, ops, out: np.ndarray | None = None, scale: float = 1.0) -> np.ndarray:
    """One fused sweep over (kind, pauli, sign) ops; returns per-op probe sums and the final squared norm."""
    paulis = [p for _, p, _ in ops] or [PauliString.identity(int(amps.shape[0]).bit_length() - 1)]
    blk = plan_blocks(paulis, max_rank=64)[0][2]
    kinds = np.array([k for k, _, _ in ops] or [PROBE], dtype=np.int64)
    signs = np.array([sg for _, _, sg in ops] or [0.0], dtype=np.float64)
    acc = np.zeros(len(kinds) + 1, dtype=np.complex128)
    _kernels.fused_sequence(amps, _EMPTY if out is None else out, blk.pivots, blk.span, blk.emask, blk.zs,
                            blk.phs, blk.table, kinds, signs, acc, scale)
    return acc


def expectations(s: StateVector, paulis: Sequence[PauliString]) -> np.ndarray:
    """Real expectation values of several Hermitian Paulis in one sweep."""
    for p in paulis:
        _check_dims(s, p)
        _require_hermitian(p)
    out = np.zeros(len(paulis), dtype=np.complex128)
    if paulis:
        _kernels.expvals(s.amplitudes.view(np.float64), np.array([p.x for p in paulis], dtype=np.int64),
                         np.array([p.z for p in paulis], dtype=np.int64),
                         np.array([p.kernel_phase for p in paulis], dtype=np.complex128), out)
    return out.real


def _run_rotations(amps: np.ndarray, rotations: Sequence[tuple[PauliString, float]], plan=None):
    if not rotations:
        return
    paulis = [p for p, _ in rotations]
    thetas = np.array([t for _, t in rotations], dtype=np.float64)
    if plan is None:
        plan = plan_blocks(paulis)
    c = np.cos(thetas)
    s = np.sin(thetas)
    for a, b, blk in plan:
        _kernels.fused_rotations(amps, blk.pivots, blk.span, blk.emask, blk.zs, blk.phs,
                                 c[a:b], s[a:b], blk.table)


def rotation_overlap_gradient(amps: np.ndarray, rotations: Sequence[tuple[PauliString, float]],
                              target: np.ndarray, plan=None) -> tuple[complex, np.ndarray, np.ndarray]:
    """Overlap ``o = <target| U |amps>`` and ``do/dtheta_g`` for U = prod exp(i theta_g P_g).

    One forward sweep and one reverse (adjoint) sweep.  Also returns the
    backward state ``U^dagger |target>``; ``amps`` is left untouched.
    """
    paulis = [p for p, _ in rotations]
    thetas = np.array([t for _, t in rotations], dtype=np.float64)
    if plan is None:
        plan = plan_blocks(paulis)
    c = np.cos(thetas)
    s = np.sin(thetas)
    psi = amps.copy()
    for a, b, blk in plan:
        _kernels.fused_rotations(psi, blk.pivots, blk.span, blk.emask, blk.zs, blk.phs,
                                 c[a:b], s[a:b], blk.table)
    overlap = complex(np.vdot(target, psi))
    lam = np.array(target, dtype=np.complex128, copy=True)
    grad = np.zeros(len(rotations), dtype=np.complex128)
    for a, b, blk in reversed(plan):
        g = np.zeros(b - a, dtype=np.complex128)
        _kernels.fused_adjoint(psi, lam, blk.pivots, blk.span, blk.emask, blk.zs, blk.phs,
                               c[a:b], s[a:b], blk.table, g)
        grad[a:b] = g
    return overlap, grad, lam


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class PauliRotation:
    pauli: PauliString
    theta: float


@dataclass(frozen=True)
class ControlledPauli:
    control: int
    pauli: PauliString


@dataclass(frozen=True)
class MidCircuitMeasure:
    pauli: PauliString
    register: str


@dataclass(frozen=True)
class ConditionedPauli:
    register: str
    value: int
    pauli: PauliString


@dataclass(frozen=True)
class StochasticPauliNoise:
    p_err: float
    sites: tuple[int, int]


Gate = PauliRotation | ControlledPauli | MidCircuitMeasure | ConditionedPauli | StochasticPauliNoise


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def append(self, gate) -> Circuit:
        self.gates.append(gate)
        return self

    def extend(self, gates) -> Circuit:
        self.gates.extend(gates)
        return self

    def __add__(self, other: Circuit) -> Circuit:
        if other.n_qubits != self.n_qubits:
            raise DimensionError("circuits act on different qubit counts")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def __len__(self):
        return len(self.gates)

    def rotation(self, pauli: PauliString, theta: float) -> Circuit:
        return self.append(PauliRotation(pauli, float(theta)))

    def count_rotations(self, weight: int | None = None) -> int:
        return sum(1 for g in self.gates if isinstance(g, PauliRotation)
                   and (weight is None or g.pauli.weight == weight))

    def validate(self) -> None:
        written = set()
        limit = 1 << self.n_qubits
        for g in self.gates:
            paulis = []
            if isinstance(g, (PauliRotation, MidCircuitMeasure, ConditionedPauli, ControlledPauli)):
                paulis.append(g.pauli)
            for p in paulis:
                if p.n_qubits != self.n_qubits or p.support >= limit:
                    raise CircuitError(f"gate {g} outside {self.n_qubits} qubits")
            if isinstance(g, (PauliRotation, MidCircuitMeasure)) and not g.pauli.is_hermitian():
                raise CircuitError(f"non-Hermitian generator in {g}")
            if isinstance(g, ControlledPauli):
                if not 0 <= g.control < self.n_qubits or g.pauli.support >> g.control & 1:
                    raise CircuitError(f"bad control in {g}")
            if isinstance(g, StochasticPauliNoise):
                if not all(0 <= q < self.n_qubits for q in g.sites) or g.sites[0] == g.sites[1]:
                    raise CircuitError(f"bad noise sites in {g}")
                if not 0.0 <= g.p_err <= 1.0:
                    raise CircuitError(f"noise probability {g.p_err} outside [0, 1]")
            if isinstance(g, MidCircuitMeasure):
                written.add(g.register)
            if isinstance(g, ConditionedPauli) and g.register not in written:
                raise CircuitError(f"register {g.register!r} read before it is written")

    def inverse(self) -> Circuit:
        """Inverse of a purely unitary rotation circuit."""
        if any(not isinstance(g, PauliRotation) for g in self.gates):
            raise CircuitError("only rotation circuits can be inverted")
        return Circuit(self.n_qubits, [PauliRotation(g.pauli, -g.theta) for g in reversed(self.gates)])


_NOISE_LABELS = ("I", "X", "Y", "Z")


def random_two_qubit_pauli(n_qubits: int, sites: tuple[int, int], rng: np.random.Generator) -> PauliString:
    """Uniform draw among the 15 non-identity two-qubit Paulis."""
    k = int(rng.integers(1, 16))
    a, b = _NOISE_LABELS[k >> 2], _NOISE_LABELS[k & 3]
    factors = {}
    if a != "I":
        factors[sites[0]] = a
    if b != "I":
        factors[sites[1]] = b
    return PauliString.from_factors(n_qubits, factors)


def _mask_rank(masks) -> int:
    basis: list[tuple[int, int]] = []
    for x in masks:
        r = _reduce(x, basis)
        if r:
            piv = (r & -r).bit_length() - 1
            basis = [(pv, b ^ r if b >> piv & 1 else b) for pv, b in basis]
            basis.append((piv, r))
    return len(basis)


def _commuting_run(amps: np.ndarray, run, measured, registers: dict, rng, forced) -> None:
    """Measurements of commuting Paulis with independent flip masks, plus feedforward Paulis.

    Feedforward Paulis are commuted to the end of the run as one frame
    Pauli F, turning each later outcome into an eigenvalue of the input's
    joint projection (sign-flipped where F anticommutes).  Sampling uses the
    joint outcome distribution from one sweep; the projection and F are
    then applied in two passes.
    """
    n_qubits = int(amps.shape[0]).bit_length() - 1
    k = len(measured)
    basis: list[tuple[int, int]] = []
    for p in measured:
        r = _reduce(p.x, basis)
        piv = (r & -r).bit_length() - 1
        basis = [(pv, b ^ r if b >> piv & 1 else b) for pv, b in basis]
        basis.append((piv, r))
    pivots = np.array(sorted(pv for pv, _ in basis), dtype=np.int64)
    subsets = [PauliString.identity(n_qubits)]
    for p in measured:
        subsets += [multiply(q, p) for q in subsets]
    xS = np.array([q.x for q in subsets], dtype=np.int64)
    zs = np.array([p.z for p in measured], dtype=np.int64)
    phase = np.array([q.kernel_phase for q in subsets], dtype=np.complex128)
    dist = None
    frame = PauliString.identity(n_qubits)
    eig = []                     # eigenvalues of the measured Paulis on the input's projection
    it = iter(measured)
    for g in run:
        if isinstance(g, ConditionedPauli):
            if registers[g.register] == g.value:
                frame = multiply(g.pauli, frame)
            continue
        w = next(it)
        flip = 1 if commutes(frame, w) else -1
        f = None if forced is None else forced.get(g.register)
        if f is None:
            if rng is None:
                raise ValueError("need an rng or a forced outcome")
            if dist is None:
                dist = np.zeros(1 << k)
                _kernels.joint_distribution(amps, pivots, xS, zs, phase, dist)
            i = len(eig)
            prefix = sum(1 << j for j, e in enumerate(eig) if e == -1)
            idx = np.arange(1 << k)
            match = (idx & ((1 << i) - 1)) == prefix
            p_all = dist[match].sum()
            p_plus = float(np.clip(dist[match & ((idx >> i & 1) == 0)].sum() / p_all, 0.0, 1.0))
            e = 1 if rng.random() < p_plus else -1
            prob = p_plus if e == 1 else 1.0 - p_plus
            if prob < 1e-14:
                raise ProjectionError(f"outcome {flip * e:+d} of {g.pauli} has probability {prob:.3g}")
            outcome = flip * e
        else:
            if f not in (1, -1):
                raise ValueError("forced outcome must be +1 or -1")
            outcome = f
        eig.append(flip * outcome)
        registers[g.register] = outcome
    signs = np.array([np.prod([eig[i] for i in range(k) if S >> i & 1]) for S in range(1 << k)], dtype=np.float64)
    norm2 = _kernels.joint_project(amps, pivots, xS, zs, phase * signs)
    if norm2 < 1e-14:
        pattern = ", ".join(f"{g.register}={registers[g.register]:+d}" for g in run if isinstance(g, MidCircuitMeasure))
        raise ProjectionError(f"outcomes {pattern} have probability {norm2:.3g}")
    scale = 1.0 / math.sqrt(norm2)
    if frame.x == 0 and frame.z == 0:
        amps *= frame.phase * scale
    else:
        _kernels.apply_pauli(amps, frame.x, frame.z, frame.kernel_phase * scale)


def _measurement_run(amps: np.ndarray, run, registers: dict, rng, forced) -> None:
    """Consecutive measurements and feedforward Paulis, simulated with fused sweeps.

    A sampled outcome needs one read-only sweep for its probability; the
    collapsed, corrected and renormalised state is written in a single
    final sweep.
    """
    measured = [g.pauli for g in run if isinstance(g, MidCircuitMeasure)]
    if measured and len(measured) <= SEQUENCE_RANK and _mask_rank([p.x for p in measured]) == len(measured) \
            and all(commutes(a, b) for i, a in enumerate(measured) for b in measured[:i]):
        _commuting_run(amps, run, measured, registers, rng, forced)
        return
    if _mask_rank([g.pauli.x for g in run]) > SEQUENCE_RANK:
        for g in run:
            if isinstance(g, ConditionedPauli):
                if registers[g.register] == g.value:
                    _kernels.apply_pauli(amps, g.pauli.x, g.pauli.z, g.pauli.kernel_phase)
            else:
                f = None if forced is None else forced.get(g.register)
                registers[g.register] = measure_pauli(StateVector(amps), g.pauli, rng, forced=f)[0]
        return
    ops: list = []
    norm2 = 1.0          # squared norm of the pending result, when known without a sweep
    for g in run:
        if isinstance(g, ConditionedPauli):
            if registers[g.register] == g.value:
                ops.append((APPLY, g.pauli, 0.0))
            continue
        f = None if forced is None else forced.get(g.register)
        if f is None:
            if rng is None:
                raise ValueError("need an rng or a forced outcome")
            acc = _sequence(amps, ops + [(PROBE, g.pauli, 0.0)])
            base = acc[-1].real
            ev = acc[-2].real / base
            p_plus = min(max(0.5 * (1.0 + ev), 0.0), 1.0)
            outcome = 1 if rng.random() < p_plus else -1
            prob = p_plus if outcome == 1 else 1.0 - p_plus
            norm2 = base * prob
        else:
            if f not in (1, -1):
                raise ValueError("forced outcome must be +1 or -1")
            outcome, prob, norm2 = f, None, None
        if prob is not None and prob < 1e-14:
            raise ProjectionError(f"outcome {outcome:+d} of {g.pauli} has probability {prob:.3g}")
        registers[g.register] = outcome
        ops.append((PROJECT, g.pauli, float(outcome)))
    if norm2 is None:
        norm2 = _sequence(amps, ops)[-1].real
        if norm2 < 1e-14:
            pattern = ", ".join(f"{g.register}={registers[g.register]:+d}" for g in run
                                if isinstance(g, MidCircuitMeasure))
            raise ProjectionError(f"forced outcomes {pattern} have probability {norm2:.3g}")
    _sequence(amps, ops, out=amps, scale=1.0 / math.sqrt(norm2))


def run_circuit(c: Circuit, s: StateVector, rng: np.random.Generator | None = None,
                forced: Mapping[str, int] | None = None) -> tuple[StateVector, dict[str, int]]:
    """Apply ``c`` to ``s`` in place.  Runs of rotations are fused into single sweeps.

    ``forced`` pins measurement outcomes by register name.  Returns the state
    and the classical registers.
    """
    if c.n_qubits != s.n_qubits:
        raise DimensionError(f"circuit on {c.n_qubits} qubits, state on {s.n_qubits}")
    c.validate()
    registers: dict[str, int] = {}
    pending: list[tuple[PauliString, float]] = []
    amps = s.amplitudes

    run: list = []

    def flush():
        _run_rotations(amps, pending)
        pending.clear()
        if run:
            _measurement_run(amps, run, registers, rng, forced)
            run.clear()

    for g in c.gates:
        if isinstance(g, PauliRotation):
            if run:
                flush()
            pending.append((g.pauli, g.theta))
            continue
        if not isinstance(g, (MidCircuitMeasure, ConditionedPauli)) or pending:
            flush()
        if isinstance(g, ControlledPauli):
            _kernels.controlled_pauli(amps, g.control, g.pauli.x, g.pauli.z, g.pauli.kernel_phase)
        elif isinstance(g, (MidCircuitMeasure, ConditionedPauli)):
            run.append(g)
            continue
        elif isinstance(g, StochasticPauliNoise):
            if g.p_err > 0.0:
                if rng is None:
                    raise ValueError("noisy circuit needs an rng")
                if rng.random() < g.p_err:
                    err = random_two_qubit_pauli(c.n_qubits, g.sites, rng)
                    _kernels.apply_pauli(amps, err.x, err.z, err.kernel_phase)
        else:
            raise CircuitError(f"unknown gate {g!r}")
    flush()
    return s, registers


# ---------------------------------------------------------------------------
# product states


def product_state(vecs: np.ndarray) -> StateVector:
    """Tensor product with ``vecs[q]`` the (2,) state of qubit ``q``."""
    vecs = np.ascontiguousarray(vecs, dtype=np.complex128)
    return StateVector(_kernels.product_state(vecs))


def product_environments(v: np.ndarray, vecs: np.ndarray) -> tuple[complex, np.ndarray]:
    """Return ``<v|phi>`` and ``env[q, b] = <v|phi with qubit q set to |b>>``.

    ``phi`` is the product of ``vecs[q]``.  Splits the register into a low
    and a high half so the full vector is contracted only twice.
    """
    vecs = np.asarray(vecs, dtype=np.complex128)
    nq = vecs.shape[0]
    m = nq // 2
    cv = np.conj(v).reshape(1 << (nq - m), 1 << m)  # rows: high qubits, cols: low
    phi_low = _kernels.product_state(np.ascontiguousarray(vecs[:m]))
    phi_high = _kernels.product_state(np.ascontiguousarray(vecs[m:]))
    a_low = phi_high @ cv   # amplitudes over low qubits
    b_high = cv @ phi_low   # amplitudes over high qubits
    env = np.empty((nq, 2), dtype=np.complex128)
    _small_envs(a_low, vecs[:m], env[:m])
    _small_envs(b_high, vecs[m:], env[m:])
    total = complex(a_low @ phi_low)
    return total, env


def _small_envs(t: np.ndarray, vecs: np.ndarray, out: np.ndarray):
    k = vecs.shape[0]
    if k == 0:
        return
    # axis a of the reshaped tensor is qubit k-1-a
    tens = t.reshape((2,) * k)
    for q in range(k):
        cur = tens
        # contract from the most significant qubit down; once the higher
        # qubits are gone the leading axis is either r itself or q
        for r in range(k - 1, -1, -1):
            if r == q:
                continue
            cur = np.tensordot(cur, vecs[r], axes=([0 if r > q else 1], [0]))
        out[q] = cur
