"""Product-formula propagators whose second-order error realises the three-spin terms.

One step applies every bond family twice, in a fixed order, first for
times ``t_a`` and then for ``tau - t'_a``.  To second order the
commutators between the passes produce exactly the chirality-breaking
three-spin interaction when the times solve

    u_a (1 - u_b) = (1 - r_ab) / 2,   r_ab = s_ab V / (tau K^a K^b)

for every pair with ``a`` applied after ``b`` (``u = t / tau`` and
``s_ab = +1`` for the cyclic pairs xy, yz, zx, else -1).
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from .hamiltonian import HamiltonianSpec, PauliSum, build_hamiltonian
from .lattice import HoneycombLattice, build_t_junction
from .statevector import Circuit, PauliRotation, StateVector, _run_rotations, plan_blocks

__all__ = [
    "StepParams",
    "NoRealSolution",
    "analytic_times",
    "select_ordering",
    "build_step_circuit",
    "StepPropagator",
    "optimize_t_junction",
    "evolve",
    "circuit_unitary",
    "normalized_error",
    "fit_exponent",
]

log = logging.getLogger(__name__)

_CYCLIC = {("x", "y"), ("y", "z"), ("z", "x")}


class NoRealSolution(ValueError):
    pass


@dataclass(frozen=True)
class StepParams:
    tau: float
    times: tuple[float, float, float]
    primes: tuple[float, float, float]
    ordering: tuple[str, str, str] = ("x", "y", "z")
    branch: str = "+"

    def time(self, kind: str) -> float:
        return self.times["xyz".index(kind)]

    def prime(self, kind: str) -> float:
        return self.primes["xyz".index(kind)]

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.times + self.primes, dtype=float)

    def with_vector(self, v, branch: str | None = None) -> StepParams:
        v = [float(a) for a in v]
        return StepParams(self.tau, tuple(v[:3]), tuple(v[3:]), self.ordering, branch or self.branch)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> StepParams:
        d = json.loads(text)
        return cls(d["tau"], tuple(d["times"]), tuple(d["primes"]), tuple(d["ordering"]), d["branch"])


def _sign(a: str, b: str) -> float:
    return 1.0 if (a, b) in _CYCLIC else -1.0


def select_ordering(V: float) -> tuple[str, str, str]:
    """Order in which the bond families act on the state within one pass."""
    return ("x", "y", "z") if V >= 0 else ("y", "x", "z")


def _effective_K(spec: HamiltonianSpec) -> dict[str, float]:
    return {a: spec.K(a) + spec.J for a in "xyz"}


def _solve(tau: float, V: float, K: dict[str, float], ordering, branch: str) -> dict[str, float]:
    a1, a2, a3 = ordering

    def r(later, earlier):
        return _sign(later, earlier) * V / (tau * K[later] * K[earlier])

    r21, r31, r32 = r(a2, a1), r(a3, a1), r(a3, a2)
    if abs(1 - r31) < 1e-14 or abs(1 - r21) < 1e-14:
        raise NoRealSolution(f"degenerate coupling ratios at tau={tau}, V={V}, K={K}")
    q = (1 - r32) * (1 - r21) / (2 * (1 - r31))
    disc = 1 - 4 * q
    if disc < 0:
        raise NoRealSolution(
            f"no real bond times for tau={tau}, V={V}, K={K}, ordering {''.join(ordering)} "
            f"(discriminant {disc:.4g})")
    u2 = 0.5 * (1 + math.sqrt(disc)) if branch == "+" else 0.5 * (1 - math.sqrt(disc))
    u1 = 1 - (1 - r21) / (2 * u2)
    u3 = u2 * (1 - r31) / (1 - r21)
    return {a1: u1 * tau, a2: u2 * tau, a3: u3 * tau}


def analytic_times(tau: float, spec: HamiltonianSpec, ordering=None, branch: str | None = None) -> StepParams:
    """Closed-form bond times; ``branch=None`` picks the root with the smaller T-junction error."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    ordering = tuple(ordering or select_ordering(spec.V))
    K = _effective_K(spec)
    if branch is None:
        cands = [analytic_times(tau, spec, ordering, b) for b in "+-"]
        errs = [t_junction_error(p, spec) for p in cands]
        return cands[int(np.argmin(errs))]
    t = _solve(tau, spec.V, K, ordering, branch)
    times = (t["x"], t["y"], t["z"])
    return StepParams(tau, times, times, ordering, branch)


# ---------------------------------------------------------------------------
# circuits


def _bond_pass(c: Circuit, lat: HoneycombLattice, kind: str, coupling: float, t: float):
    for b in lat.bonds_of(kind):
        c.rotation(lat.bond_pauli(b), -coupling * t)


def build_step_circuit(params: StepParams, lat: HoneycombLattice, spec: HamiltonianSpec) -> Circuit:
    """One step, gates listed in the order they act on the state.

    As an operator product the step is  U_h U_bonds U_h U_J:  the
    transverse Heisenberg pass acts first, then half a boundary-field step,
    the two bond passes with couplings K + J, and the other half field step.
    """
    tau = params.tau
    K = _effective_K(spec)
    c = Circuit(lat.n_sites)
    if spec.J != 0.0:
        for b in lat.bonds:
            for other in "xyz":
                if other != b.kind:
                    c.rotation(lat.bond_pauli(b, other), -spec.J * tau)
    half_field = [(lat.boundary_pauli(s, a), -0.5 * spec.h * tau) for s, a in lat.boundary_terms]
    if spec.h != 0.0:
        for p, th in half_field:
            c.rotation(p, th)
    for kind in params.ordering:
        _bond_pass(c, lat, kind, K[kind], params.time(kind))
    for kind in params.ordering:
        _bond_pass(c, lat, kind, K[kind], tau - params.prime(kind))
    if spec.h != 0.0:
        for p, th in half_field:
            c.rotation(p, th)
    return c


class StepPropagator:
    """Pre-planned fused application of one step circuit."""

    def __init__(self, circuit: Circuit):
        self.rotations = [(g.pauli, g.theta) for g in circuit.gates if isinstance(g, PauliRotation)]
        if len(self.rotations) != len(circuit.gates):
            raise ValueError("step circuits contain rotations only")
        self.n_qubits = circuit.n_qubits
        self.plan = plan_blocks([p for p, _ in self.rotations])

    def apply(self, amps: np.ndarray, n_steps: int = 1) -> np.ndarray:
        for _ in range(n_steps):
            _run_rotations(amps, self.rotations, self.plan)
        return amps


def evolve(s: StateVector, params: StepParams, lat: HoneycombLattice, spec: HamiltonianSpec,
           n_steps: int, snapshot=None) -> StateVector:
    """Apply ``n_steps`` steps in place; ``snapshot(step, state)`` is called after each one."""
    prop = StepPropagator(build_step_circuit(params, lat, spec))
    if snapshot is not None:
        snapshot(0, s)
    for k in range(n_steps):
        prop.apply(s.amplitudes)
        if snapshot is not None:
            snapshot(k + 1, s)
    return s


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Dense unitary of a rotation circuit, column by column (small systems only)."""
    prop = StepPropagator(circuit)
    dim = 1 << circuit.n_qubits
    out = np.zeros((dim, dim), dtype=np.complex128)
    col = np.empty(dim, dtype=np.complex128)
    for j in range(dim):
        col[:] = 0
        col[j] = 1
        prop.apply(col)
        out[:, j] = col
    return out


def normalized_error(u: np.ndarray, v: np.ndarray) -> float:
    """||u - v||_F / ||I||_F."""
    return float(np.linalg.norm(u - v) / math.sqrt(u.shape[0]))


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(np.asarray(ys)), 1)[0])


# ---------------------------------------------------------------------------
# T-junction calibration


def _t_junction_target(tau: float, spec: HamiltonianSpec) -> tuple[HoneycombLattice, np.ndarray]:
    tj = build_t_junction()
    K = _effective_K(spec)
    h = np.zeros((16, 16), dtype=complex)
    for b in tj.bonds:
        h += K[b.kind] * tj.bond_pauli(b).to_matrix()
    for t in tj.triples:
        h += spec.V * tj.triple_pauli(t).to_matrix()
    return tj, sla.expm(-1j * tau * h)


def _t_junction_unitary(tj: HoneycombLattice, params: StepParams, K: dict[str, float]) -> np.ndarray:
    u = np.eye(16, dtype=complex)
    bond = {b.kind: tj.bond_pauli(b).to_matrix() for b in tj.bonds}
    eye = np.eye(16)
    passes = [(a, params.time(a)) for a in params.ordering]
    passes += [(a, params.tau - params.prime(a)) for a in params.ordering]
    for kind, t in passes:
        th = -K[kind] * t
        u = (math.cos(th) * eye + 1j * math.sin(th) * bond[kind]) @ u
    return u


def t_junction_error(params: StepParams, spec: HamiltonianSpec) -> float:
    tj, target = _t_junction_target(params.tau, spec)
    return normalized_error(_t_junction_unitary(tj, params, _effective_K(spec)), target)


def _start_candidates(tau: float, spec: HamiltonianSpec) -> list[StepParams]:
    """Analytic times for every ordering and branch that has them, else an even split."""
    out = []
    for ordering in itertools.permutations("xyz"):
        for branch in "+-":
            try:
                out.append(analytic_times(tau, spec, ordering, branch))
            except NoRealSolution:
                pass
    if not out:
        half = (tau / 2,) * 3
        out.append(StepParams(tau, half, half, select_ordering(spec.V), "even"))
    return out


def _fit_t_junction(tau: float, spec: HamiltonianSpec, starts: list[StepParams],
                    tol: float) -> tuple[StepParams, float]:
    tj, target = _t_junction_target(tau, spec)
    K = _effective_K(spec)
    errs = [t_junction_error(p, spec) for p in starts]
    best_err = min(errs)
    best = starts[int(np.argmin(errs))]
    for st in sorted(starts, key=lambda p: t_junction_error(p, spec)):

        def resid(v, st=st):
            d = (_t_junction_unitary(tj, st.with_vector(v), K) - target).ravel() / 4.0
            return np.concatenate([d.real, d.imag])

        for x0 in (st.vector, st.vector + 1e-3):
            sol = least_squares(resid, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
            cand = st.with_vector(sol.x, branch="opt")
            err = t_junction_error(cand, spec)
            if err < best_err:
                best, best_err = cand, err
            if best_err <= tol:
                return best, best_err
    return best, best_err


def optimize_t_junction(tau: float, spec: HamiltonianSpec, start: StepParams | None = None,
                        tol: float = 1e-9) -> StepParams:
    """Fit all six bond times to exp(-i H' tau) on the four-spin junction.

    Starts from the analytic times and minimises the normalised Frobenius
    distance with a trust-region least-squares solver.  When the analytic
    times do not exist for the default ordering, every ordering and branch
    that has them is tried; if that still misses ``tol``, the fit is
    continued in V from anchors at V/2, V/4 and 2V.  Falls back to the
    best start (with a warning) if nothing improves it.
    """
    if start is not None:
        starts = [start]
    else:
        try:
            starts = [analytic_times(tau, spec)]
        except NoRealSolution as exc:
            log.info("%s; trying other orderings", exc)
            starts = _start_candidates(tau, spec)
    first_err = min(t_junction_error(p, spec) for p in starts)
    best, best_err = _fit_t_junction(tau, spec, starts, tol)
    if best_err > tol and start is None and spec.V != 0.0:
        for scale in (0.5, 0.25, 2.0):
            p, _ = _fit_t_junction(tau, spec.replace(V=scale * spec.V),
                                   _start_candidates(tau, spec.replace(V=scale * spec.V)), tol)
            for v in np.linspace(scale * spec.V, spec.V, 9)[1:]:
                p, err = _fit_t_junction(tau, spec.replace(V=float(v)), [p], tol)
            if err < best_err:
                best, best_err = p, err
            if best_err <= tol:
                break
    if best_err >= first_err:
        warnings.warn("T-junction fit did not improve on the starting times", RuntimeWarning)
    elif best_err > tol:
        log.warning("T-junction fit stopped at error %.3e", best_err)
    return best


def exact_step_error(params: StepParams, lat: HoneycombLattice, spec: HamiltonianSpec,
                     hs: PauliSum | None = None) -> float:
    """Normalised distance between one step and exp(-i H tau) (dense, small clusters)."""
    hs = hs or build_hamiltonian(spec, lat)
    target = sla.expm(-1j * params.tau * hs.to_dense())
    return normalized_error(circuit_unitary(build_step_circuit(params, lat, spec)), target)

