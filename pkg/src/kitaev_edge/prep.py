"""Ground-state preparation: product layer, vortex-free projection with feedforward, variational layers.

The prepared state is ``U2 P_VF U1 |0>``.  ``U1`` is a layer of single-qubit
rotations R^z R^y (with ``R^a(t) = exp(i t sigma^a)``), ``P_VF`` projects onto
the joint +1 eigenspace of every plaquette operator by measuring each one
and repairing a -1 outcome with a single-qubit correction Pauli, and ``U2``
is a stack of layers made of boundary-field and bond exponentials
``exp(-i phi sigma)``, ``exp(-i phi sigma sigma)``.

In product-start mode ``U1`` and the projection are replaced by a single
R^y layer.

Gradients use the adjoint method for the ``U2`` angles and an exact
product-state formula for the ``U1`` angles: for a product state ``phi``
and the projector ``P``, ``|<g|P phi>|^2 / <phi|P|phi>`` needs only one
contraction of ``P g`` against the product and the 2**n_plaquettes
single-site expectation products of the plaquette-operator subsets.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .hamiltonian import HamiltonianSpec
from .lattice import HoneycombLattice
from .pauli import PauliString, multiply
from .statevector import (
    Circuit,
    ConditionedPauli,
    MidCircuitMeasure,
    PauliRotation,
    ProjectionError,
    StateVector,
    expectations,
    plan_blocks,
    product_environments,
    product_state,
    rotation_overlap_gradient,
    run_circuit,
)

__all__ = [
    "PrepAnsatz",
    "OptimizeResult",
    "new_ansatz",
    "build_u1_circuit",
    "build_u2_circuit",
    "vortex_free_circuit",
    "project_vortex_free",
    "prepare_state",
    "noisy_stage",
    "infidelity",
    "PrepProblem",
    "optimize",
    "default_mode",
]

log = logging.getLogger(__name__)

PROJECTED = "projected"
PRODUCT = "product"
_PASS_ORDER = ("z", "y", "x")  # bond families in the order they act within a layer


def default_mode(spec: HamiltonianSpec) -> tuple[str, bool]:
    """(mode, generalized) used for a coupling set: strong Heisenberg starts from a product state."""
    if spec.J == 0.0:
        return PROJECTED, False
    return (PRODUCT if abs(spec.J) >= 0.1 else PROJECTED), True


@dataclass
class PrepAnsatz:
    n_sites: int
    depth: int
    mode: str = PROJECTED
    generalized: bool = False
    theta: np.ndarray = None        # (n_sites, 2): R^y and R^z angles of U1
    phi_bonds: np.ndarray = None    # (depth, n_bonds)
    phi_field: np.ndarray = None    # (depth, n_boundary)
    Phi: np.ndarray = None          # (depth, n_bonds, 2, 2): [layer, bond, end, (y, z)]
    fixed: dict = field(default_factory=dict)  # site -> correction Pauli label

    def __post_init__(self):
        if self.mode not in (PROJECTED, PRODUCT):
            raise ValueError(f"unknown mode {self.mode!r}")

    # flat parameter vector -------------------------------------------
    def vector(self) -> np.ndarray:
        parts = [self.theta.ravel(), self.phi_bonds.ravel(), self.phi_field.ravel()]
        if self.generalized:
            parts.append(self.Phi.ravel())
        return np.concatenate(parts)

    def with_vector(self, v: np.ndarray) -> PrepAnsatz:
        v = np.asarray(v, dtype=float)
        out = self.copy()
        sizes = [out.theta.size, out.phi_bonds.size, out.phi_field.size]
        if out.generalized:
            sizes.append(out.Phi.size)
        pieces = np.split(v, np.cumsum(sizes)[:-1])
        out.theta = pieces[0].reshape(out.theta.shape)
        out.phi_bonds = pieces[1].reshape(out.phi_bonds.shape)
        out.phi_field = pieces[2].reshape(out.phi_field.shape)
        if out.generalized:
            out.Phi = pieces[3].reshape(out.Phi.shape)
        return out

    def free_mask(self, theta=True, layers=True) -> np.ndarray:
        th = np.zeros_like(self.theta, dtype=bool)
        if theta:
            if self.mode == PROJECTED:
                th[:] = True
                for site in self.fixed:
                    th[site] = False
            else:
                th[:, 0] = True
        rest = np.full(self.vector().size - th.size, layers, dtype=bool)
        return np.concatenate([th.ravel(), rest])

    def n_free(self, theta=True, layers=True) -> int:
        return int(self.free_mask(theta, layers).sum())

    def copy(self) -> PrepAnsatz:
        return PrepAnsatz(self.n_sites, self.depth, self.mode, self.generalized, self.theta.copy(),
                          self.phi_bonds.copy(), self.phi_field.copy(),
                          None if self.Phi is None else self.Phi.copy(), dict(self.fixed))

    def deepened(self, depth: int) -> PrepAnsatz:
        """Same state, more layers: the new layers start at zero (identity)."""
        if depth < self.depth:
            raise ValueError("cannot reduce depth")
        out = self.copy()
        extra = depth - self.depth
        out.depth = depth
        out.phi_bonds = np.vstack([self.phi_bonds, np.zeros((extra, self.phi_bonds.shape[1]))])
        out.phi_field = np.vstack([self.phi_field, np.zeros((extra, self.phi_field.shape[1]))])
        if self.generalized:
            out.Phi = np.concatenate([self.Phi, np.zeros((extra,) + self.Phi.shape[1:])])
        return out

    # serialisation -----------------------------------------------------------
    def to_dict(self, lat: HoneycombLattice | None = None) -> dict:
        d = {
            "n_sites": self.n_sites,
            "depth": self.depth,
            "mode": self.mode,
            "generalized": self.generalized,
            "fixed": {str(k): v for k, v in self.fixed.items()},
            "theta": {str(q): {"y": float(self.theta[q, 0]), "z": float(self.theta[q, 1])}
                      for q in range(self.n_sites)},
            "layers": [],
        }
        for layer in range(self.depth):
            entry = {
                "bonds": [float(a) for a in self.phi_bonds[layer]],
                "field": [float(a) for a in self.phi_field[layer]],
            }
            if self.generalized:
                entry["single"] = self.Phi[layer].tolist()
            if lat is not None:
                entry["bond_sites"] = [[b.j, b.k, b.kind] for b in lat.bonds]
                entry["field_sites"] = [[s, a] for s, a in lat.boundary_terms]
            d["layers"].append(entry)
        return d

    def to_json(self, lat: HoneycombLattice | None = None) -> str:
        return json.dumps(self.to_dict(lat), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> PrepAnsatz:
        n = d["n_sites"]
        theta = np.array([[d["theta"][str(q)]["y"], d["theta"][str(q)]["z"]] for q in range(n)])
        layers = d["layers"]
        nb = len(layers[0]["bonds"]) if layers else 0
        nf = len(layers[0]["field"]) if layers else 0
        pb = np.array([l["bonds"] for l in layers]).reshape(len(layers), nb)
        pf = np.array([l["field"] for l in layers]).reshape(len(layers), nf)
        Phi = np.array([l["single"] for l in layers]).reshape(len(layers), nb, 2, 2) if d["generalized"] else None
        return cls(n, d["depth"], d["mode"], d["generalized"], theta, pb, pf, Phi,
                   {int(k): v for k, v in d["fixed"].items()})

    @classmethod
    def from_json(cls, text: str) -> PrepAnsatz:
        return cls.from_dict(json.loads(text))


def new_ansatz(lat: HoneycombLattice, depth: int, mode: str = PROJECTED, generalized: bool = False,
               rng: np.random.Generator | None = None, scale: float = 0.0) -> PrepAnsatz:
    """Ansatz with correction qubits pinned and free angles drawn uniformly (or zero)."""
    nb, nf = len(lat.bonds), len(lat.boundary_terms)
    rng = rng or np.random.default_rng(0)
    theta = np.zeros((lat.n_sites, 2))
    fixed = {}
    if mode == PROJECTED:
        theta = rng.uniform(-np.pi / 2, np.pi / 2, size=(lat.n_sites, 2)) if scale else theta
        for site, lab in lat.correction_qubits.values():
            fixed[site] = lab
            # +1 eigenstate of the correction Pauli: |0> for Z, |+> = R^y(-pi/4)|0> for X
            theta[site] = (0.0, 0.0) if lab == "Z" else (-np.pi / 4, 0.0)
    else:
        theta[:, 0] = rng.uniform(-np.pi / 2, np.pi / 2, size=lat.n_sites) if scale else 0.0
    pb = scale * 0.1 * rng.standard_normal((depth, nb))
    pf = scale * 0.1 * rng.standard_normal((depth, nf))
    Phi = scale * 0.1 * rng.standard_normal((depth, nb, 2, 2)) if generalized else None
    return PrepAnsatz(lat.n_sites, depth, mode, generalized, theta, pb, pf, Phi, fixed)


# ---------------------------------------------------------------------------
# circuits


def build_u1_circuit(ansatz: PrepAnsatz) -> Circuit:
    n = ansatz.n_sites
    c = Circuit(n)
    for q in range(n):
        c.rotation(PauliString.single(n, q, "Y"), ansatz.theta[q, 0])
        if ansatz.mode == PROJECTED:
            c.rotation(PauliString.single(n, q, "Z"), ansatz.theta[q, 1])
    return c


def u1_product_vectors(ansatz: PrepAnsatz) -> np.ndarray:
    ty, tz = ansatz.theta[:, 0], ansatz.theta[:, 1]
    if ansatz.mode == PRODUCT:
        tz = np.zeros_like(tz)
    return np.stack([np.exp(1j * tz) * np.cos(ty), -np.exp(-1j * tz) * np.sin(ty)], axis=1)


def _u2_layout(lat: HoneycombLattice, ansatz: PrepAnsatz):
    """Gates of U2 as (pauli, parameter index into the flat vector, sign)."""
    n = lat.n_sites
    nb, nf = len(lat.bonds), len(lat.boundary_terms)
    base_b = ansatz.theta.size
    base_f = base_b + ansatz.phi_bonds.size
    base_s = base_f + ansatz.phi_field.size
    by_kind = {k: [i for i, b in enumerate(lat.bonds) if b.kind == k] for k in "xyz"}
    gates = []
    for layer in range(ansatz.depth):
        for i, (site, kind) in enumerate(lat.boundary_terms):
            gates.append((lat.boundary_pauli(site, kind), base_f + layer * nf + i, -1.0))
        for kind in _PASS_ORDER:
            for bi in by_kind[kind]:
                b = lat.bonds[bi]
                gates.append((lat.bond_pauli(b), base_b + layer * nb + bi, -1.0))
                if ansatz.generalized:
                    for end, q in enumerate((b.j, b.k)):
                        idx = base_s + ((layer * nb + bi) * 2 + end) * 2
                        gates.append((PauliString.single(n, q, "Y"), idx, 1.0))
                        gates.append((PauliString.single(n, q, "Z"), idx + 1, 1.0))
    return gates


def build_u2_circuit(ansatz: PrepAnsatz, lat: HoneycombLattice, spec: HamiltonianSpec | None = None) -> Circuit:
    if spec is not None and spec.J != 0.0 and not ansatz.generalized:
        log.warning("J != 0 with the plain ansatz; the generalized ansatz is recommended")
    v = ansatz.vector()
    c = Circuit(lat.n_sites)
    for p, idx, sign in _u2_layout(lat, ansatz):
        c.append(PauliRotation(p, sign * v[idx]))
    return c


def vortex_free_circuit(lat: HoneycombLattice) -> Circuit:
    """Measure every plaquette operator and apply its correction Pauli on a -1 outcome."""
    c = Circuit(lat.n_sites)
    for p, (site, lab) in lat.correction_qubits.items():
        c.append(MidCircuitMeasure(lat.plaquette_operator(p), f"w{p}"))
        c.append(ConditionedPauli(f"w{p}", -1, PauliString.single(lat.n_sites, site, lab)))
    return c


def project_vortex_free(s: StateVector, lat: HoneycombLattice, rng: np.random.Generator | None = None,
                        forced_outcomes=None) -> tuple[StateVector, dict[str, int]]:
    """Measurement + feedforward projection, in place.

    ``forced_outcomes`` is a sequence of +-1 per plaquette (or a mapping by
    register name).  The input must be an eigenstate of every correction
    Pauli, otherwise the result would depend on the outcomes.
    """
    corr = lat.correction_qubits
    evs = expectations(s, [PauliString.single(lat.n_sites, site, lab) for site, lab in corr.values()])
    for (p, (site, lab)), ev in zip(corr.items(), evs):
        if abs(abs(ev) - 1.0) > 1e-8:
            raise ProjectionError(
                f"correction qubit {site} of plaquette {p} is not a {lab} eigenstate (<{lab}> = {ev:.3g})")
    forced = None
    if forced_outcomes is not None:
        if isinstance(forced_outcomes, dict):
            forced = forced_outcomes
        else:
            forced = {f"w{p}": int(o) for p, o in enumerate(forced_outcomes)}
    if forced is None and rng is None:
        rng = np.random.default_rng()
    return run_circuit(vortex_free_circuit(lat), s, rng, forced)


def prepare_state(ansatz: PrepAnsatz, lat: HoneycombLattice, rng: np.random.Generator | None = None,
                  forced_outcomes=None) -> StateVector:
    """U2 P_VF U1 |0> by direct circuit simulation (measurement outcomes sampled or forced)."""
    s = StateVector.zeros(lat.n_sites)
    run_circuit(build_u1_circuit(ansatz), s)
    if ansatz.mode == PROJECTED:
        project_vortex_free(s, lat, rng or np.random.default_rng(0), forced_outcomes)
    run_circuit(build_u2_circuit(ansatz, lat), s)
    return s


def noisy_stage(ansatz: PrepAnsatz, lat: HoneycombLattice, rng: np.random.Generator | None = None):
    """(state after U1 and the projection, U2 as a list of (pauli, theta)) for noise injection on U2."""
    s = StateVector.zeros(lat.n_sites)
    run_circuit(build_u1_circuit(ansatz), s)
    if ansatz.mode == PROJECTED:
        project_vortex_free(s, lat, rng or np.random.default_rng(0))
    return s, [(g.pauli, g.theta) for g in build_u2_circuit(ansatz, lat).gates]


def infidelity(ansatz: PrepAnsatz, lat: HoneycombLattice, spec: HamiltonianSpec | None,
               psi_gs: StateVector) -> float:
    """1 - |<psi_gs|psi>|^2 with the prepared state normalised."""
    s = prepare_state(ansatz, lat)
    return float(1.0 - abs(np.vdot(psi_gs.amplitudes, s.amplitudes)) ** 2 / s.norm() ** 2)


# ---------------------------------------------------------------------------
# cost and gradient


def _subset_paulis(lat: HoneycombLattice) -> list[PauliString]:
    ws = [lat.plaquette_operator(p) for p in range(len(lat.plaquettes))]
    out = []
    for r in range(len(ws) + 1):
        for combo in combinations(range(len(ws)), r):
            acc = PauliString.identity(lat.n_sites)
            for i in combo:
                acc = multiply(acc, ws[i])
            out.append(acc)
    return out


_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class PrepProblem:
    """Infidelity and its gradient for one lattice, target state and ansatz shape."""

    def __init__(self, lat: HoneycombLattice, target: StateVector, template: PrepAnsatz):
        self.lat = lat
        self.target = target.amplitudes
        self.template = template
        self.gates = _u2_layout(lat, template)
        self.plan = plan_blocks([p for p, _, _ in self.gates])
        self.n_evals = 0
        if template.mode == PROJECTED:
            subsets = _subset_paulis(lat)
            self._subset_phase = np.array([p.phase for p in subsets])
            self._subset_ops = np.array([[_SINGLE[p.factor_at(q)] for q in range(lat.n_sites)] for p in subsets])
            self._proj_target = self._project(self.target.copy())
        self._cached_theta = None
        self._cached_chi = None

    # projector onto the vortex-free sector, unnormalised, in place
    def _project(self, amps: np.ndarray) -> np.ndarray:
        for p in range(len(self.lat.plaquettes)):
            w = self.lat.plaquette_operator(p)
            _kernels.add_pauli_image(amps, w.x, w.z, w.kernel_phase, 1.0)
            amps *= 0.5
        return amps

    def _norm_and_grad(self, vecs: np.ndarray, dvecs: np.ndarray):
        """<phi|P|phi> and its derivative along dvecs[q, k] (k = y, z)."""
        # m[s, q] = <v_q| A_sq |v_q>, dm[s, q, k] = 2 Re <dv_qk| A_sq |v_q>
        av = np.einsum("sqab,qb->sqa", self._subset_ops, vecs)
        m = np.einsum("qa,sqa->sq", vecs.conj(), av)
        dm = 2 * np.einsum("qka,sqa->sqk", dvecs.conj(), av).real
        m = m.real
        scale = 1.0 / len(self._subset_phase)
        prods = np.prod(m, axis=1)
        norm = float(scale * np.sum(self._subset_phase.real * prods))
        # product over all other sites for each (s, q); safe for zero factors
        others = np.empty_like(m)
        for q in range(m.shape[1]):
            others[:, q] = np.prod(np.delete(m, q, axis=1), axis=1)
        grad = scale * np.einsum("s,sq,sqk->qk", self._subset_phase.real, others, dm)
        return norm, grad

    @staticmethod
    def _vec_derivs(theta: np.ndarray, product: bool):
        ty, tz = theta[:, 0], theta[:, 1]
        if product:
            tz = np.zeros_like(tz)
        ez, emz = np.exp(1j * tz), np.exp(-1j * tz)
        vec = np.stack([ez * np.cos(ty), -emz * np.sin(ty)], axis=1)
        dy = np.stack([-ez * np.sin(ty), -emz * np.cos(ty)], axis=1)
        dz = np.stack([1j * ez * np.cos(ty), 1j * emz * np.sin(ty)], axis=1)
        if product:
            dz = np.zeros_like(dz)
        return vec, np.stack([dy, dz], axis=1)

    def cost_grad(self, v: np.ndarray, free: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """Infidelity and its gradient with respect to the full flat vector."""
        self.n_evals += 1
        t = self.template
        ntheta = t.theta.size
        theta = v[:ntheta].reshape(t.theta.shape)
        grad = np.zeros_like(v)
        need_theta = free is None or free[:ntheta].any()
        need_layers = bool(self.gates) and (free is None or free[ntheta:].any())
        product = t.mode == PRODUCT
        vec, dvec = self._vec_derivs(theta, product)

        if not self.gates:
            # U2 = identity: everything follows from one contraction
            overlap, env = product_environments(self._proj_target if not product else self.target, vec)
            do = np.einsum("qb,qkb->qk", env, dvec)
            if product:
                norm, dnorm = 1.0, np.zeros_like(do.real)
            else:
                norm, dnorm = self._norm_and_grad(vec, dvec)
            f = abs(overlap) ** 2 / norm
            df = (2 * (np.conj(overlap) * do).real * norm - abs(overlap) ** 2 * dnorm) / norm**2
            grad[:ntheta] = -df.ravel()
            return 1.0 - f, grad

        # state entering U2
        if not need_theta and self._cached_theta is not None and np.array_equal(theta, self._cached_theta):
            chi, norm = self._cached_chi
        else:
            chi = product_state(vec).amplitudes
            if not product:
                self._project(chi)
            norm = float(np.vdot(chi, chi).real)
            if not need_theta:
                self._cached_theta, self._cached_chi = theta.copy(), (chi, norm)
        rots = [(p, s * v[i]) for p, i, s in self.gates]
        overlap, g_rot, lam = rotation_overlap_gradient(chi, rots, self.target, self.plan)
        f = abs(overlap) ** 2 / norm
        if need_layers:
            df_rot = 2 * (np.conj(overlap) * g_rot).real / norm
            for (p, i, s), d in zip(self.gates, df_rot):
                grad[i] -= s * d
        if need_theta:
            # <lam| P |phi> = <P lam|phi>; lam = U2^dagger target
            if not product:
                self._project(lam)
            o2, env = product_environments(lam, vec)
            do = np.einsum("qb,qkb->qk", env, dvec)
            if product:
                dnorm = np.zeros_like(do.real)
            else:
                _, dnorm = self._norm_and_grad(vec, dvec)
            df = (2 * (np.conj(o2) * do).real * norm - abs(o2) ** 2 * dnorm) / norm**2
            grad[:ntheta] = -df.ravel()
        return 1.0 - f, grad


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class OptimizeResult:
    ansatz: PrepAnsatz
    cost: float
    trace: list = field(default_factory=list)   # (stage, depth, iteration, cost)
    per_depth: dict = field(default_factory=dict)
    grad_norm: float = float("nan")
    converged: bool = True

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "depth", "iteration", "C_GS"])
            w.writerows(self.trace)


def _lbfgs(problem: PrepProblem, start: np.ndarray, free: np.ndarray, maxiter: int, trace: list,
           label: tuple, gtol: float):
    x0 = start[free]

    def fun(x):
        v = start.copy()
        v[free] = x
        c, g = problem.cost_grad(v, free)
        return c, g[free]

    def cb(intermediate_result):
        trace.append(label + (len(trace), float(intermediate_result.fun)))

    res = minimize(fun, x0, jac=True, method="L-BFGS-B", callback=cb,
                   options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-15, "maxcor": 30})
    v = start.copy()
    v[free] = res.x
    return v, float(res.fun), float(np.linalg.norm(res.jac)), bool(res.success)


def optimize(ansatz: PrepAnsatz, lat: HoneycombLattice, spec: HamiltonianSpec | None, psi_gs: StateVector,
             strategy: str = "two-stage", restarts: int = 4, seed: int = 0, maxiter: int = 500,
             stage1_maxiter: int = 300, gtol: float = 1e-8, depths=None,
             callback=None) -> OptimizeResult:
    """Minimise the preparation infidelity.

    ``two-stage``: the U1 angles are optimised alone (best of ``restarts``
    seeded starts), frozen, and the layers are then added one depth at a
    time, each depth warm-started from the previous optimum.  ``joint``
    also frees the U1 angles during the layer stage.  ``callback(depth,
    cost)`` is invoked after every depth.
    """
    rng = np.random.default_rng(seed)
    final_depth = ansatz.depth
    depths = list(depths) if depths is not None else list(range(1, final_depth + 1))
    trace: list = []
    per_depth: dict = {}

    # stage 1 --------------------------------------------------------------
    shallow = ansatz.copy()
    shallow.depth = 0
    shallow.phi_bonds = ansatz.phi_bonds[:0]
    shallow.phi_field = ansatz.phi_field[:0]
    if ansatz.generalized:
        shallow.Phi = ansatz.Phi[:0]
    prob0 = PrepProblem(lat, psi_gs, shallow)
    free0 = shallow.free_mask(theta=True, layers=False)
    best = None
    starts = [shallow.vector()]
    for _ in range(max(restarts - 1, 0)):
        v = shallow.vector().copy()
        v[free0] = rng.uniform(-np.pi / 2, np.pi / 2, size=int(free0.sum()))
        starts.append(v)
    for k, v0 in enumerate(starts):
        v, c, gn, ok = _lbfgs(prob0, v0, free0, stage1_maxiter, trace, ("stage1", 0), gtol)
        log.info("stage 1 start %d: C_GS = %.6f", k, c)
        if best is None or c < best[1]:
            best = (v, c, gn, ok)
    current = shallow.with_vector(best[0])
    per_depth[0] = best[1]
    trace.append(("stage1", 0, 0, best[1]))
    if callback:
        callback(0, best[1])
    cost, gnorm, ok = best[1], best[2], best[3]

    # stage 2 --------------------------------------------------------------
    for d in depths:
        current = current.deepened(d)
        prob = PrepProblem(lat, psi_gs, current)
        free = current.free_mask(theta=(strategy == "joint"), layers=True)
        v, c, gnorm, ok = _lbfgs(prob, current.vector(), free, maxiter, trace, ("stage2", d), gtol)
        if c <= cost or strategy == "joint":
            current = current.with_vector(v)
            cost = c
        per_depth[d] = cost
        trace.append(("stage2", d, prob.n_evals, cost))
        log.info("depth %d: C_GS = %.6f (grad %.2e, %d evaluations)", d, cost, gnorm, prob.n_evals)
        if callback:
            callback(d, cost)
    if current.depth < final_depth:
        current = current.deepened(final_depth)
    ok = ok or cost < 1e-8   # an exact preparation counts as converged whatever the iteration budget
    if not ok:
        log.warning("optimizer stopped before convergence (gradient norm %.3e)", gnorm)
    return OptimizeResult(current, cost, trace, per_depth, gnorm, ok)
