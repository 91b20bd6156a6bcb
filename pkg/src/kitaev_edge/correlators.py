"""Two-time spin correlators, sampled measurements and plaquette postselection.

``<Z_i(t) Z_C>`` is obtained three ways:

* exact: co-evolve ``U(t) Z_C |psi>`` and ``U(t) |psi>`` and take the
  matrix element of ``Z_i`` between them;
* decomposed: the real part from a mid-circuit ``Z_C`` measurement,
  ``p+ <Z_i>_+ - p- <Z_i>_-``, and the imaginary part from two circuits
  that first apply ``exp(+-i pi Z_C / 4)``, ``-(<Z_i>_+ - <Z_i>_-) / 2``;
* sampled: the decomposed circuits with a finite number of shots.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .hamiltonian import PauliSum, trotter_sequence
from .lattice import HoneycombLattice
from .pauli import PauliString, commutes
from .statevector import (
    StateVector,
    _run_rotations,
    plan_blocks,
    random_two_qubit_pauli,
)

__all__ = [
    "CorrelatorSeries",
    "TrotterBackend",
    "StepBackend",
    "exact_correlator",
    "mitarai_correlator",
    "asymmetry",
    "write_series_csv",
    "ShotRecords",
    "group_qubitwise",
    "basis_rotations",
    "measure_energy_terms",
    "sample_energy_shots",
    "postselect_plaquettes",
    "clean_fraction",
    "tune_error_rate",
    "energy_from_records",
]

log = logging.getLogger(__name__)


@dataclass
class CorrelatorSeries:
    site: int
    center: int
    times: np.ndarray
    values: np.ndarray
    variant: str
    shots: int = 0
    retained_fraction: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def rows(self):
        ret = self.retained_fraction if self.retained_fraction is not None else np.ones(len(self.times))
        for t, v, r in zip(self.times, self.values, ret):
            yield [f"{t:.6g}", self.site, repr(float(v.real)), repr(float(v.imag)), self.variant, self.shots,
                   f"{r:.6g}"]


def write_series_csv(path, series: list[CorrelatorSeries]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "site", "re", "im", "variant", "shots", "retained_fraction"])
        for s in series:
            w.writerows(s.rows())


def asymmetry(left: CorrelatorSeries, right: CorrelatorSeries, upto: float | None = None) -> float:
    """sum_t (|C_L(t)| - |C_R(t)|) over the shared grid (optionally t <= upto)."""
    mask = np.ones(len(left.times), dtype=bool) if upto is None else left.times <= upto + 1e-12
    return float(np.sum(left.magnitude[mask] - right.magnitude[mask]))


# ---------------------------------------------------------------------------
# evolution backends


class TrotterBackend:
    """exp(-i H dt) by second-order Trotter with a fine step (0.01 by default)."""

    name = "trotter"

    def __init__(self, hs: PauliSum, dt: float = 0.01):
        self.hs = hs
        self.dt = dt
        self._cache: dict[int, tuple] = {}

    def advance(self, amps: np.ndarray, duration: float) -> np.ndarray:
        n = int(round(duration / self.dt))
        if n == 0:
            return amps
        if abs(n * self.dt - duration) > 1e-9:
            raise ValueError(f"duration {duration} is not a multiple of dt={self.dt}")
        if n not in self._cache:
            seq = trotter_sequence(self.hs, self.dt)
            self._cache = {n: (seq, plan_blocks([p for p, _ in seq]))}
        seq, plan = self._cache[n]
        for _ in range(n):
            _run_rotations(amps, seq, plan)
        return amps


class StepBackend:
    """Whole steps of a synthesised propagator (``evolution.StepPropagator``)."""

    name = "step"

    def __init__(self, propagator, tau: float):
        self.prop = propagator
        self.dt = tau

    def advance(self, amps: np.ndarray, duration: float) -> np.ndarray:
        n = int(round(duration / self.dt))
        if abs(n * self.dt - duration) > 1e-9:
            raise ValueError(f"duration {duration} is not a multiple of tau={self.dt}")
        return self.prop.apply(amps, n)


def _z_element(bra: np.ndarray, ket: np.ndarray, site: int) -> complex:
    return complex(_kernels.matrix_element(bra, ket, 0, 1 << site, 1.0))


def _z_expect(amps: np.ndarray, site: int) -> float:
    return float(_kernels.expval(amps, 0, 1 << site, 1.0).real)


def exact_correlator(psi0: StateVector, backend, sites, center: int, t_grid) -> dict[int, CorrelatorSeries]:
    """<psi0| Z_i(t) Z_C |psi0> for every site in ``sites``; t_grid must be increasing."""
    t_grid = np.asarray(t_grid, dtype=float)
    sites = list(sites)
    a = psi0.amplitudes.copy()
    _kernels.apply_pauli(a, 0, 1 << center, 1.0)
    b = psi0.amplitudes.copy()
    vals = np.zeros((len(sites), len(t_grid)), dtype=complex)
    now = 0.0
    for k, t in enumerate(t_grid):
        if t < now - 1e-12:
            raise ValueError("t_grid must be non-decreasing")
        backend.advance(a, t - now)
        backend.advance(b, t - now)
        now = t
        for j, i in enumerate(sites):
            vals[j, k] = _z_element(b, a, i)
    return {i: CorrelatorSeries(i, center, t_grid, vals[j], "exact") for j, i in enumerate(sites)}


def _branch_states(psi0: StateVector, center: int):
    """The four decomposition inputs: Z_C-measured branches and exp(+-i pi/4 Z_C) rotated states."""
    amps = psi0.amplitudes
    zc = 1 << center
    p_plus = 0.5 * (1.0 + _z_expect(amps, center))
    out = {}
    for sign, p in ((1, p_plus), (-1, 1.0 - p_plus)):
        st = amps.copy()
        _kernels.add_pauli_image(st, 0, zc, 1.0, float(sign))
        out[("m", sign)] = (p, st / math.sqrt(4 * p) if p > 1e-14 else None)
    for sign in (1, -1):
        st = amps.copy()
        c = s = 1 / math.sqrt(2)
        # exp(i sign pi/4 Z) = (1 + i sign Z) / sqrt2
        st *= c
        tmp = amps.copy()
        _kernels.apply_pauli(tmp, 0, zc, 1.0)
        st += 1j * sign * s * tmp
        out[("r", sign)] = (1.0, st)
    return out


def mitarai_correlator(psi0: StateVector, backend, sites, center: int, t_grid, mode: str = "noiseless",
                       shots: int = 750, rng: np.random.Generator | None = None) -> dict[int, CorrelatorSeries]:
    """Correlators assembled from the measurement and phase-rotation circuits.

    ``mode="noiseless"`` uses exact branch probabilities and expectations;
    ``mode="sampled"`` draws ``shots`` full-register shots per circuit and
    time point.
    """
    if mode not in ("noiseless", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sampled" and rng is None:
        raise ValueError("sampled mode needs an rng")
    t_grid = np.asarray(t_grid, dtype=float)
    sites = list(sites)
    branches = _branch_states(psi0, center)
    vals = np.zeros((len(sites), len(t_grid)), dtype=complex)
    flags = []
    now = 0.0
    for k, t in enumerate(t_grid):
        for key, (p, st) in branches.items():
            if st is not None:
                backend.advance(st, t - now)
        now = t
        if mode == "noiseless":
            for j, i in enumerate(sites):
                re = 0.0
                for sign in (1, -1):
                    p, st = branches[("m", sign)]
                    if st is not None:
                        re += sign * p * _z_expect(st, i)
                im = -0.5 * (_z_expect(branches[("r", 1)][1], i) - _z_expect(branches[("r", -1)][1], i))
                vals[j, k] = re + 1j * im
        else:
            # real part: each shot measures Z_C, then reads every Z_i
            p_plus = branches[("m", 1)][0]
            n_plus = int(rng.binomial(shots, p_plus))
            acc = np.zeros(len(sites))
            for sign, n in ((1, n_plus), (-1, shots - n_plus)):
                st = branches[("m", sign)][1]
                if n == 0 or st is None:
                    # conditional expectation of an empty branch counts as 0
                    flags.append((float(t), f"no shots with Z_C = {sign:+d}"))
                    continue
                z = _sample_z(st, sites, n, rng)
                acc += sign * z.sum(axis=0)
            re = acc / shots
            zp = _sample_z(branches[("r", 1)][1], sites, shots, rng).mean(axis=0)
            zm = _sample_z(branches[("r", -1)][1], sites, shots, rng).mean(axis=0)
            vals[:, k] = re - 0.5j * (zp - zm)
    variant = "circuit-noiseless" if mode == "noiseless" else "sampled"
    return {i: CorrelatorSeries(i, center, t_grid, vals[j], variant, shots if mode == "sampled" else 0,
                                None, flags) for j, i in enumerate(sites)}


def _sample_bits(amps: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    p = amps.real**2 + amps.imag**2
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


def _sample_z(amps: np.ndarray, sites, n: int, rng: np.random.Generator) -> np.ndarray:
    bits = _sample_bits(amps, n, rng)
    return np.stack([1 - 2 * ((bits >> i) & 1) for i in sites], axis=1).astype(float)


# ---------------------------------------------------------------------------
# term-resolved energies


def group_qubitwise(terms: list[PauliString]) -> list[list[int]]:
    """Greedy partition into qubit-wise commuting groups (first fit, input order)."""
    groups: list[list[int]] = []
    bases: list[dict[int, str]] = []
    for t, p in enumerate(terms):
        f = p.factors
        for g, basis in enumerate(bases):
            if all(basis.get(q, lab) == lab for q, lab in f.items()):
                groups[g].append(t)
                basis.update(f)
                break
        else:
            groups.append([t])
            bases.append(dict(f))
    return groups


def basis_rotations(n: int, basis: dict[int, str]) -> list[tuple[PauliString, float]]:
    """Rotations after which a Z readout measures ``basis``: exp(i pi/4 Y) for X, exp(-i pi/4 X) for Y."""
    out = []
    for q, lab in sorted(basis.items()):
        if lab == "X":
            out.append((PauliString.single(n, q, "Y"), math.pi / 4))
        elif lab == "Y":
            out.append((PauliString.single(n, q, "X"), -math.pi / 4))
    return out


def _group_basis(terms, group):
    basis = {}
    for t in group:
        basis.update(terms[t].factors)
    for t in group:
        for q, lab in terms[t].factors.items():
            if basis[q] != lab:
                raise RuntimeError("qubit-wise grouping produced a conflicting setting")
    return basis


def _parity_values(bits: np.ndarray, support: int) -> np.ndarray:
    v = bits & support
    par = np.zeros_like(v)
    while np.any(v):
        par ^= v & 1
        v >>= 1
    return 1.0 - 2.0 * par


def measure_energy_terms(psi: StateVector, hs: PauliSum, mode: str = "exact", shots: int = 750,
                         rng: np.random.Generator | None = None, lat: HoneycombLattice | None = None) -> dict:
    """Per-category energies (and plaquette expectations when ``lat`` is given).

    Sampled mode measures each qubit-wise commuting group in its own
    setting with ``shots`` shots and reports standard errors.
    """
    out: dict = {"categories": {}, "stderr": {}}
    if mode == "exact":
        out["categories"] = hs.category_expectations(psi)
        out["stderr"] = {k: 0.0 for k in out["categories"]}
    elif mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        terms = list(hs.terms)
        means = np.zeros(len(terms))
        var = np.zeros(len(terms))
        for group in group_qubitwise(terms):
            basis = _group_basis(terms, group)
            st = psi.amplitudes.copy()
            _run_rotations(st, basis_rotations(psi.n_qubits, basis))
            bits = _sample_bits(st, shots, rng)
            for t in group:
                vals = _parity_values(bits, terms[t].support)
                means[t] = vals.mean()
                var[t] = vals.var(ddof=1) / shots if shots > 1 else 0.0
        for c, cat, m, v in zip(hs.coeffs, hs.categories, means, var):
            out["categories"][cat] = out["categories"].get(cat, 0.0) + c * m
            out["stderr"][cat] = out["stderr"].get(cat, 0.0) + c * c * v
        out["stderr"] = {k: math.sqrt(v) for k, v in out["stderr"].items()}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out["total"] = float(sum(out["categories"].values()))
    if lat is not None:
        out["plaquettes"] = [
            float(_kernels.expval(psi.amplitudes, w.x, w.z, w.kernel_phase).real)
            for w in map(lat.plaquette_operator, range(len(lat.plaquettes)))
        ]
    return out


# ---------------------------------------------------------------------------
# noisy shots and postselection


@dataclass
class ShotRecords:
    setting: np.ndarray      # index of the measurement setting per shot
    bits: np.ndarray         # readout bitstring per shot
    plaquettes: np.ndarray   # (shots, n_plaquettes) of +-1
    settings: list           # basis dict per setting
    groups: list             # term indices per setting

    def __len__(self):
        return len(self.bits)

    def subset(self, mask: np.ndarray) -> ShotRecords:
        return ShotRecords(self.setting[mask], self.bits[mask], self.plaquettes[mask], self.settings, self.groups)


def sample_energy_shots(prepared: StateVector, noisy_gates, lat: HoneycombLattice, hs: PauliSum, shots: int,
                        p_err: float, rng: np.random.Generator) -> ShotRecords:
    """Trajectory sampling of the term-measurement circuits with plaquette readout.

    ``prepared`` is the state entering the noisy part and ``noisy_gates`` a
    list of (pauli, theta) rotations; every weight-2 rotation is followed
    by a random two-qubit Pauli error with probability ``p_err``.  Each
    shot then reads all plaquette operators (ancilla-style, projective)
    and finally the qubits in its setting's basis.
    """
    n = lat.n_sites
    terms = list(hs.terms)
    groups = group_qubitwise(terms)
    settings = [_group_basis(terms, g) for g in groups]
    ws = [lat.plaquette_operator(p) for p in range(len(lat.plaquettes))]
    plan = plan_blocks([p for p, _ in noisy_gates])
    ideal = prepared.amplitudes.copy()
    _run_rotations(ideal, noisy_gates, plan)
    two_qubit = [k for k, (p, _) in enumerate(noisy_gates) if p.weight == 2]
    setting_idx = np.repeat(np.arange(len(groups)), shots)
    bits = np.zeros(len(setting_idx), dtype=np.int64)
    plaq = np.ones((len(setting_idx), len(ws)), dtype=np.int8)
    for s_i, sidx in enumerate(setting_idx):
        hits = [k for k in two_qubit if rng.random() < p_err] if p_err > 0 else []
        if hits:
            st = prepared.amplitudes.copy()
            start = 0
            for k in hits:
                _run_rotations(st, noisy_gates[start:k + 1])
                sites = tuple(q for q in range(n) if noisy_gates[k][0].support >> q & 1)
                err = random_two_qubit_pauli(n, sites, rng)
                _kernels.apply_pauli(st, err.x, err.z, err.kernel_phase)
                start = k + 1
            _run_rotations(st, noisy_gates[start:])
        else:
            st = ideal.copy()
        for p, w in enumerate(ws):
            ev = _kernels.expval(st, w.x, w.z, w.kernel_phase).real
            p_plus = min(max(0.5 * (1 + ev), 0.0), 1.0)
            out = 1 if rng.random() < p_plus else -1
            plaq[s_i, p] = out
            prob = p_plus if out == 1 else 1 - p_plus
            _kernels.add_pauli_image(st, w.x, w.z, w.kernel_phase, float(out))
            st /= math.sqrt(4 * prob)
        _run_rotations(st, basis_rotations(n, settings[sidx]))
        bits[s_i] = _sample_bits(st, 1, rng)[0]
    return ShotRecords(setting_idx, bits, plaq, settings, groups)


def postselect_plaquettes(records: ShotRecords, lat: HoneycombLattice | None = None) -> tuple[ShotRecords, float]:
    """Keep shots whose plaquette readouts are all +1; returns (kept, retained fraction)."""
    keep = np.all(records.plaquettes == 1, axis=1)
    frac = float(keep.mean()) if len(keep) else 0.0
    if not keep.any():
        log.warning("postselection retained no shots; estimate is invalid")
    return records.subset(keep), frac


def energy_from_records(records: ShotRecords, hs: PauliSum) -> dict:
    """Per-category energy estimates (NaN for settings with no shots left)."""
    terms = list(hs.terms)
    cats: dict[str, float] = {}
    for g_i, group in enumerate(records.groups):
        mask = records.setting == g_i
        bits = records.bits[mask]
        for t in group:
            m = _parity_values(bits, terms[t].support).mean() if len(bits) else float("nan")
            cats[hs.categories[t]] = cats.get(hs.categories[t], 0.0) + hs.coeffs[t] * m
    return {"categories": cats, "total": float(sum(cats.values()))}


def _syndrome(p: PauliString, ws: list[PauliString]) -> int:
    s = 0
    for i, w in enumerate(ws):
        if not commutes(p, w):
            s |= 1 << i
    return s


def clean_fraction(noisy_gates, lat: HoneycombLattice, p_err: float) -> float:
    """Exact probability that no plaquette flags an error.

    Valid when the noiseless gates commute with every plaquette operator:
    a Pauli error then flips exactly the plaquettes it anticommutes with,
    wherever it occurs, so the flagged set is the XOR of the per-error
    syndromes.
    """
    ws = [lat.plaquette_operator(p) for p in range(len(lat.plaquettes))]
    n = lat.n_sites
    dist = np.zeros(1 << len(ws))
    dist[0] = 1.0
    labels = ("I", "X", "Y", "Z")
    for p, _ in noisy_gates:
        if p.weight != 2:
            continue
        q0, q1 = (q for q in range(n) if p.support >> q & 1)
        hist = np.zeros_like(dist)
        hist[0] = 1.0 - p_err
        for k in range(1, 16):
            f = {}
            if labels[k >> 2] != "I":
                f[q0] = labels[k >> 2]
            if labels[k & 3] != "I":
                f[q1] = labels[k & 3]
            hist[_syndrome(PauliString.from_factors(n, f), ws)] += p_err / 15
        new = np.zeros_like(dist)
        for s in np.nonzero(hist)[0]:
            new += hist[s] * dist[np.arange(len(dist)) ^ s]
        dist = new
    return float(dist[0])


def tune_error_rate(noisy_gates, lat: HoneycombLattice, target: float = 0.74) -> float:
    """Error probability per two-qubit gate giving the requested clean fraction."""
    return float(brentq(lambda p: clean_fraction(noisy_gates, lat, p) - target, 0.0, 1.0, xtol=1e-12))
