import csv
import itertools

import numpy as np
import pytest

from kitaev_edge.hamiltonian import PRESETS, build_hamiltonian, ground_state_exact
from kitaev_edge.lattice import build_lattice
from kitaev_edge.prep import (
    PRODUCT,
    PROJECTED,
    PrepAnsatz,
    PrepProblem,
    build_u1_circuit,
    build_u2_circuit,
    default_mode,
    infidelity,
    new_ansatz,
    optimize,
    prepare_state,
    project_vortex_free,
)
from kitaev_edge.statevector import ProjectionError, StateVector, expectation, run_circuit

LAT = build_lattice(2, 3)
LAT10 = build_lattice(1, 2)


@pytest.fixture(scope="module")
def gs10():
    return {name: ground_state_exact(build_hamiltonian(PRESETS[name], LAT10)).state for name in PRESETS}


def test_free_parameter_counts():
    a = new_ansatz(LAT, 5)
    assert a.n_free(theta=True, layers=False) == 32
    assert a.n_free(theta=False, layers=True) == 5 * (27 + 12)
    g = new_ansatz(LAT, 3, generalized=True)
    assert g.n_free(theta=False, layers=True) == 3 * (27 + 12 + 4 * 27)
    p = new_ansatz(LAT, 1, PRODUCT, True)
    assert p.n_free(theta=True, layers=False) == 22


@pytest.mark.parametrize("name,depth,count", [("non-abelian", 5, 135), ("abelian", 4, 108), ("heis-weak", 3, 81)])
def test_prep_two_qubit_counts(name, depth, count):
    mode, gen = default_mode(PRESETS[name])
    c = build_u2_circuit(new_ansatz(LAT, depth, mode, gen), LAT)
    assert sum(g.pauli.weight == 2 for g in c.gates) == count


def test_default_modes():
    assert default_mode(PRESETS["non-abelian"]) == (PROJECTED, False)
    assert default_mode(PRESETS["heis-weak"]) == (PROJECTED, True)
    assert default_mode(PRESETS["heis-strong"]) == (PRODUCT, True)


def test_correction_qubits_start_in_eigenstates():
    a = new_ansatz(LAT, 1, rng=np.random.default_rng(1), scale=1.0)
    s, _ = run_circuit(build_u1_circuit(a), StateVector.zeros(22))
    from kitaev_edge.pauli import PauliString

    for site, lab in LAT.correction_qubits.values():
        assert expectation(s, PauliString.single(22, site, lab)) == pytest.approx(1.0, abs=1e-12)


def test_projection_is_outcome_independent():
    a = new_ansatz(LAT10, 1, rng=np.random.default_rng(2), scale=1.0)
    u1, _ = run_circuit(build_u1_circuit(a), StateVector.zeros(10))
    states = []
    for outs in itertools.product((1, -1), repeat=2):
        s, regs = project_vortex_free(u1.copy(), LAT10, forced_outcomes=outs)
        assert [regs["w0"], regs["w1"]] == list(outs)
        states.append(s)
        for p in range(2):
            assert expectation(s, LAT10.plaquette_operator(p)) == pytest.approx(1.0, abs=1e-10)
    for s in states[1:]:
        assert abs(np.vdot(states[0].amplitudes, s.amplitudes)) ** 2 >= 1 - 1e-10


def test_projection_requires_eigenstate_of_correctors():
    s = StateVector(np.ones(1 << 10, dtype=complex) / 32)
    with pytest.raises(ProjectionError):
        project_vortex_free(s, LAT10, np.random.default_rng(0))


def test_sampled_outcomes_are_seeded():
    a = new_ansatz(LAT10, 1, rng=np.random.default_rng(5), scale=1.0)
    s1 = prepare_state(a, LAT10, np.random.default_rng(9))
    s2 = prepare_state(a, LAT10, np.random.default_rng(9))
    assert np.array_equal(s1.amplitudes, s2.amplitudes)


@pytest.mark.parametrize("mode,gen,name", [(PROJECTED, False, "non-abelian"), (PROJECTED, True, "heis-weak"),
                                           (PRODUCT, True, "heis-strong")])
def test_cost_matches_direct_simulation_and_gradient(mode, gen, name, gs10):
    rng = np.random.default_rng(4)
    a = new_ansatz(LAT10, 2, mode, gen, rng=rng, scale=1.0)
    psi = gs10[name]
    prob = PrepProblem(LAT10, psi, a)
    v = a.vector()
    free = a.free_mask()
    cost, grad = prob.cost_grad(v, free)
    assert cost == pytest.approx(infidelity(a, LAT10, PRESETS[name], psi), abs=1e-12)
    h = 1e-6
    idx = np.flatnonzero(free)
    for k in rng.choice(idx, size=12, replace=False):
        e = np.zeros_like(v)
        e[k] = h
        fd = (prob.cost_grad(v + e, free)[0] - prob.cost_grad(v - e, free)[0]) / (2 * h)
        assert grad[k] == pytest.approx(fd, abs=1e-7)


def test_deepening_keeps_the_state():
    a = new_ansatz(LAT10, 2, rng=np.random.default_rng(3), scale=1.0)
    b = a.deepened(4)
    assert b.depth == 4
    assert np.allclose(prepare_state(a, LAT10).amplitudes, prepare_state(b, LAT10).amplitudes, atol=1e-13)
    with pytest.raises(ValueError):
        b.deepened(1)


def test_json_round_trip():
    a = new_ansatz(LAT, 2, PROJECTED, True, rng=np.random.default_rng(0), scale=1.0)
    back = PrepAnsatz.from_json(a.to_json(LAT))
    assert np.array_equal(back.vector(), a.vector())
    assert back.fixed == a.fixed and back.generalized and back.depth == 2


def test_unknown_mode():
    with pytest.raises(ValueError):
        PrepAnsatz(2, 0, "bogus")


def test_trace_csv(tmp_path, gs10):
    res = optimize(new_ansatz(LAT10, 1), LAT10, PRESETS["non-abelian"], gs10["non-abelian"],
                   restarts=1, maxiter=20, stage1_maxiter=20)
    path = tmp_path / "trace.csv"
    res.write_trace(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["stage", "depth", "iteration", "C_GS"]
    assert {r[0] for r in rows[1:]} == {"stage1", "stage2"}
    assert set(res.per_depth) == {0, 1}


def test_optimisation_is_seed_reproducible(gs10):
    runs = [optimize(new_ansatz(LAT10, 1), LAT10, None, gs10["abelian"], restarts=2, seed=3, maxiter=30,
                     stage1_maxiter=30).ansatz.vector() for _ in range(2)]
    assert np.array_equal(runs[0], runs[1])


@pytest.mark.parametrize("name,depth,target", [("non-abelian", 5, 0.99), ("heis-weak", 3, 0.9),
                                               ("heis-strong", 3, 0.9)])
def test_smoke_fidelity_two_plaquettes(name, depth, target, gs10):
    spec = PRESETS[name]
    mode, gen = default_mode(spec)
    res = optimize(new_ansatz(LAT10, depth, mode, gen), LAT10, spec, gs10[name], restarts=4, seed=0)
    assert 1 - res.cost >= target
    assert 1 - infidelity(res.ansatz, LAT10, spec, gs10[name]) == pytest.approx(1 - res.cost, abs=1e-9)
    costs = [res.per_depth[d] for d in sorted(res.per_depth)]
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))
