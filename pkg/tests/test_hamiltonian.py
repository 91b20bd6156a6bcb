import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from kitaev_edge.hamiltonian import (
    PRESETS,
    ConvergenceError,
    HamiltonianSpec,
    PauliSum,
    apply_hamiltonian,
    build_hamiltonian,
    ground_state_exact,
    trotter_evolve,
)
from kitaev_edge.lattice import build_lattice
from kitaev_edge.pauli import PauliString, commutes
from kitaev_edge.sector import SectorBasis
from kitaev_edge.statevector import StateVector, expectation

from .conftest import random_state

LAT10 = build_lattice(1, 2)


def _plaquettes(lat):
    return [lat.plaquette_operator(p) for p in range(len(lat.plaquettes))]


def test_term_counts():
    lat = build_lattice(2, 3)
    assert len(build_hamiltonian(PRESETS["non-abelian"], lat)) == 81
    hs = build_hamiltonian(PRESETS["heis-weak"], lat)
    assert len(hs) == 135
    for c, p, cat in hs.items():
        if cat.endswith("-bonds"):
            kind = cat[0]
            assert c == pytest.approx(PRESETS["heis-weak"].K(kind) + 0.05)
    bare = HamiltonianSpec(-1, -1, -1, 0.0, 0.0, 0.0)
    assert len(build_hamiltonian(bare, build_lattice(1, 1))) == 6


def test_spec_rejects_non_finite():
    with pytest.raises(ValueError):
        HamiltonianSpec(V=float("nan"))


def test_presets():
    assert PRESETS["non-abelian"] == HamiltonianSpec(-1, -1, -1, 0.3, 0.1, 0.0)
    ab = PRESETS["abelian"]
    assert ab.K_x == ab.K_y == pytest.approx(ab.K_z / 6) and ab.K_z == -1
    assert PRESETS["heis-weak"].J == 0.05 and PRESETS["heis-strong"].J == 0.2


def test_plaquette_symmetry_only_without_heisenberg():
    lat = build_lattice(2, 3)
    ws = _plaquettes(lat)
    h0 = build_hamiltonian(PRESETS["non-abelian"], lat)
    assert all(h0.commutes_with(w) for w in ws)
    hj = build_hamiltonian(PRESETS["heis-weak"], lat)
    assert not any(hj.commutes_with(w) for w in ws)


def test_matvec_matches_dense(rng):
    hs = build_hamiltonian(PRESETS["heis-strong"], LAT10)
    dense = hs.to_dense()
    assert np.allclose(dense, dense.conj().T)
    a, b = random_state(10, rng), random_state(10, rng)
    assert np.allclose(hs.matvec(a), dense @ a, atol=1e-12)
    lin = hs.matvec(2.0 * a - 1j * b)
    assert np.allclose(lin, 2.0 * hs.matvec(a) - 1j * hs.matvec(b), atol=1e-12)


def test_category_sums_total(rng):
    hs = build_hamiltonian(PRESETS["heis-weak"], LAT10)
    s = StateVector(random_state(10, rng))
    cats = hs.category_expectations(s)
    assert set(cats) == {"x-bonds", "y-bonds", "z-bonds", "heisenberg", "three-body", "field"}
    assert sum(cats.values()) == pytest.approx(hs.expectation(s), abs=1e-12)


def test_dense_oracle_single_hexagon():
    lat = build_lattice(1, 1)
    hs = build_hamiltonian(HamiltonianSpec(-1, -1, -1, 0, 0, 0), lat)
    gs = ground_state_exact(hs)
    assert gs.energy == pytest.approx(np.linalg.eigvalsh(hs.to_dense())[0], abs=1e-10)
    out = apply_hamiltonian(hs, gs.state)
    assert np.allclose(out.amplitudes, gs.energy * gs.state.amplitudes, atol=1e-10)


def test_lanczos_path_and_plaquettes():
    hs = build_hamiltonian(PRESETS["non-abelian"], LAT10)
    gs = ground_state_exact(hs)
    assert gs.residual <= 1e-8
    assert gs.energy == pytest.approx(np.linalg.eigvalsh(hs.to_dense())[0], abs=1e-9)
    for w in _plaquettes(LAT10):
        assert expectation(gs.state, w) == pytest.approx(1.0, abs=1e-6)


def test_lanczos_is_seed_deterministic():
    hs = build_hamiltonian(PRESETS["abelian"], LAT10)
    a, b = ground_state_exact(hs, seed=3), ground_state_exact(hs, seed=3)
    assert np.array_equal(a.state.amplitudes, b.state.amplitudes)


def test_non_convergence_reports_residual():
    lat = build_lattice(2, 2)
    hs = build_hamiltonian(PRESETS["non-abelian"], lat)
    with pytest.raises(ConvergenceError):
        ground_state_exact(hs, maxiter=2)


def test_sector_basis_matches_full_space(rng):
    lat = build_lattice(1, 2)
    ws = _plaquettes(lat)
    hs = build_hamiltonian(PRESETS["non-abelian"], lat)
    basis = SectorBasis(ws, lat.n_sites)
    m = basis.restrict(hs).toarray()
    assert basis.dim == 1 << (lat.n_sites - len(ws))
    assert np.allclose(m, m.conj().T)
    a = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    v = basis.embed(a)
    assert np.linalg.norm(v) == pytest.approx(np.linalg.norm(a))
    assert np.allclose(basis.reduce(hs.matvec(v)), m @ a, atol=1e-12)
    full = ground_state_exact(hs)
    sect = ground_state_exact(hs, symmetries=ws)
    assert sect.energy == pytest.approx(full.energy, abs=1e-10)
    assert abs(np.vdot(full.state.amplitudes, sect.state.amplitudes)) ** 2 == pytest.approx(1.0, abs=1e-8)


def test_sector_rejects_non_symmetries():
    lat = build_lattice(1, 1)
    ws = _plaquettes(lat)
    with pytest.raises(ValueError):
        ground_state_exact(build_hamiltonian(PRESETS["heis-weak"], lat), symmetries=ws)
    with pytest.raises(ValueError):
        SectorBasis([ws[0], ws[0]], lat.n_sites)


def test_text_round_trip():
    hs = build_hamiltonian(PRESETS["heis-weak"], LAT10)
    back = PauliSum.from_text(hs.to_text())
    assert back.to_text() == hs.to_text()


def test_terms_merge_and_signs():
    z0 = PauliString.single(2, 0, "Z")
    hs = PauliSum(2, [(1.0, z0), (0.5, z0), (2.0, -z0)])
    assert len(hs) == 1 and hs.coeffs[0] == pytest.approx(-0.5)
    assert len(PauliSum(2, [(1.0, z0), (-1.0, z0)])) == 0


def test_trotter_reference_matches_expm(rng):
    lat = build_lattice(1, 1)
    hs = build_hamiltonian(PRESETS["non-abelian"], lat)
    v = random_state(6, rng)
    exact = sla.expm(-0.5j * hs.to_dense()) @ v
    amps = v.copy()
    trotter_evolve(hs, amps, 0.5, dt=0.01)
    assert np.linalg.norm(amps - exact) < 1e-3


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_energy_is_bounded_below(seed):
    hs = build_hamiltonian(PRESETS["abelian"], build_lattice(1, 1))
    e0 = np.linalg.eigvalsh(hs.to_dense())[0]
    s = StateVector(random_state(6, np.random.default_rng(seed)))
    assert hs.expectation(s) >= e0 - 1e-12


def test_hamiltonian_terms_are_hermitian_and_commute_checks():
    lat = build_lattice(1, 2)
    hs = build_hamiltonian(PRESETS["heis-strong"], lat)
    assert all(p.is_hermitian() for p in hs.terms)
    w = lat.plaquette_operator(0)
    assert any(not commutes(p, w) for p in hs.terms)
