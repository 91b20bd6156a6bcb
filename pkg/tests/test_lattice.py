import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kitaev_edge.lattice import (
    HoneycombLattice,
    LatticeError,
    assign_correction_qubits,
    build_lattice,
    build_t_junction,
    enumerate_triples,
)
from kitaev_edge.pauli import PauliString, commutes, multiply


def test_two_by_three_cluster_counts():
    lat = build_lattice(2, 3)
    assert lat.n_sites == 22
    assert len(lat.plaquettes) == 6
    assert len(lat.bonds) == 27
    assert len(lat.boundary_terms) == 12
    assert len(lat.triples) == 42


def test_single_hexagon_counts():
    lat = build_lattice(1, 1)
    assert (lat.n_sites, len(lat.bonds), len(lat.boundary_terms), len(lat.triples), len(lat.plaquettes)) == (
        6, 6, 6, 6, 1)


def test_bad_shape():
    with pytest.raises(LatticeError):
        build_lattice(0, 3)


@given(st.integers(1, 4), st.integers(1, 4))
def test_structural_invariants(rows, cols):
    lat = build_lattice(rows, cols)
    assert lat.n_sites == 2 * (rows * cols + rows + cols)
    degs = [lat.degree(s) for s in range(lat.n_sites)]
    assert set(degs) <= {2, 3}
    assert 3 * degs.count(3) + 2 * degs.count(2) == 2 * len(lat.bonds)
    for s in range(lat.n_sites):
        kinds = list(lat.neighbors(s))
        assert len(set(kinds)) == len(kinds)
    boundary = dict(lat.boundary_terms)
    assert set(boundary) == {s for s in range(lat.n_sites) if degs[s] == 2}
    for s, a in boundary.items():
        assert a not in lat.neighbors(s)
    # V - E + F = 2 with the outer face
    assert lat.n_sites - len(lat.bonds) + len(lat.plaquettes) + 1 == 2


@given(st.integers(1, 3), st.integers(1, 3))
def test_plaquettes_commute(rows, cols):
    lat = build_lattice(rows, cols)
    ws = [lat.plaquette_operator(p) for p in range(len(lat.plaquettes))]
    for w in ws:
        assert w.is_hermitian() and w.weight == 6
        assert all(commutes(w, v) for v in ws)
        assert all(commutes(w, lat.bond_pauli(b)) for b in lat.bonds)
        assert all(commutes(w, t) for t in enumerate_triples(lat))


def test_plaquette_label_pattern():
    lat = build_lattice(2, 3)
    for p in lat.plaquettes:
        assert p.labels == ("x", "y", "z", "x", "y", "z")


def test_triples_are_commutators_of_parent_bonds():
    lat = build_lattice(2, 3)
    for t in lat.triples:
        bond_a = PauliString.from_factors(lat.n_sites, {t.i: t.a.upper(), t.j: t.a.upper()})
        bond_b = PauliString.from_factors(lat.n_sites, {t.j: t.b.upper(), t.k: t.b.upper()})
        prod = multiply(bond_a, bond_b)
        trip = lat.triple_pauli(t)
        assert not commutes(bond_a, bond_b)
        assert prod.x == trip.x and prod.z == trip.z
        overlapping = [b for b in lat.bonds if lat.bond_pauli(b).support & trip.support]
        assert sum(not commutes(trip, lat.bond_pauli(b)) for b in overlapping) >= 2


def test_triple_pauli_patterns():
    lat = build_lattice(1, 1)
    for t in lat.triples:
        f = lat.triple_pauli(t).factors
        expected = {("x", "y"): "XZY", ("x", "z"): "XYZ", ("y", "z"): "YXZ"}[(t.a, t.b)]
        assert f[t.i] + f[t.j] + f[t.k] == expected


def test_correction_qubits_on_two_by_three_cluster():
    lat = build_lattice(2, 3)
    corr = assign_correction_qubits(lat)
    assert len(corr) == 6
    owners = {}
    for p in lat.plaquettes:
        for s in p.sites:
            owners[s] = owners.get(s, 0) + 1
    ws = [lat.plaquette_operator(p) for p in range(6)]
    for p, (site, lab) in corr.items():
        pc = PauliString.single(lat.n_sites, site, lab)
        assert owners[site] == 1 and lat.degree(site) == 2
        for q, w in enumerate(ws):
            assert commutes(pc, w) == (q != p)
    assert corr == assign_correction_qubits(build_lattice(2, 3))
    # the bottom-centre site is the corrector of its plaquette
    assert lat.bottom_center() in {s for s, _ in corr.values()}


def test_correction_qubits_single_hexagon():
    lat = build_lattice(1, 1)
    ((site, lab),) = assign_correction_qubits(lat).values()
    assert site == 0 and lab == "Z"


def test_interior_plaquette_has_no_corrector():
    with pytest.raises(LatticeError):
        assign_correction_qubits(build_lattice(3, 3))


def test_t_junction():
    tj = build_t_junction()
    assert tj.n_sites == 4 and len(tj.bonds) == 3 and len(tj.triples) == 3
    assert {b.kind for b in tj.bonds} == {"x", "y", "z"}
    assert all(t.j == 0 for t in tj.triples)
    assert not tj.boundary_terms
    assert 2 ** tj.n_sites == 16


def test_boundary_walk_and_edge_sites():
    lat = build_lattice(2, 3)
    walk = lat.boundary_walk
    assert len(walk) == len(set(walk)) == 18
    pos = lat.positions
    assert pos[walk[1]][0] > pos[walk[0]][0]
    c = lat.bottom_center()
    assert abs(pos[c][1] - min(p[1] for p in pos)) < 1e-12
    edge = lat.edge_sites()
    assert edge["C"] == c
    assert pos[edge["L"]][0] < pos[c][0] < pos[edge["R"]][0]
    assert lat.left_of(lat.right_of(c, 3), 3) == c


def test_json_round_trip():
    lat = build_lattice(2, 3)
    back = HoneycombLattice.from_dict(json.loads(lat.to_json()))
    assert back.to_json() == lat.to_json()
    assert back.boundary_walk == lat.boundary_walk


def test_text_dump():
    text = build_lattice(1, 1).to_text()
    lines = text.strip().splitlines()
    assert lines[0].startswith("#") and len(lines) == 7
